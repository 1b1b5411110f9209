// Command-line front end: train, embed, eval, selfcheck, gen-sbm.
// Exit codes: 0 success, 1 user/config error, 2 internal invariant violation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rgi/rgi.hpp"

namespace fs = std::filesystem;

namespace {

rgi::GraphDataset load_from_config(const rgi::RunConfig& rc) {
    const rgi::DatasetManifest manifest = rgi::load_manifest(rc.dataset_manifest);
    return rgi::load_dataset(manifest);
}

template <typename T>
int run_train(const rgi::RunConfig& rc, const rgi::GraphDataset& ds) {
    rgi::TrainConfig cfg = rc.train;
    cfg.encoder.input_dim = ds.feature_dim();

    fs::create_directories(rc.output_dir);
    const std::string metrics_path = (fs::path(rc.output_dir) / "metrics.csv").string();
    const std::string ckpt_path = (fs::path(rc.output_dir) / "checkpoint.rgi").string();

    int64_t last_logged = -1;
    auto result = rgi::train<T>(
        ds, cfg, [&](const rgi::EpochMetrics& m, const rgi::ModelParams<T>& params) {
            if (rc.checkpoint_every > 0 && (m.epoch + 1) % rc.checkpoint_every == 0) {
                // rolling checkpoint, overwritten in place
                rgi::save_checkpoint(ckpt_path, rgi::params_to_matrices(params));
            }
            const int64_t decile = cfg.schedule.n_epochs >= 10 ? cfg.schedule.n_epochs / 10 : 1;
            if (m.epoch % decile == 0 && m.epoch != last_logged) {
                last_logged = m.epoch;
                std::printf("epoch %lld  lr %.3e  total %.6f\n", static_cast<long long>(m.epoch),
                            m.lr, m.total);
            }
        });

    rgi::write_metrics_csv(metrics_path, result.history);
    rgi::save_checkpoint(ckpt_path, rgi::params_to_matrices(result.params));
    std::printf("wrote %s and %s\n", metrics_path.c_str(), ckpt_path.c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    const rgi::RunConfig rc = rgi::load_run_config(config_path);
    const rgi::GraphDataset ds = load_from_config(rc);
    if (rc.train.precision == rgi::Precision::Single) return run_train<float>(rc, ds);
    return run_train<double>(rc, ds);
}

template <typename T>
rgi::Tensor<double> embeddings_for(const rgi::RunConfig& rc, const rgi::GraphDataset& ds,
                                   const std::string& checkpoint_path) {
    rgi::EncoderConfig ecfg = rc.train.encoder;
    ecfg.input_dim = ds.feature_dim();
    rgi::ModelParams<T> params =
        rgi::init_params<T>(ecfg, rc.train.predictor_hidden(), rc.train.seed);
    rgi::params_from_matrices(params, rgi::load_checkpoint(checkpoint_path));
    return rgi::extract_embeddings(ds, params, ecfg).template cast<double>();
}

int cmd_embed(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& out_path) {
    const rgi::RunConfig rc = rgi::load_run_config(config_path);
    const rgi::GraphDataset ds = load_from_config(rc);
    const rgi::Tensor<double> emb = rc.train.precision == rgi::Precision::Single
                                        ? embeddings_for<float>(rc, ds, checkpoint_path)
                                        : embeddings_for<double>(rc, ds, checkpoint_path);
    std::ofstream out(out_path);
    if (!out) throw rgi::Error("cannot write embeddings: " + out_path);
    char buf[64];
    for (int64_t i = 0; i < emb.rows(); ++i) {
        for (int64_t j = 0; j < emb.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", emb(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    std::printf("wrote %lld x %lld embeddings to %s\n", static_cast<long long>(emb.rows()),
                static_cast<long long>(emb.cols()), out_path.c_str());
    return 0;
}

rgi::Tensor<double> load_embedding_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw rgi::ParseError("cannot open embeddings: " + path);
    std::vector<double> values;
    int64_t rows = 0, cols = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        int64_t count = 0;
        while (std::getline(ss, field, ',')) {
            values.push_back(std::stod(field));
            ++count;
        }
        if (cols < 0) cols = count;
        if (count != cols) throw rgi::ParseError(path + ": ragged embedding rows");
        ++rows;
    }
    return rgi::Tensor<double>(rows, cols, std::move(values));
}

int cmd_eval(const std::string& config_path, const std::string& embeddings_path,
             int64_t num_seeds) {
    const rgi::RunConfig rc = rgi::load_run_config(config_path);
    const rgi::GraphDataset ds = load_from_config(rc);
    const rgi::Tensor<double> raw = load_embedding_csv(embeddings_path);
    if (raw.rows() != ds.num_nodes()) {
        throw rgi::CountMismatch("embeddings have " + std::to_string(raw.rows()) +
                                 " rows but the dataset has " + std::to_string(ds.num_nodes()) +
                                 " nodes");
    }
    const rgi::Tensor<double> emb = rgi::l2_normalize_rows(raw);
    const char* metric = ds.task == rgi::TaskKind::Multiclass ? "accuracy" : "micro_f1";
    rgi::LabelView labels;
    labels.classes = &ds.labels;
    labels.matrix = &ds.label_matrix;

    std::vector<double> scores;
    for (int64_t seed = 0; seed < num_seeds; ++seed) {
        const rgi::Split split = rgi::random_split(ds.num_nodes(), rc.eval.fractions,
                                                   static_cast<uint64_t>(seed));
        const rgi::LinearProbe probe =
            rgi::fit_linear_probe(emb, labels, split, ds.task, static_cast<uint64_t>(seed));
        const double score = rgi::evaluate(probe, emb, labels, split.test_idx);
        scores.push_back(score);
        std::printf("%s,%lld,%lld,%s,%.9g\n", ds.name.c_str(), static_cast<long long>(seed),
                    static_cast<long long>(seed), metric, score);
    }
    double mean = 0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0;
    for (double s : scores) var += (s - mean) * (s - mean);
    const double stddev = scores.size() > 1
                              ? std::sqrt(var / static_cast<double>(scores.size() - 1))
                              : 0.0;
    std::printf("mean=%.4f std=%.4f\n", mean, stddev);
    return 0;
}

int cmd_gen_sbm(const rgi::SbmConfig& cfg, const std::string& out_dir) {
    const rgi::GraphDataset ds = rgi::generate_sbm(cfg);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    rgi::save_dataset(ds, (dir / "edges.txt").string(), (dir / "features.csv").string(),
                      (dir / "labels.txt").string());
    nlohmann::json manifest = {
        {"edges", "edges.txt"},   {"features", "features.csv"}, {"labels", "labels.txt"},
        {"task", "multiclass"},   {"l1_normalize", false},      {"name", "sbm"},
    };
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    std::printf("wrote SBM dataset (%lld nodes, %lld undirected edges) to %s\n",
                static_cast<long long>(ds.num_nodes()),
                static_cast<long long>(ds.graph.num_edges()), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized Graph Infomax: self-supervised node embeddings"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_path, embeddings_path;
    int64_t num_seeds = 20;
    bool inject_fault = false;

    auto* train = app.add_subcommand("train", "train an encoder from a JSON run config");
    train->add_option("--config", config_path, "run config JSON")->required();

    auto* embed = app.add_subcommand("embed", "write eval-mode node embeddings as CSV");
    embed->add_option("--config", config_path, "run config JSON")->required();
    embed->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    embed->add_option("--out", out_path, "output CSV path")->required();

    auto* eval = app.add_subcommand("eval", "linear-probe evaluation of stored embeddings");
    eval->add_option("--config", config_path, "run config JSON")->required();
    eval->add_option("--embeddings", embeddings_path, "embeddings CSV")->required();
    eval->add_option("--seeds", num_seeds, "number of probe/split seeds");

    auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in verification battery");
    selfcheck->add_flag("--inject-fault", inject_fault,
                        "corrupt one analytic gradient to prove the checks can fail");

    rgi::SbmConfig sbm;
    std::string sbm_out = "sbm_data";
    auto* gen = app.add_subcommand("gen-sbm", "generate a synthetic stochastic block model dataset");
    gen->add_option("--out", sbm_out, "output directory");
    gen->add_option("--blocks", sbm.num_blocks, "number of blocks");
    gen->add_option("--per-block", sbm.nodes_per_block, "nodes per block");
    gen->add_option("--p-in", sbm.p_in, "intra-block edge probability");
    gen->add_option("--p-out", sbm.p_out, "inter-block edge probability");
    gen->add_option("--dim", sbm.feature_dim, "feature dimension");
    gen->add_option("--signal", sbm.signal, "block mean magnitude");
    gen->add_option("--noise", sbm.noise_sigma, "feature noise std");
    gen->add_option("--seed", sbm.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path);
        if (embed->parsed()) return cmd_embed(config_path, checkpoint_path, out_path);
        if (eval->parsed()) return cmd_eval(config_path, embeddings_path, num_seeds);
        if (selfcheck->parsed()) {
            rgi::selfcheck::FaultInjector injector;
            rgi::selfcheck::FaultInjector* fault = nullptr;
            if (inject_fault) {
                injector.corrupt_gradient = [](std::vector<double>& g) {
                    if (!g.empty()) g[0] += 0.5;
                };
                fault = &injector;
            }
            return rgi::selfcheck::run(std::cout, fault) ? 0 : 1;
        }
        if (gen->parsed()) return cmd_gen_sbm(sbm, sbm_out);
    } catch (const rgi::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
