#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgi/data.hpp"
#include "rgi/error.hpp"
#include "rgi/eval.hpp"
#include "rgi/trainer.hpp"

namespace rgi {

using json = nlohmann::json;

struct DatasetManifest {
    std::string edges;
    std::string features;
    std::string labels;
    TaskKind task = TaskKind::Multiclass;
    bool l1_normalize = true;
    FeatureFormat features_format = FeatureFormat::Csv;
    std::optional<int64_t> num_classes;
    std::string name;
};

struct EvalSettings {
    int64_t num_seeds = 20;
    SplitFractions fractions;
};

struct RunConfig {
    TrainConfig train;
    std::string dataset_manifest;
    std::string output_dir;
    int64_t checkpoint_every = 0;  // 0: only at the end
    EvalSettings eval;
};

namespace detail {

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j;
}

inline void reject_unknown(const json& obj, const std::set<std::string>& known,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

template <typename U>
U get_or(const json& obj, const std::string& key, U fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<U>();
    } catch (const json::exception& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

template <typename U>
U get_required(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return obj.at(key).get<U>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline std::string resolve(const std::string& base_file, const std::string& rel) {
    const std::filesystem::path p(rel);
    if (p.is_absolute()) return rel;
    return (std::filesystem::path(base_file).parent_path() / p).string();
}

}  // namespace detail

inline TaskKind parse_task(const std::string& s) {
    if (s == "multiclass") return TaskKind::Multiclass;
    if (s == "multilabel") return TaskKind::Multilabel;
    throw ConfigError("task must be 'multiclass' or 'multilabel', got '" + s + "'");
}

inline ShiftKind parse_shift_kind(const std::string& s) {
    if (s == "mean_adj") return ShiftKind::MeanAdjacency;
    if (s == "sym_norm_adj") return ShiftKind::SymNormAdjacency;
    if (s == "sym_norm_lap") return ShiftKind::SymNormLaplacian;
    throw ConfigError("propagation kind must be one of mean_adj, sym_norm_adj, sym_norm_lap");
}

inline NormKind parse_norm_kind(const std::string& s) {
    if (s == "none") return NormKind::None;
    if (s == "batch") return NormKind::Batch;
    if (s == "layer") return NormKind::Layer;
    throw ConfigError("encoder norm must be one of none, batch, layer");
}

// Relative paths inside a manifest resolve against the manifest's directory.
inline DatasetManifest load_manifest(const std::string& path) {
    const json j = detail::load_json(path);
    detail::reject_unknown(
        j, {"edges", "features", "labels", "task", "l1_normalize", "num_classes", "name"}, path);
    DatasetManifest m;
    m.edges = detail::resolve(path, detail::get_required<std::string>(j, "edges", path));
    m.features = detail::resolve(path, detail::get_required<std::string>(j, "features", path));
    m.labels = detail::resolve(path, detail::get_required<std::string>(j, "labels", path));
    m.task = parse_task(detail::get_required<std::string>(j, "task", path));
    m.l1_normalize = detail::get_or<bool>(j, "l1_normalize", true);
    if (j.contains("num_classes")) m.num_classes = j.at("num_classes").get<int64_t>();
    m.name = detail::get_or<std::string>(j, "name",
                                         std::filesystem::path(path).stem().string());
    for (const std::string& p : {m.edges, m.features, m.labels}) {
        if (!std::filesystem::exists(p)) {
            throw ConfigError(path + ": referenced file does not exist: " + p);
        }
    }
    return m;
}

inline GraphDataset load_dataset(const DatasetManifest& m) {
    GraphDataset ds =
        load_dataset(m.edges, m.features, m.labels, m.task, m.l1_normalize, m.num_classes);
    ds.name = m.name;
    return ds;
}

// Run configuration: unknown keys are rejected and every referenced path must
// exist at validation time. The encoder input dimension always comes from the
// dataset. Defaults mirror the hyperparameter table: K = 1, D = 512,
// lr = 1e-4, warmup = n_epochs / 10.
inline RunConfig load_run_config(const std::string& path) {
    const json j = detail::load_json(path);
    detail::reject_unknown(j,
                           {"dataset", "output_dir", "seed", "precision", "encoder", "pred_hidden",
                            "propagation", "loss", "schedule", "optimizer", "p_local",
                            "checkpoint_every", "eval"},
                           path);
    RunConfig rc;
    rc.dataset_manifest =
        detail::resolve(path, detail::get_required<std::string>(j, "dataset", path));
    if (!std::filesystem::exists(rc.dataset_manifest)) {
        throw ConfigError(path + ": dataset manifest does not exist: " + rc.dataset_manifest);
    }
    rc.output_dir = detail::resolve(path, detail::get_required<std::string>(j, "output_dir", path));
    rc.train.seed = detail::get_or<uint64_t>(j, "seed", 0);
    const std::string prec = detail::get_or<std::string>(j, "precision", "double");
    if (prec == "double") {
        rc.train.precision = Precision::Double;
    } else if (prec == "single") {
        rc.train.precision = Precision::Single;
    } else {
        throw ConfigError("precision must be 'double' or 'single'");
    }

    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        detail::reject_unknown(e, {"num_layers", "hidden_dim", "output_dim", "p_input", "norm"},
                               "encoder");
        rc.train.encoder.num_layers = detail::get_or<int64_t>(e, "num_layers", 2);
        rc.train.encoder.hidden_dim = detail::get_or<int64_t>(e, "hidden_dim", 1024);
        rc.train.encoder.output_dim = detail::get_or<int64_t>(e, "output_dim", 512);
        rc.train.encoder.p_input = detail::get_or<double>(e, "p_input", 0.5);
        rc.train.encoder.norm = parse_norm_kind(detail::get_or<std::string>(e, "norm", "batch"));
    }
    rc.train.pred_hidden = detail::get_or<int64_t>(j, "pred_hidden", 0);

    if (j.contains("propagation")) {
        const json& p = j.at("propagation");
        detail::reject_unknown(p, {"kind", "steps"}, "propagation");
        rc.train.propagation.kind =
            parse_shift_kind(detail::get_or<std::string>(p, "kind", "sym_norm_adj"));
        rc.train.propagation.steps = detail::get_or<int64_t>(p, "steps", 1);
    }

    if (j.contains("loss")) {
        const json& l = j.at("loss");
        detail::reject_unknown(l, {"lambda1", "lambda2", "lambda3"}, "loss");
        rc.train.loss.lambda1 = detail::get_or<double>(l, "lambda1", 10.0);
        rc.train.loss.lambda2 = detail::get_or<double>(l, "lambda2", 5.0);
        rc.train.loss.lambda3 = detail::get_or<double>(l, "lambda3", 1.0);
    }

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        detail::reject_unknown(s, {"base_lr", "n_warmup", "n_epochs"}, "schedule");
        rc.train.schedule.base_lr = detail::get_or<double>(s, "base_lr", 1e-4);
        rc.train.schedule.n_epochs = detail::get_or<int64_t>(s, "n_epochs", 1000);
        rc.train.schedule.n_warmup =
            detail::get_or<int64_t>(s, "n_warmup", rc.train.schedule.n_epochs / 10);
    }

    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        detail::reject_unknown(o, {"weight_decay", "beta1", "beta2", "eps"}, "optimizer");
        rc.train.adam.weight_decay = detail::get_or<double>(o, "weight_decay", 1e-5);
        rc.train.adam.beta1 = detail::get_or<double>(o, "beta1", 0.9);
        rc.train.adam.beta2 = detail::get_or<double>(o, "beta2", 0.999);
        rc.train.adam.eps = detail::get_or<double>(o, "eps", 1e-8);
    }

    rc.train.p_local = detail::get_or<double>(j, "p_local", 0.0);
    rc.checkpoint_every = detail::get_or<int64_t>(j, "checkpoint_every", 0);

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        detail::reject_unknown(e, {"num_seeds", "fractions"}, "eval");
        rc.eval.num_seeds = detail::get_or<int64_t>(e, "num_seeds", 20);
        if (e.contains("fractions")) {
            const auto f = e.at("fractions").get<std::vector<double>>();
            if (f.size() != 3) throw ConfigError("eval.fractions must have 3 entries");
            rc.eval.fractions.train = f[0];
            rc.eval.fractions.val = f[1];
        }
    }
    return rc;
}

}  // namespace rgi
