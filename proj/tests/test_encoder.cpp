#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "rgi/encoder.hpp"
#include "rgi/graph.hpp"

using rgi::EncoderConfig;
using rgi::ModelParams;
using rgi::Tape;
using rgi::Tensor;

namespace {

EncoderConfig small_config(int64_t d_in = 5, int64_t hidden = 6, int64_t d_out = 4) {
    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.input_dim = d_in;
    cfg.hidden_dim = hidden;
    cfg.output_dim = d_out;
    cfg.p_input = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("init_params is deterministic per seed") {
    const auto cfg = small_config();
    auto a = rgi::init_params<double>(cfg, 4, 7);
    auto b = rgi::init_params<double>(cfg, 4, 7);
    a.for_each([&b](const std::string& name, Tensor<double>& t) {
        b.for_each([&](const std::string& other, Tensor<double>& u) {
            if (name == other) REQUIRE(t.values() == u.values());
        });
    });
}

TEST_CASE("glorot bound: fan_in = fan_out = 6 gives samples in [-1, 1]") {
    EncoderConfig cfg = small_config(6, 6, 6);
    const auto p = rgi::init_params<double>(cfg, 6, 99);
    for (const auto& w : p.gcn_w) {
        REQUIRE(w.rows() == 6);
        for (int64_t i = 0; i < w.size(); ++i) {
            REQUIRE(w.data()[i] >= -1.0);
            REQUIRE(w.data()[i] <= 1.0);
        }
    }
}

TEST_CASE("large init is centered near zero") {
    EncoderConfig cfg = small_config(512, 512, 512);
    cfg.num_layers = 1;
    const auto p = rgi::init_params<double>(cfg, 512, 3);
    const auto& w = p.gcn_w[0];  // 512 x 512
    double mean = 0;
    for (int64_t i = 0; i < w.size(); ++i) mean += w.data()[i];
    mean /= static_cast<double>(w.size());
    REQUIRE(std::abs(mean) <= 0.01);
}

TEST_CASE("biases start at zero, norm affine at identity") {
    const auto p = rgi::init_params<double>(small_config(), 4, 5);
    for (const auto& b : p.gcn_b)
        for (int64_t i = 0; i < b.size(); ++i) REQUIRE(b.data()[i] == 0.0);
    for (int64_t i = 0; i < p.norm_gamma[0].size(); ++i) REQUIRE(p.norm_gamma[0].data()[i] == 1.0);
    for (int64_t i = 0; i < p.norm_beta[0].size(); ++i) REQUIRE(p.norm_beta[0].data()[i] == 0.0);
}

TEST_CASE("kipf shift adds self-loops: diagonal is 1/(deg+1) and symmetric") {
    rgi::Rng rng(21);
    const auto edges = oracle::random_edges(9, 0.4, rng);
    const auto g = rgi::build_csr(edges, 9);
    const auto s = rgi::kipf_shift<double>(g);
    // materialize
    std::vector<double> dense(81, 0.0);
    for (int64_t i = 0; i < 9; ++i) {
        for (int64_t k = s.mat.offsets()[i]; k < s.mat.offsets()[i + 1]; ++k) {
            dense[static_cast<size_t>(i * 9 + s.mat.cols()[static_cast<size_t>(k)])] =
                s.mat.vals()[static_cast<size_t>(k)];
        }
    }
    for (int64_t i = 0; i < 9; ++i) {
        REQUIRE(dense[static_cast<size_t>(i * 9 + i)] ==
                Catch::Approx(1.0 / (static_cast<double>(g.degree(i)) + 1.0)));
        for (int64_t j = 0; j < 9; ++j) {
            REQUIRE(dense[static_cast<size_t>(i * 9 + j)] ==
                    Catch::Approx(dense[static_cast<size_t>(j * 9 + i)]));
        }
    }
}

TEST_CASE("gcn_layer on an edgeless graph is x w + b") {
    const auto g = rgi::build_csr({}, 3);
    const auto s = rgi::kipf_shift<double>(g);
    rgi::Rng rng(22);
    const auto x = oracle::random_tensor(3, 2, rng);
    const auto w = oracle::random_tensor(2, 4, rng);
    const auto b = oracle::random_tensor(1, 4, rng);
    const auto out = rgi::gcn_layer<double>(nullptr, x, s, w, b);
    const auto xw = rgi::gemm_nn(x, w);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j)
            REQUIRE(out(i, j) == Catch::Approx(xw(i, j) + b(0, j)).margin(1e-15));
}

TEST_CASE("gcn_layer single-edge hand case") {
    const auto g = rgi::build_csr({{0, 1}}, 2);
    const auto s = rgi::kipf_shift<double>(g);
    const Tensor<double> x(2, 2, {2, 0, 0, 2});
    const Tensor<double> w(2, 2, {1, 0, 0, 1});
    const Tensor<double> b(1, 2);
    const auto out = rgi::gcn_layer<double>(nullptr, x, s, w, b);
    // KipfShift = [[1/2, 1/2], [1/2, 1/2]]
    for (int64_t i = 0; i < 4; ++i) REQUIRE(out.data()[i] == Catch::Approx(1.0));
}

TEST_CASE("gcn_layer gradient wrt weights matches finite differences") {
    rgi::Rng rng(23);
    const auto edges = oracle::random_edges(7, 0.4, rng);
    const auto g = rgi::build_csr(edges, 7);
    const auto s = rgi::kipf_shift<double>(g);
    const auto x = oracle::random_tensor(7, 3, rng);
    auto w = oracle::random_tensor(3, 4, rng);
    auto b = oracle::random_tensor(1, 4, rng);

    Tape<double> tape;
    auto wb = tape.watch(w);
    auto bb = tape.watch(b);
    auto grads =
        tape.backward(rgi::ad::sum_squares(&tape, rgi::gcn_layer(&tape, x, s, wb, bb)));

    auto loss_at = [&](const Tensor<double>& wt, const Tensor<double>& bt) {
        return rgi::ad::sum_squares<double>(nullptr, rgi::gcn_layer<double>(nullptr, x, s, wt, bt))(0, 0);
    };
    double worst = 0;
    for (int64_t i = 0; i < w.size(); ++i) {
        auto f = [&](const std::vector<double>& vals) {
            return loss_at(Tensor<double>(3, 4, vals), b);
        };
        const double fd = oracle::fd_partial(f, w.values(), static_cast<size_t>(i));
        worst = std::max(worst, oracle::rel_err(grads.at(wb.node()).data()[i], fd));
    }
    for (int64_t i = 0; i < b.size(); ++i) {
        auto f = [&](const std::vector<double>& vals) {
            return loss_at(w, Tensor<double>(1, 4, vals));
        };
        const double fd = oracle::fd_partial(f, b.values(), static_cast<size_t>(i));
        worst = std::max(worst, oracle::rel_err(grads.at(bb.node()).data()[i], fd));
    }
    REQUIRE(worst <= 1e-6);
}

TEST_CASE("eval-mode encoder forward is a pure function") {
    rgi::Rng rng(24);
    const auto edges = oracle::random_edges(10, 0.3, rng);
    const auto g = rgi::build_csr(edges, 10);
    const auto s = rgi::kipf_shift<double>(g);
    const auto cfg = small_config();
    const auto params = rgi::init_params<double>(cfg, 4, 1);
    const auto x = oracle::random_tensor(10, 5, rng);

    rgi::Rng r1(0), r2(999);
    const auto u1 = rgi::encoder_forward<double>(nullptr, x, s, params, cfg, r1, false);
    const auto u2 = rgi::encoder_forward<double>(nullptr, x, s, params, cfg, r2, false);
    REQUIRE(u1.values() == u2.values());
    REQUIRE(u1.rows() == 10);
    REQUIRE(u1.cols() == 4);
}

TEST_CASE("zero parameters produce zero embeddings") {
    rgi::Rng rng(25);
    const auto edges = oracle::random_edges(8, 0.4, rng);
    const auto g = rgi::build_csr(edges, 8);
    const auto s = rgi::kipf_shift<double>(g);
    const auto cfg = small_config();
    auto params = rgi::init_params<double>(cfg, 4, 1);
    params.for_each([](const std::string& name, Tensor<double>& t) {
        if (name.find("gamma") != std::string::npos) return;  // gamma stays 1
        double* p = t.mut();
        for (int64_t i = 0; i < t.size(); ++i) p[i] = 0.0;
    });
    const auto x = oracle::random_tensor(8, 5, rng);
    rgi::Rng r(0);
    const auto u = rgi::encoder_forward<double>(nullptr, x, s, params, cfg, r, false);
    for (int64_t i = 0; i < u.size(); ++i) REQUIRE(u.data()[i] == 0.0);
}

TEST_CASE("encoder is permutation equivariant") {
    rgi::Rng rng(26);
    const int64_t n = 15;
    const auto edges = oracle::random_edges(n, 0.3, rng);
    const auto cfg = small_config();
    const auto params = rgi::init_params<double>(cfg, 4, 2);
    const auto x = oracle::random_tensor(n, 5, rng);

    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    std::vector<std::pair<int64_t, int64_t>> p_edges;
    for (auto [i, j] : edges) p_edges.emplace_back(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    Tensor<double> px(n, 5);
    double* pp = px.mut();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < 5; ++j) pp[perm[static_cast<size_t>(i)] * 5 + j] = x(i, j);

    rgi::Rng r(0);
    const auto u = rgi::encoder_forward<double>(nullptr, x, rgi::kipf_shift<double>(rgi::build_csr(edges, n)),
                                                params, cfg, r, false);
    const auto pu = rgi::encoder_forward<double>(
        nullptr, px, rgi::kipf_shift<double>(rgi::build_csr(p_edges, n)), params, cfg, r, false);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
            REQUIRE(pu(perm[static_cast<size_t>(i)], j) == Catch::Approx(u(i, j)).margin(1e-9));
        }
    }
}

TEST_CASE("three-layer encoder applies norm and relu to both hidden layers") {
    EncoderConfig cfg = small_config();
    cfg.num_layers = 3;
    const auto params = rgi::init_params<double>(cfg, 4, 3);
    REQUIRE(params.gcn_w.size() == 3);
    REQUIRE(params.norm_gamma.size() == 2);
    REQUIRE(params.gcn_w[0].rows() == 5);
    REQUIRE(params.gcn_w[1].rows() == 6);
    REQUIRE(params.gcn_w[2].cols() == 4);

    rgi::Rng rng(27);
    const auto edges = oracle::random_edges(9, 0.4, rng);
    const auto g = rgi::build_csr(edges, 9);
    const auto x = oracle::random_tensor(9, 5, rng);
    rgi::Rng r(0);
    const auto u =
        rgi::encoder_forward<double>(nullptr, x, rgi::kipf_shift<double>(g), params, cfg, r, false);
    REQUIRE(u.cols() == 4);
}

TEST_CASE("predictor_forward basics") {
    const auto cfg = small_config();
    auto params = rgi::init_params<double>(cfg, 4, 4);

    // zero input, zero biases -> zero output
    Tensor<double> z(3, 4);
    const auto out = rgi::predictor_forward<double>(nullptr, z, rgi::PredictorHead::Phi, params);
    for (int64_t i = 0; i < out.size(); ++i) REQUIRE(out.data()[i] == 0.0);

    // identity weights on a non-negative input pass it through
    auto eye = [](int64_t n) {
        Tensor<double> m(n, n);
        double* p = m.mut();
        for (int64_t i = 0; i < n; ++i) p[i * n + i] = 1.0;
        return m;
    };
    params.phi.w0 = eye(4);
    params.phi.w1 = eye(4);
    Tensor<double> nonneg(2, 4, {0.5, 1, 0, 2, 3, 0.25, 1, 0});
    const auto through =
        rgi::predictor_forward<double>(nullptr, nonneg, rgi::PredictorHead::Phi, params);
    REQUIRE(through.values() == nonneg.values());
}

TEST_CASE("predictor gradients match finite differences") {
    rgi::Rng rng(28);
    const auto cfg = small_config();
    auto params = rgi::init_params<double>(cfg, 4, 5);
    const auto z = oracle::random_tensor(6, 4, rng);

    Tape<double> tape;
    auto w0 = tape.watch(params.phi.w0);
    auto b0 = tape.watch(params.phi.b0);
    auto w1 = tape.watch(params.phi.w1);
    auto b1 = tape.watch(params.phi.b1);
    ModelParams<double> bound = params;
    bound.phi.w0 = w0;
    bound.phi.b0 = b0;
    bound.phi.w1 = w1;
    bound.phi.b1 = b1;
    auto grads = tape.backward(rgi::ad::sum_squares(
        &tape, rgi::predictor_forward(&tape, z, rgi::PredictorHead::Phi, bound)));

    auto loss_with = [&](ModelParams<double>& p) {
        return rgi::ad::sum_squares<double>(
            nullptr, rgi::predictor_forward<double>(nullptr, z, rgi::PredictorHead::Phi, p))(0, 0);
    };
    double worst = 0;
    const std::vector<std::pair<Tensor<double>*, int>> checks{
        {&params.phi.w0, w0.node()}, {&params.phi.b0, b0.node()},
        {&params.phi.w1, w1.node()}, {&params.phi.b1, b1.node()}};
    for (auto [tensor, node] : checks) {
        for (int64_t i = 0; i < tensor->size(); ++i) {
            const double orig = tensor->data()[i];
            const double eps = 1e-5 * std::max(std::abs(orig), 1.0);
            tensor->mut()[i] = orig + eps;
            const double hi = loss_with(params);
            tensor->mut()[i] = orig - eps;
            const double lo = loss_with(params);
            tensor->mut()[i] = orig;
            const double fd = (hi - lo) / (2 * eps);
            worst = std::max(worst, oracle::rel_err(grads.at(node).data()[i], fd));
        }
    }
    REQUIRE(worst <= 1e-6);
}

TEST_CASE("checkpoint round-trips parameters by name") {
    namespace fs = std::filesystem;
    const auto cfg = small_config();
    const auto params = rgi::init_params<double>(cfg, 4, 31);
    const auto dir = fs::temp_directory_path() / "rgi_encoder_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.rgi").string();
    rgi::save_checkpoint(path, rgi::params_to_matrices(params));

    auto restored = rgi::init_params<double>(cfg, 4, 777);  // different init, then overwritten
    rgi::params_from_matrices(restored, rgi::load_checkpoint(path));
    params.for_each([&restored](const std::string& name, const Tensor<double>& t) {
        restored.for_each([&](const std::string& other, Tensor<double>& u) {
            if (name == other) REQUIRE(t.values() == u.values());
        });
    });

    // expected checkpoint names, zero-based per layer
    const auto mats = rgi::load_checkpoint(path);
    std::vector<std::string> names;
    for (const auto& [n, m] : mats) names.push_back(n);
    REQUIRE(std::find(names.begin(), names.end(), "gcn.0.w") != names.end());
    REQUIRE(std::find(names.begin(), names.end(), "bn.0.gamma") != names.end());
    REQUIRE(std::find(names.begin(), names.end(), "phi.1.b") != names.end());
    REQUIRE(std::find(names.begin(), names.end(), "psi.0.w") != names.end());
}

TEST_CASE("corrupt checkpoint headers are rejected") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "rgi_encoder_test";
    fs::create_directories(dir);
    const std::string path = (dir / "bad.rgi").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE123456";
    }
    REQUIRE_THROWS_WITH(rgi::load_checkpoint(path),
                        Catch::Matchers::ContainsSubstring("bad checkpoint header"));
}
