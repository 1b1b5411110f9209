#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "rgi/data.hpp"
#include "rgi/encoder.hpp"
#include "rgi/loss.hpp"
#include "rgi/tape.hpp"
#include "rgi/trainer.hpp"

namespace rgi::selfcheck {

// Optional corruption hook used by the test harness to prove the checks can
// fail: when set, it may perturb an analytic gradient before comparison.
struct FaultInjector {
    std::function<void(std::vector<double>&)> corrupt_gradient;
};

namespace detail {

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Relative error with an absolute floor, so structurally-zero gradients are
// compared against finite-difference roundoff instead of each other.
inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

// Central finite differences over every watched input of a scalar function.
// `eval` must be a pure function of the tensors it is given.
inline double max_grad_error(const std::function<Tensor<double>(Tape<double>*,
                                                                std::vector<Tensor<double>>&)>& eval,
                             std::vector<Tensor<double>> inputs, const FaultInjector* fault) {
    Tape<double> tape;
    std::vector<Tensor<double>> bound = inputs;
    for (auto& t : bound) t = tape.watch(t);
    Tensor<double> loss = eval(&tape, bound);
    auto grads = tape.backward(loss);

    double worst = 0.0;
    bool corrupted = false;
    for (size_t which = 0; which < inputs.size(); ++which) {
        std::vector<double> analytic = grads.at(bound[which].node()).values();
        if (fault && fault->corrupt_gradient && !corrupted) {
            fault->corrupt_gradient(analytic);
            corrupted = true;
        }
        for (int64_t i = 0; i < inputs[which].size(); ++i) {
            const double orig = inputs[which].data()[i];
            const double eps = 1e-5 * std::max(std::abs(orig), 1.0);
            auto eval_at = [&](double v) {
                std::vector<Tensor<double>> probe = inputs;
                probe[which].mut()[i] = v;
                return eval(nullptr, probe)(0, 0);
            };
            const double fd = (eval_at(orig + eps) - eval_at(orig - eps)) / (2.0 * eps);
            worst = std::max(worst, rel_err(analytic[static_cast<size_t>(i)], fd));
        }
    }
    return worst;
}

inline Tensor<double> random_tensor(int64_t rows, int64_t cols, Rng& rng, double scale = 1.0) {
    Tensor<double> t(rows, cols);
    double* p = t.mut();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = scale * rng.normal();
    return t;
}

// Dense mirror of a shift operator, built straight from the graph.
inline std::vector<double> dense_shift(const SparseGraph& g, ShiftKind kind) {
    const int64_t n = g.num_nodes();
    std::vector<double> a(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (const int64_t* p = g.neighbors_begin(i); p != g.neighbors_end(i); ++p) {
            a[static_cast<size_t>(i * n + *p)] = 1.0;
        }
    }
    std::vector<double> deg(static_cast<size_t>(n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += a[static_cast<size_t>(i * n + j)];
    }
    std::vector<double> s(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            const double aij = a[static_cast<size_t>(i * n + j)];
            double v = 0.0;
            switch (kind) {
                case ShiftKind::MeanAdjacency:
                    v = deg[static_cast<size_t>(i)] > 0 ? aij / deg[static_cast<size_t>(i)] : 0.0;
                    break;
                case ShiftKind::SymNormAdjacency:
                    v = aij > 0 ? aij / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)])
                                : 0.0;
                    break;
                case ShiftKind::SymNormLaplacian:
                    v = aij > 0 ? -aij / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)])
                                : 0.0;
                    if (i == j) v += 1.0;
                    break;
            }
            s[static_cast<size_t>(i * n + j)] = v;
        }
    }
    return s;
}

inline SparseGraph random_graph(int64_t n, double p, Rng& rng) {
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            if (rng.bernoulli(p)) edges.emplace_back(i, j);
        }
    }
    return build_csr(edges, n);
}

inline double shift_oracle_error(ShiftKind kind, int64_t steps) {
    Rng rng(99 + static_cast<uint64_t>(kind) * 17 + static_cast<uint64_t>(steps));
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 2 + static_cast<int64_t>(rng.bounded(9));
        const SparseGraph g = random_graph(n, 0.4, rng);
        const auto s = shift_operator<double>(g, kind);
        const Tensor<double> x = random_tensor(n, 3, rng);
        Tensor<double> got = x;
        for (int64_t k = 0; k < steps; ++k) got = spmm(s, got);

        const auto dense = dense_shift(g, kind);
        std::vector<double> cur(x.values());
        for (int64_t k = 0; k < steps; ++k) {
            std::vector<double> next(static_cast<size_t>(n * 3), 0.0);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t l = 0; l < n; ++l)
                    for (int64_t c = 0; c < 3; ++c)
                        next[static_cast<size_t>(i * 3 + c)] +=
                            dense[static_cast<size_t>(i * n + l)] * cur[static_cast<size_t>(l * 3 + c)];
            cur = next;
        }
        for (int64_t i = 0; i < got.size(); ++i) {
            worst = std::max(worst, std::abs(got.data()[i] - cur[static_cast<size_t>(i)]));
        }
    }
    return worst;
}

}  // namespace detail

// Runs the built-in verification battery: per-primitive gradient checks
// against central finite differences, shift-operator results against a dense
// oracle, and the analytic loss cases. Prints one line per check.
inline bool run(std::ostream& out, const FaultInjector* fault = nullptr) {
    using detail::CheckResult;
    std::vector<CheckResult> results;
    auto add = [&results](const std::string& name, double err, double tol) {
        results.push_back({name, err, tol, err <= tol});
    };
    Rng rng(7);

    {
        auto a = detail::random_tensor(4, 3, rng);
        auto b = detail::random_tensor(3, 5, rng);
        add("grad-matmul",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::sum_squares(t, ad::matmul(t, in[0], in[1]));
                },
                {a, b}, fault),
            1e-6);
    }
    {
        auto a = detail::random_tensor(5, 3, rng);
        auto b = detail::random_tensor(5, 4, rng);
        add("grad-matmul-tn",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::sum_squares(t, ad::matmul_tn(t, in[0], in[1]));
                },
                {a, b}, fault),
            1e-6);
    }
    {
        // keep inputs away from the kink so the FD probe stays one-sided
        auto a = detail::random_tensor(4, 4, rng);
        double* p = a.mut();
        for (int64_t i = 0; i < a.size(); ++i) {
            if (std::abs(p[i]) < 1e-3) p[i] = p[i] < 0 ? -0.1 : 0.1;
        }
        add("grad-relu",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::sum_squares(t, ad::relu(t, in[0]));
                },
                {a}, fault),
            1e-6);
    }
    {
        // compare against a random target: a plain sum of squares is nearly
        // invariant to the input after standardization, which starves the
        // finite differences of signal
        auto a = detail::random_tensor(6, 3, rng);
        auto gamma = detail::random_tensor(1, 3, rng, 0.3);
        auto beta = detail::random_tensor(1, 3, rng, 0.3);
        auto target = detail::random_tensor(6, 3, rng);
        add("grad-batch-norm",
            detail::max_grad_error(
                [&target](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::mse(t, ad::batch_norm(t, in[0], in[1], in[2], 1e-5), target);
                },
                {a, gamma, beta}, fault),
            1e-5);
    }
    {
        auto a = detail::random_tensor(5, 4, rng);
        auto gamma = detail::random_tensor(1, 4, rng, 0.3);
        auto beta = detail::random_tensor(1, 4, rng, 0.3);
        auto target = detail::random_tensor(5, 4, rng);
        add("grad-layer-norm",
            detail::max_grad_error(
                [&target](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::mse(t, ad::layer_norm(t, in[0], in[1], in[2], 1e-5), target);
                },
                {a, gamma, beta}, fault),
            1e-5);
    }
    {
        auto a = detail::random_tensor(6, 5, rng);
        add("grad-dropout",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    Rng mask_rng(1234);  // same mask on every evaluation
                    return ad::sum_squares(t, ad::dropout(t, in[0], 0.4, mask_rng, true));
                },
                {a}, fault),
            1e-6);
    }
    {
        Rng grng(41);
        const SparseGraph g = detail::random_graph(8, 0.4, grng);
        const auto shift = shift_operator<double>(g, ShiftKind::MeanAdjacency);
        auto u = detail::random_tensor(8, 3, rng);
        add("grad-propagate-mean",
            detail::max_grad_error(
                [&shift](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::sum_squares(t, ad::propagate(t, in[0], {ShiftKind::MeanAdjacency, 2}, shift));
                },
                {u}, fault),
            1e-6);
    }
    {
        auto a = detail::random_tensor(4, 3, rng);
        auto b = detail::random_tensor(4, 3, rng);
        add("grad-mse",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::mse(t, in[0], in[1]);
                },
                {a, b}, fault),
            1e-6);
    }
    {
        auto z = detail::random_tensor(7, 4, rng);
        add("grad-variance-loss",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return variance_loss(t, in[0]);
                },
                {z}, fault),
            1e-6);
    }
    {
        auto z = detail::random_tensor(7, 4, rng);
        add("grad-covariance-loss",
            detail::max_grad_error(
                [](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return covariance_loss(t, in[0]);
                },
                {z}, fault),
            1e-6);
    }
    {
        auto logits = detail::random_tensor(6, 3, rng);
        const std::vector<int64_t> labels{0, 2, 1, 1, 0, 2};
        add("grad-softmax-ce",
            detail::max_grad_error(
                [&labels](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::softmax_cross_entropy(t, in[0], labels);
                },
                {logits}, fault),
            1e-6);
    }
    {
        auto logits = detail::random_tensor(5, 4, rng);
        Tensor<double> targets(5, 4);
        double* p = targets.mut();
        for (int64_t i = 0; i < targets.size(); ++i) p[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        add("grad-sigmoid-bce",
            detail::max_grad_error(
                [&targets](Tape<double>* t, std::vector<Tensor<double>>& in) {
                    return ad::sigmoid_bce(t, in[0], targets);
                },
                {logits}, fault),
            1e-6);
    }
    {
        // full model loss wrt a sampled weight from each parameter tensor
        SbmConfig scfg;
        scfg.num_blocks = 2;
        scfg.nodes_per_block = 8;
        scfg.p_in = 0.5;
        scfg.p_out = 0.1;
        scfg.feature_dim = 5;
        scfg.noise_sigma = 0.5;
        scfg.seed = 3;
        const GraphDataset ds = generate_sbm(scfg);
        EncoderConfig ecfg;
        ecfg.num_layers = 2;
        ecfg.input_dim = 5;
        ecfg.hidden_dim = 6;
        ecfg.output_dim = 4;
        ecfg.p_input = 0.0;
        const KipfShift<double> conv = kipf_shift<double>(ds.graph);
        const auto shift = shift_operator<double>(ds.graph, ShiftKind::SymNormAdjacency);
        const Tensor<double> x = ds.features;
        const LossWeights w;
        ModelParams<double> params = init_params<double>(ecfg, 4, 11);

        auto loss_with = [&](Tape<double>* t, ModelParams<double>& p) {
            Rng dummy(0);
            Tensor<double> u = encoder_forward(t, x, conv, p, ecfg, dummy, true);
            Tensor<double> v = ad::propagate(t, u, {ShiftKind::SymNormAdjacency, 1}, shift);
            Tensor<double> v_hat = predictor_forward(t, u, PredictorHead::Phi, p);
            Tensor<double> u_hat = predictor_forward(t, v, PredictorHead::Psi, p);
            return total_loss(t, u, v, u_hat, v_hat, w).total;
        };

        Tape<double> tape;
        ModelParams<double> bound = params;
        std::vector<int> nodes;
        bound.for_each([&](const std::string&, Tensor<double>& t) {
            t = tape.watch(t);
            nodes.push_back(t.node());
        });
        auto grads = tape.backward(loss_with(&tape, bound));

        double worst = 0.0;
        bool corrupted = false;
        size_t pi = 0;
        Rng pick(5);
        params.for_each([&](const std::string&, Tensor<double>& t) {
            std::vector<double> analytic = grads.at(nodes[pi]).values();
            if (fault && fault->corrupt_gradient && !corrupted) {
                fault->corrupt_gradient(analytic);
                corrupted = true;
            }
            for (int rep = 0; rep < 3; ++rep) {
                const int64_t i = static_cast<int64_t>(pick.bounded(static_cast<uint64_t>(t.size())));
                const double orig = t.data()[i];
                const double eps = 1e-5 * std::max(std::abs(orig), 1.0);
                auto eval_at = [&](double v) {
                    const double saved = t.data()[i];
                    t.mut()[i] = v;
                    const double out = loss_with(nullptr, params)(0, 0);
                    t.mut()[i] = saved;
                    return out;
                };
                const double fd = (eval_at(orig + eps) - eval_at(orig - eps)) / (2.0 * eps);
                worst = std::max(worst, detail::rel_err(analytic[static_cast<size_t>(i)], fd));
            }
            ++pi;
        });
        add("grad-rgi-loss", worst, 1e-4);
    }

    add("oracle-shift-mean", detail::shift_oracle_error(ShiftKind::MeanAdjacency, 1), 1e-12);
    add("oracle-shift-sym", detail::shift_oracle_error(ShiftKind::SymNormAdjacency, 1), 1e-12);
    add("oracle-shift-laplacian", detail::shift_oracle_error(ShiftKind::SymNormLaplacian, 1), 1e-12);
    add("oracle-propagate-k5", detail::shift_oracle_error(ShiftKind::SymNormAdjacency, 5), 1e-12);

    {
        const Tensor<double> z = Tensor<double>::full(4, 3, 2.5);
        const double err = std::abs(variance_loss<double>(nullptr, z)(0, 0) - 1.0);
        add("loss-constant-case", err, 0.0);
    }
    {
        // exactly unit-variance, exactly orthogonal integer columns
        const Tensor<double> z(5, 2, {-1, 1, -1, -1, 0, 0, 1, 1, 1, -1});
        const double verr = std::abs(variance_loss<double>(nullptr, z)(0, 0));
        const double cerr = std::abs(covariance_loss<double>(nullptr, z)(0, 0));
        add("loss-whitened-case", std::max(verr, cerr), 0.0);
    }
    {
        const Tensor<double> a(2, 2, {1, 0, -1, 0});
        const Tensor<double> cov = sample_covariance<double>(nullptr, a);
        double err = std::max({std::abs(cov(0, 0) - 2.0), std::abs(cov(0, 1)), std::abs(cov(1, 0)),
                               std::abs(cov(1, 1))});
        err = std::max(err, std::abs(variance_loss<double>(nullptr, a)(0, 0) - 1.0));
        const Tensor<double> b(2, 2, {1, 1, -1, -1});
        err = std::max(err, std::abs(covariance_loss<double>(nullptr, b)(0, 0) - 4.0));
        add("loss-hand-2x2", err, 1e-12);
    }

    bool all_pass = true;
    char buf[160];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof(buf), "%-24s %s  max err %.3e (tol %.1e)\n", r.name.c_str(),
                      r.pass ? "PASS" : "FAIL", r.max_error, r.tolerance);
        out << buf;
        all_pass = all_pass && r.pass;
    }
    out << (all_pass ? "all checks passed" : "CHECKS FAILED") << " (" << results.size()
        << " checks)\n";
    return all_pass;
}

}  // namespace rgi::selfcheck
