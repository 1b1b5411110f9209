#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rgi/data.hpp"
#include "rgi/encoder.hpp"
#include "rgi/error.hpp"
#include "rgi/loss.hpp"
#include "rgi/optim.hpp"
#include "rgi/shift.hpp"
#include "rgi/tape.hpp"

namespace rgi {

enum class Precision { Single, Double };

struct TrainConfig {
    EncoderConfig encoder;
    int64_t pred_hidden = 0;  // 0 -> defaults to encoder.output_dim
    PropagationConfig propagation;
    LossWeights loss;
    ScheduleConfig schedule;
    AdamConfig adam;
    double p_local = 0.0;  // dropout on the propagation branch only
    uint64_t seed = 0;
    Precision precision = Precision::Double;

    void validate() const {
        encoder.validate();
        loss.validate();
        schedule.validate();
        if (propagation.steps < 1) throw ConfigError("propagation: steps must be >= 1");
        if (p_local < 0.0 || p_local >= 1.0) throw ConfigError("p_local must be in [0, 1)");
        if (pred_hidden < 0) throw ConfigError("pred_hidden must be >= 0");
    }

    int64_t predictor_hidden() const {
        return pred_hidden == 0 ? encoder.output_dim : pred_hidden;
    }
};

struct EpochMetrics {
    int64_t epoch = 0;
    double lr = 0;
    double rec = 0;
    double var = 0;
    double cov = 0;
    double total = 0;
};

template <typename T>
struct TrainResult {
    ModelParams<T> params;
    std::vector<EpochMetrics> history;
};

// One line per epoch, 9 significant digits.
inline void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metrics file: " + path);
    out << "epoch,lr,rec,var,cov,total\n";
    char buf[160];
    for (const auto& m : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(m.epoch), m.lr, m.rec, m.var, m.cov, m.total);
        out << buf;
    }
}

// Full training loop: one full-graph gradient step per epoch. The propagated
// view is built from a dropout copy of U, while the U fed to the predictor
// and the loss stays intact; gradients flow back through the propagation.
// on_epoch observes the metrics and the post-step parameters (for periodic
// checkpointing).
template <typename T>
TrainResult<T> train(
    const GraphDataset& ds, const TrainConfig& cfg,
    const std::function<void(const EpochMetrics&, const ModelParams<T>&)>& on_epoch = nullptr) {
    cfg.validate();
    if (ds.feature_dim() != cfg.encoder.input_dim) {
        throw ConfigError("dataset features are " + std::to_string(ds.feature_dim()) +
                          "-dimensional, encoder expects " + std::to_string(cfg.encoder.input_dim));
    }

    const Tensor<T> x = ds.features.template cast<T>();
    const KipfShift<T> conv = kipf_shift<T>(ds.graph);
    const ShiftMatrix<T> shift = shift_operator<T>(ds.graph, cfg.propagation.kind);

    ModelParams<T> params = init_params<T>(cfg.encoder, cfg.predictor_hidden(), cfg.seed);
    AdamState<T> adam(cfg.adam);
    Rng rng(cfg.seed + 0x5eed);

    TrainResult<T> result;
    result.history.reserve(static_cast<size_t>(cfg.schedule.n_epochs));

    for (int64_t epoch = 0; epoch < cfg.schedule.n_epochs; ++epoch) {
        Tape<T> tape;

        ModelParams<T> bound = params;
        std::vector<std::pair<std::string, Tensor<T>*>> param_ptrs;
        std::unordered_map<std::string, int> node_of;
        bound.for_each([&](const std::string& name, Tensor<T>& t) {
            t = tape.watch(t);
            node_of.emplace(name, t.node());
        });
        params.for_each([&param_ptrs](const std::string& name, Tensor<T>& t) {
            param_ptrs.emplace_back(name, &t);
        });

        Tensor<T> u = encoder_forward(&tape, x, conv, bound, cfg.encoder, rng, /*training=*/true);
        Tensor<T> u_dropped = ad::dropout(&tape, u, cfg.p_local, rng, /*training=*/true);
        Tensor<T> v = ad::propagate(&tape, u_dropped, cfg.propagation, shift);
        Tensor<T> v_hat = predictor_forward(&tape, u, PredictorHead::Phi, bound);
        Tensor<T> u_hat = predictor_forward(&tape, v, PredictorHead::Psi, bound);
        LossBreakdown<T> loss = total_loss(&tape, u, v, u_hat, v_hat, cfg.loss);

        if (!std::isfinite(loss.total_value())) {
            throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        }

        auto grads_by_node = tape.backward(loss.total);
        std::unordered_map<std::string, Tensor<T>> grads;
        for (const auto& [name, node] : node_of) {
            grads.emplace(name, std::move(grads_by_node.at(node)));
        }

        const double lr = lr_at(epoch, cfg.schedule);
        adam.step(param_ptrs, grads, lr);

        EpochMetrics m{epoch, lr, loss.rec, loss.var, loss.cov, loss.total_value()};
        result.history.push_back(m);
        if (on_epoch) on_epoch(m, params);
    }

    result.params = std::move(params);
    return result;
}

// Eval-mode embeddings: dropout off, batch statistics still come from the
// full graph, so the output is a pure function of (graph, features, params).
template <typename T>
Tensor<T> extract_embeddings(const GraphDataset& ds, const ModelParams<T>& params,
                             const EncoderConfig& cfg) {
    const Tensor<T> x = ds.features.template cast<T>();
    const KipfShift<T> conv = kipf_shift<T>(ds.graph);
    Rng rng(0);  // unused: dropout is disabled in eval mode
    return encoder_forward<T>(nullptr, x, conv, params, cfg, rng, /*training=*/false);
}

}  // namespace rgi
