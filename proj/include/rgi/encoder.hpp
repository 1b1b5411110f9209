#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rgi/checkpoint.hpp"
#include "rgi/error.hpp"
#include "rgi/rng.hpp"
#include "rgi/shift.hpp"
#include "rgi/tape.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

enum class NormKind { None, Batch, Layer };

inline const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::None: return "none";
        case NormKind::Batch: return "batch";
        case NormKind::Layer: return "layer";
    }
    return "?";
}

struct EncoderConfig {
    int64_t num_layers = 2;
    int64_t input_dim = 0;
    int64_t hidden_dim = 1024;
    int64_t output_dim = 512;
    double p_input = 0.5;
    NormKind norm = NormKind::Batch;  // applied after every non-final layer

    void validate() const {
        if (num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
        if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
            throw ConfigError("encoder: dimensions must be >= 1");
        }
        if (p_input < 0.0 || p_input >= 1.0) throw ConfigError("encoder: p_input must be in [0, 1)");
    }

    int64_t layer_in(int64_t l) const { return l == 0 ? input_dim : hidden_dim; }
    int64_t layer_out(int64_t l) const { return l == num_layers - 1 ? output_dim : hidden_dim; }
};

// Two-layer MLP head; hidden width defaults to the embedding width.
template <typename T>
struct PredictorParams {
    Tensor<T> w0, b0, w1, b1;
};

template <typename T>
struct ModelParams {
    std::vector<Tensor<T>> gcn_w;    // one per layer
    std::vector<Tensor<T>> gcn_b;
    std::vector<Tensor<T>> norm_gamma;  // one per non-final layer
    std::vector<Tensor<T>> norm_beta;
    PredictorParams<T> phi;  // predicts the propagated view from U
    PredictorParams<T> psi;  // predicts U back from the propagated view

    // Visits every parameter with its checkpoint name; mutation through the
    // reference is allowed.
    template <typename F>
    void for_each(F&& f) {
        for (size_t l = 0; l < gcn_w.size(); ++l) {
            f("gcn." + std::to_string(l) + ".w", gcn_w[l]);
            f("gcn." + std::to_string(l) + ".b", gcn_b[l]);
            if (l < norm_gamma.size()) {
                f("bn." + std::to_string(l) + ".gamma", norm_gamma[l]);
                f("bn." + std::to_string(l) + ".beta", norm_beta[l]);
            }
        }
        f("phi.0.w", phi.w0);
        f("phi.0.b", phi.b0);
        f("phi.1.w", phi.w1);
        f("phi.1.b", phi.b1);
        f("psi.0.w", psi.w0);
        f("psi.0.b", psi.b0);
        f("psi.1.w", psi.w1);
        f("psi.1.b", psi.b1);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&f](const std::string& name, const Tensor<T>& t) { f(name, t); });
    }
};

namespace detail {

// Glorot-uniform fill: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(int64_t rows, int64_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor<T> w(rows, cols);
    T* p = w.mut();
    for (int64_t i = 0; i < w.size(); ++i) p[i] = static_cast<T>(rng.uniform(-a, a));
    return w;
}

}  // namespace detail

// Weights Glorot-uniform, biases zero, norm affine at identity. Deterministic
// for a given seed.
template <typename T = double>
ModelParams<T> init_params(const EncoderConfig& cfg, int64_t pred_hidden, uint64_t seed) {
    cfg.validate();
    if (pred_hidden < 1) throw ConfigError("predictor hidden width must be >= 1");
    Rng rng(seed);
    ModelParams<T> p;
    for (int64_t l = 0; l < cfg.num_layers; ++l) {
        p.gcn_w.push_back(detail::glorot_uniform<T>(cfg.layer_in(l), cfg.layer_out(l), rng));
        p.gcn_b.push_back(Tensor<T>(1, cfg.layer_out(l)));
        if (l < cfg.num_layers - 1) {
            p.norm_gamma.push_back(Tensor<T>::full(1, cfg.layer_out(l), T(1)));
            p.norm_beta.push_back(Tensor<T>(1, cfg.layer_out(l)));
        }
    }
    const int64_t d = cfg.output_dim;
    p.phi = PredictorParams<T>{detail::glorot_uniform<T>(d, pred_hidden, rng),
                               Tensor<T>(1, pred_hidden),
                               detail::glorot_uniform<T>(pred_hidden, d, rng), Tensor<T>(1, d)};
    p.psi = PredictorParams<T>{detail::glorot_uniform<T>(d, pred_hidden, rng),
                               Tensor<T>(1, pred_hidden),
                               detail::glorot_uniform<T>(pred_hidden, d, rng), Tensor<T>(1, d)};
    return p;
}

// One graph convolution: spmm(s, x w) + b.
template <typename T>
Tensor<T> gcn_layer(Tape<T>* tape, const Tensor<T>& x, const KipfShift<T>& s, const Tensor<T>& w,
                    const Tensor<T>& b) {
    return ad::add_rowvec(tape, ad::spmm(tape, s, ad::matmul(tape, x, w)), b);
}

// Full encoder: input dropout, then GCN layers with norm + ReLU after every
// layer except the last, which stays bare.
template <typename T>
Tensor<T> encoder_forward(Tape<T>* tape, const Tensor<T>& x, const KipfShift<T>& s,
                          const ModelParams<T>& params, const EncoderConfig& cfg, Rng& rng,
                          bool training) {
    if (x.cols() != cfg.input_dim) {
        throw ShapeError("encoder: features have " + std::to_string(x.cols()) +
                         " columns, config expects " + std::to_string(cfg.input_dim));
    }
    Tensor<T> h = ad::dropout(tape, x, cfg.p_input, rng, training);
    for (int64_t l = 0; l < cfg.num_layers; ++l) {
        h = gcn_layer(tape, h, s, params.gcn_w[static_cast<size_t>(l)],
                      params.gcn_b[static_cast<size_t>(l)]);
        if (l == cfg.num_layers - 1) break;
        const auto& gamma = params.norm_gamma[static_cast<size_t>(l)];
        const auto& beta = params.norm_beta[static_cast<size_t>(l)];
        switch (cfg.norm) {
            case NormKind::Batch:
                h = ad::batch_norm(tape, h, gamma, beta, static_cast<T>(1e-5));
                break;
            case NormKind::Layer:
                h = ad::layer_norm(tape, h, gamma, beta, static_cast<T>(1e-5));
                break;
            case NormKind::None:
                break;
        }
        h = ad::relu(tape, h);
    }
    return h;
}

enum class PredictorHead { Phi, Psi };

// z W0 + b0 -> ReLU -> W1 + b1; no normalization in the heads.
template <typename T>
Tensor<T> predictor_forward(Tape<T>* tape, const Tensor<T>& z, PredictorHead which,
                            const ModelParams<T>& params) {
    const PredictorParams<T>& p = which == PredictorHead::Phi ? params.phi : params.psi;
    Tensor<T> h = ad::relu(tape, ad::add_rowvec(tape, ad::matmul(tape, z, p.w0), p.b0));
    return ad::add_rowvec(tape, ad::matmul(tape, h, p.w1), p.b1);
}

template <typename T>
NamedMatrices params_to_matrices(const ModelParams<T>& params) {
    NamedMatrices mats;
    params.for_each([&mats](const std::string& name, const Tensor<T>& t) {
        mats.emplace_back(name, t.template cast<double>());
    });
    return mats;
}

template <typename T>
void params_from_matrices(ModelParams<T>& params, const NamedMatrices& mats) {
    params.for_each([&mats](const std::string& name, Tensor<T>& t) {
        for (const auto& [n, m] : mats) {
            if (n != name) continue;
            if (m.rows() != t.rows() || m.cols() != t.cols()) {
                throw CheckpointError("checkpoint matrix '" + name + "' is " +
                                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                      ", model expects " + std::to_string(t.rows()) + "x" +
                                      std::to_string(t.cols()));
            }
            t = m.template cast<T>();
            return;
        }
        throw CheckpointError("checkpoint is missing matrix '" + name + "'");
    });
}

}  // namespace rgi
