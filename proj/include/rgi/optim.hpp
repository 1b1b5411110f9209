#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rgi/error.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

struct ScheduleConfig {
    double base_lr = 1e-4;
    int64_t n_warmup = 100;
    int64_t n_epochs = 1000;

    void validate() const {
        if (base_lr <= 0) throw ConfigError("schedule: base_lr must be positive");
        if (n_warmup < 1 || n_warmup > n_epochs) {
            throw ConfigError("schedule: need 0 < n_warmup <= n_epochs");
        }
    }
};

// Linear warmup to base_lr over n_warmup epochs, then cosine decay to zero
// over the remaining ones. Continuous at the junction: the ramp ends at
// base_lr and the cosine starts there.
inline double lr_at(int64_t epoch, const ScheduleConfig& s) {
    s.validate();
    if (epoch < 0 || epoch >= s.n_epochs) {
        throw InvalidEpoch("epoch " + std::to_string(epoch) + " outside [0, " +
                           std::to_string(s.n_epochs) + ")");
    }
    if (epoch < s.n_warmup) {
        return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.n_warmup);
    }
    const double span = static_cast<double>(s.n_epochs - s.n_warmup);
    if (span == 0) return s.base_lr;
    const double progress = static_cast<double>(epoch - s.n_warmup) / span;
    return s.base_lr * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // coupled L2, added to the gradient
};

// Bias-corrected Adam with per-parameter moment accumulators keyed by name.
template <typename T>
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    int64_t step_count() const { return t_; }

    // One update over a parameter set. `grads` must hold one gradient per
    // parameter name; shapes must match. The step counter increments once per
    // call, not per parameter.
    void step(std::vector<std::pair<std::string, Tensor<T>*>>& params,
              const std::unordered_map<std::string, Tensor<T>>& grads, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, param] : params) {
            const auto it = grads.find(name);
            if (it == grads.end()) throw Error("adam: missing gradient for " + name);
            const Tensor<T>& g = it->second;
            if (!same_shape(*param, g)) {
                throw ShapeError("adam: gradient shape mismatch for " + name);
            }
            auto& m = moment1_[name];
            auto& v = moment2_[name];
            if (m.empty()) {
                m.assign(static_cast<size_t>(param->size()), T(0));
                v.assign(static_cast<size_t>(param->size()), T(0));
            }
            T* p = param->mut();
            const T* gp = g.data();
            const T b1 = static_cast<T>(cfg_.beta1);
            const T b2 = static_cast<T>(cfg_.beta2);
            const T wd = static_cast<T>(cfg_.weight_decay);
            const T eps = static_cast<T>(cfg_.eps);
            const T lr_t = static_cast<T>(lr);
            const T inv_bc1 = static_cast<T>(1.0 / bc1);
            const T inv_bc2 = static_cast<T>(1.0 / bc2);
            for (int64_t i = 0; i < param->size(); ++i) {
                const T grad = gp[i] + wd * p[i];
                m[static_cast<size_t>(i)] = b1 * m[static_cast<size_t>(i)] + (T(1) - b1) * grad;
                v[static_cast<size_t>(i)] = b2 * v[static_cast<size_t>(i)] + (T(1) - b2) * grad * grad;
                const T m_hat = m[static_cast<size_t>(i)] * inv_bc1;
                const T v_hat = v[static_cast<size_t>(i)] * inv_bc2;
                p[i] -= lr_t * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::unordered_map<std::string, std::vector<T>> moment1_;
    std::unordered_map<std::string, std::vector<T>> moment2_;
};

}  // namespace rgi
