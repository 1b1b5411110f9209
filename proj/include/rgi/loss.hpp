#pragma once

#include <cstdint>

#include "rgi/error.hpp"
#include "rgi/tape.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

struct LossWeights {
    double lambda1 = 10.0;  // reconstruction
    double lambda2 = 5.0;   // variance
    double lambda3 = 1.0;   // covariance

    void validate() const {
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
            throw ConfigError("loss weights must be non-negative");
        }
    }
};

// Scalar values of the three terms plus the weighted total. When produced on
// a tape, `total` is the differentiable node.
template <typename T>
struct LossBreakdown {
    double rec = 0;
    double var = 0;
    double cov = 0;
    Tensor<T> total;

    double total_value() const { return static_cast<double>(total(0, 0)); }
};

// Sample covariance with mean-centered columns and divisor N-1;
// differentiable through the centering.
template <typename T>
Tensor<T> sample_covariance(Tape<T>* tape, const Tensor<T>& z) {
    if (z.rows() < 2) {
        throw BatchTooSmall("sample_covariance: need at least 2 rows, got " +
                            std::to_string(z.rows()));
    }
    Tensor<T> centered = ad::center_columns(tape, z);
    Tensor<T> gram = ad::matmul_tn(tape, centered, centered);
    return ad::scale(tape, gram, T(1) / static_cast<T>(z.rows() - 1));
}

// Pulls per-dimension variances toward one: (1/D) sum_n (1 - C_nn)^2.
template <typename T>
Tensor<T> variance_loss(Tape<T>* tape, const Tensor<T>& z) {
    return ad::variance_penalty(tape, sample_covariance(tape, z));
}

// Pushes cross-dimension covariances toward zero: (1/D) sum_{n != m} C_nm^2.
template <typename T>
Tensor<T> covariance_loss(Tape<T>* tape, const Tensor<T>& z) {
    return ad::covariance_penalty(tape, sample_covariance(tape, z));
}

// Symmetrized prediction error between the two views: mean squared error of
// u against its reconstruction plus the same for v.
template <typename T>
Tensor<T> reconstruction_loss(Tape<T>* tape, const Tensor<T>& u, const Tensor<T>& u_hat,
                              const Tensor<T>& v, const Tensor<T>& v_hat) {
    check_same_shape(u, u_hat, "reconstruction_loss");
    check_same_shape(v, v_hat, "reconstruction_loss");
    check_same_shape(u, v, "reconstruction_loss");
    return ad::add(tape, ad::mse(tape, u, u_hat), ad::mse(tape, v, v_hat));
}

// total = lambda1 * rec + lambda2 * var + lambda3 * cov, with the variance
// and covariance terms applied to both views.
template <typename T>
LossBreakdown<T> total_loss(Tape<T>* tape, const Tensor<T>& u, const Tensor<T>& v,
                            const Tensor<T>& u_hat, const Tensor<T>& v_hat,
                            const LossWeights& w) {
    w.validate();
    Tensor<T> rec = reconstruction_loss(tape, u, u_hat, v, v_hat);
    Tensor<T> var = ad::add(tape, variance_loss(tape, u), variance_loss(tape, v));
    Tensor<T> cov = ad::add(tape, covariance_loss(tape, u), covariance_loss(tape, v));
    Tensor<T> total = ad::add(
        tape,
        ad::add(tape, ad::scale(tape, rec, static_cast<T>(w.lambda1)),
                ad::scale(tape, var, static_cast<T>(w.lambda2))),
        ad::scale(tape, cov, static_cast<T>(w.lambda3)));
    LossBreakdown<T> out;
    out.rec = static_cast<double>(rec(0, 0));
    out.var = static_cast<double>(var(0, 0));
    out.cov = static_cast<double>(cov(0, 0));
    out.total = total;
    return out;
}

}  // namespace rgi
