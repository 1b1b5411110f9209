#pragma once

// Test-side oracles. Everything here recomputes results through plain dense
// linear algebra on std::vector<double>, independent of the CSR and tape code
// paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rgi/rng.hpp"
#include "rgi/tensor.hpp"

namespace oracle {

using Dense = std::vector<double>;  // row-major n x n (or n x m with explicit dims)

inline Dense dense_adjacency(const std::vector<std::pair<int64_t, int64_t>>& edges, int64_t n) {
    Dense a(static_cast<size_t>(n * n), 0.0);
    for (auto [i, j] : edges) {
        if (i == j) continue;
        a[static_cast<size_t>(i * n + j)] = 1.0;
        a[static_cast<size_t>(j * n + i)] = 1.0;
    }
    return a;
}

enum class Shift { Mean, Sym, Lap };

inline Dense dense_shift(const Dense& adj, int64_t n, Shift kind) {
    Dense deg(static_cast<size_t>(n), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += adj[static_cast<size_t>(i * n + j)];
    Dense s(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            const double aij = adj[static_cast<size_t>(i * n + j)];
            double v = 0.0;
            switch (kind) {
                case Shift::Mean:
                    v = deg[static_cast<size_t>(i)] > 0 ? aij / deg[static_cast<size_t>(i)] : 0.0;
                    break;
                case Shift::Sym:
                    v = aij > 0
                            ? aij / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)])
                            : 0.0;
                    break;
                case Shift::Lap:
                    v = aij > 0
                            ? -aij / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)])
                            : 0.0;
                    if (i == j) v += 1.0;
                    break;
            }
            s[static_cast<size_t>(i * n + j)] = v;
        }
    }
    return s;
}

// c(n x m) = a(n x k) * b(k x m)
inline Dense dense_matmul(const Dense& a, const Dense& b, int64_t n, int64_t k, int64_t m) {
    Dense c(static_cast<size_t>(n * m), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t l = 0; l < k; ++l)
            for (int64_t j = 0; j < m; ++j)
                c[static_cast<size_t>(i * m + j)] +=
                    a[static_cast<size_t>(i * k + l)] * b[static_cast<size_t>(l * m + j)];
    return c;
}

inline Dense dense_power_apply(const Dense& s, int64_t n, const Dense& x, int64_t d, int64_t k) {
    Dense cur = x;
    for (int64_t step = 0; step < k; ++step) cur = dense_matmul(s, cur, n, n, d);
    return cur;
}

// Central finite difference of a scalar function at coordinate i of x.
inline double fd_partial(const std::function<double(const std::vector<double>&)>& f,
                         std::vector<double> x, size_t i, double rel_eps = 1e-5) {
    const double eps = rel_eps * std::max(std::abs(x[i]), 1.0);
    const double orig = x[i];
    x[i] = orig + eps;
    const double hi = f(x);
    x[i] = orig - eps;
    const double lo = f(x);
    return (hi - lo) / (2.0 * eps);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
inline std::vector<double> symmetric_eigenvalues(Dense a, int64_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p * n + q)] * a[static_cast<size_t>(p * n + q)];
        if (off < 1e-24) break;
        for (int64_t p = 0; p < n; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p * n + q)];
                if (std::abs(apq) < 1e-18) continue;
                const double app = a[static_cast<size_t>(p * n + p)];
                const double aqq = a[static_cast<size_t>(q * n + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < n; ++k) {
                    const double akp = a[static_cast<size_t>(k * n + p)];
                    const double akq = a[static_cast<size_t>(k * n + q)];
                    a[static_cast<size_t>(k * n + p)] = c * akp - s * akq;
                    a[static_cast<size_t>(k * n + q)] = s * akp + c * akq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double apk = a[static_cast<size_t>(p * n + k)];
                    const double aqk = a[static_cast<size_t>(q * n + k)];
                    a[static_cast<size_t>(p * n + k)] = c * apk - s * aqk;
                    a[static_cast<size_t>(q * n + k)] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = a[static_cast<size_t>(i * n + i)];
    return eig;
}

inline std::vector<std::pair<int64_t, int64_t>> random_edges(int64_t n, double p, rgi::Rng& rng) {
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j)
            if (rng.bernoulli(p)) edges.emplace_back(i, j);
    return edges;
}

inline rgi::Tensor<double> random_tensor(int64_t rows, int64_t cols, rgi::Rng& rng,
                                         double scale = 1.0) {
    rgi::Tensor<double> t(rows, cols);
    double* p = t.mut();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = scale * rng.normal();
    return t;
}

}  // namespace oracle
