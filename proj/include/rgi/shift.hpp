#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rgi/graph.hpp"
#include "rgi/parallel.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

// Valued CSR matrix with shared storage. Copies are cheap handles, which lets
// autodiff nodes keep the operator they were recorded with alive.
template <typename T>
class CsrMatrix {
public:
    CsrMatrix() = default;
    CsrMatrix(int64_t num_rows, std::vector<int64_t> offsets, std::vector<int64_t> cols,
              std::vector<T> vals)
        : num_rows_(num_rows),
          offsets_(std::make_shared<std::vector<int64_t>>(std::move(offsets))),
          cols_(std::make_shared<std::vector<int64_t>>(std::move(cols))),
          vals_(std::make_shared<std::vector<T>>(std::move(vals))) {}

    int64_t num_rows() const { return num_rows_; }
    const std::vector<int64_t>& offsets() const { return *offsets_; }
    const std::vector<int64_t>& cols() const { return *cols_; }
    const std::vector<T>& vals() const { return *vals_; }

private:
    int64_t num_rows_ = 0;
    std::shared_ptr<const std::vector<int64_t>> offsets_ = std::make_shared<std::vector<int64_t>>(1, 0);
    std::shared_ptr<const std::vector<int64_t>> cols_ = std::make_shared<std::vector<int64_t>>();
    std::shared_ptr<const std::vector<T>> vals_ = std::make_shared<std::vector<T>>();
};

enum class ShiftKind {
    MeanAdjacency,      // D^-1 A
    SymNormAdjacency,   // D^-1/2 A D^-1/2
    SymNormLaplacian,   // I - D^-1/2 A D^-1/2
};

inline const char* to_string(ShiftKind k) {
    switch (k) {
        case ShiftKind::MeanAdjacency: return "mean_adj";
        case ShiftKind::SymNormAdjacency: return "sym_norm_adj";
        case ShiftKind::SymNormLaplacian: return "sym_norm_lap";
    }
    return "?";
}

// One of the three propagation operators. The stored CSR covers only the
// off-diagonal (neighbor) coefficients; the Laplacian's identity diagonal is
// kept implicit via add_identity, so no self-loops are ever stored. mat_t is
// the operator transpose (it aliases mat for the two symmetric kinds).
template <typename T>
struct ShiftMatrix {
    ShiftKind kind = ShiftKind::SymNormAdjacency;
    CsrMatrix<T> mat;
    CsrMatrix<T> mat_t;
    bool add_identity = false;
};

template <typename T = double>
ShiftMatrix<T> shift_operator(const SparseGraph& g, ShiftKind kind) {
    const int64_t n = g.num_nodes();
    std::vector<int64_t> offsets(g.row_offsets());
    std::vector<int64_t> cols(g.col_indices());
    std::vector<T> vals(cols.size());

    std::vector<double> deg(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) deg[static_cast<size_t>(i)] = static_cast<double>(g.degree(i));

    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            const int64_t j = cols[static_cast<size_t>(k)];
            double v = 0.0;
            switch (kind) {
                case ShiftKind::MeanAdjacency:
                    v = 1.0 / deg[static_cast<size_t>(i)];
                    break;
                case ShiftKind::SymNormAdjacency:
                    v = 1.0 / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]);
                    break;
                case ShiftKind::SymNormLaplacian:
                    v = -1.0 / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]);
                    break;
            }
            vals[static_cast<size_t>(k)] = static_cast<T>(v);
        }
    }

    ShiftMatrix<T> s;
    s.kind = kind;
    s.add_identity = (kind == ShiftKind::SymNormLaplacian);
    s.mat = CsrMatrix<T>(n, std::move(offsets), std::move(cols), std::move(vals));
    if (kind == ShiftKind::MeanAdjacency) {
        // Explicit transpose (column-stochastic) for the backward pass.
        std::vector<int64_t> t_off(static_cast<size_t>(n) + 1, 0);
        const auto& off = s.mat.offsets();
        const auto& cl = s.mat.cols();
        const auto& vl = s.mat.vals();
        for (int64_t j : cl) ++t_off[static_cast<size_t>(j) + 1];
        for (int64_t i = 0; i < n; ++i) t_off[i + 1] += t_off[i];
        std::vector<int64_t> t_cols(cl.size());
        std::vector<T> t_vals(cl.size());
        std::vector<int64_t> cursor(t_off.begin(), t_off.end() - 1);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t k = off[i]; k < off[i + 1]; ++k) {
                const int64_t j = cl[static_cast<size_t>(k)];
                const int64_t slot = cursor[static_cast<size_t>(j)]++;
                t_cols[static_cast<size_t>(slot)] = i;  // rows visited in order: columns stay sorted
                t_vals[static_cast<size_t>(slot)] = vl[static_cast<size_t>(k)];
            }
        }
        s.mat_t = CsrMatrix<T>(n, std::move(t_off), std::move(t_cols), std::move(t_vals));
    } else {
        s.mat_t = s.mat;
    }
    return s;
}

// GCN convolution operator D~^-1/2 (A + I) D~^-1/2 with self-loops added,
// unlike the propagation operators above. Symmetric; diagonal entries equal
// 1/(deg_i + 1).
template <typename T>
struct KipfShift {
    CsrMatrix<T> mat;
};

template <typename T = double>
KipfShift<T> kipf_shift(const SparseGraph& g) {
    const int64_t n = g.num_nodes();
    std::vector<int64_t> offsets(static_cast<size_t>(n) + 1, 0);
    std::vector<int64_t> cols;
    std::vector<T> vals;
    cols.reserve(g.col_indices().size() + static_cast<size_t>(n));
    vals.reserve(cols.capacity());
    for (int64_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(g.degree(i)) + 1.0;
        bool diag_done = false;
        for (const int64_t* p = g.neighbors_begin(i); p != g.neighbors_end(i); ++p) {
            const int64_t j = *p;
            if (!diag_done && j > i) {
                cols.push_back(i);
                vals.push_back(static_cast<T>(1.0 / di));
                diag_done = true;
            }
            const double dj = static_cast<double>(g.degree(j)) + 1.0;
            cols.push_back(j);
            vals.push_back(static_cast<T>(1.0 / std::sqrt(di * dj)));
        }
        if (!diag_done) {
            cols.push_back(i);
            vals.push_back(static_cast<T>(1.0 / di));
        }
        offsets[static_cast<size_t>(i) + 1] = static_cast<int64_t>(cols.size());
    }
    return KipfShift<T>{CsrMatrix<T>(n, std::move(offsets), std::move(cols), std::move(vals))};
}

// y = M x (+ x when add_identity), rows computed independently with a fixed
// reduction order, so the result is deterministic for any thread count.
template <typename T>
Tensor<T> spmm(const CsrMatrix<T>& m, bool add_identity, const Tensor<T>& x) {
    if (x.rows() != m.num_rows()) {
        throw ShapeError("spmm: operator has " + std::to_string(m.num_rows()) +
                         " rows but input has " + std::to_string(x.rows()));
    }
    const int64_t d = x.cols();
    Tensor<T> y(m.num_rows(), d);
    T* out = y.mut();
    const T* in = x.data();
    const auto& off = m.offsets();
    const auto& cols = m.cols();
    const auto& vals = m.vals();
    parallel_for(m.num_rows(), [&](int64_t i) {
        T* row = out + i * d;
        if (add_identity) {
            const T* self = in + i * d;
            for (int64_t c = 0; c < d; ++c) row[c] = self[c];
        }
        for (int64_t k = off[i]; k < off[i + 1]; ++k) {
            const T v = vals[static_cast<size_t>(k)];
            const T* src = in + cols[static_cast<size_t>(k)] * d;
            for (int64_t c = 0; c < d; ++c) row[c] += v * src[c];
        }
    }, /*grain=*/64);
    return y;
}

template <typename T>
Tensor<T> spmm(const ShiftMatrix<T>& s, const Tensor<T>& x) {
    return spmm(s.mat, s.add_identity, x);
}

template <typename T>
Tensor<T> spmm(const KipfShift<T>& s, const Tensor<T>& x) {
    return spmm(s.mat, false, x);
}

struct PropagationConfig {
    ShiftKind kind = ShiftKind::SymNormAdjacency;
    int64_t steps = 1;
};

// K successive shift applications (the non-differentiating path; the tape op
// lives in tape.hpp).
template <typename T>
Tensor<T> propagate(const Tensor<T>& u, const PropagationConfig& cfg, const ShiftMatrix<T>& s) {
    if (cfg.steps < 1) throw Error("propagate: steps must be >= 1");
    Tensor<T> v = u;
    for (int64_t k = 0; k < cfg.steps; ++k) v = spmm(s, v);
    return v;
}

}  // namespace rgi
