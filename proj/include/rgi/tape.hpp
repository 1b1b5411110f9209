#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rgi/dense.hpp"
#include "rgi/error.hpp"
#include "rgi/rng.hpp"
#include "rgi/shift.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

// Reverse-mode tape. A tape and the tensors recorded on it form one
// single-threaded session: ops append nodes in topological order, backward()
// walks them once in reverse and then marks the tape consumed. Gradients are
// reported for every watched leaf.
template <typename T>
class Tape {
public:
    using GradFn = std::function<void(Tape&, const std::vector<T>&)>;

    // Registers x as a differentiable leaf and returns the bound handle.
    Tensor<T> watch(const Tensor<T>& x) {
        Tensor<T> bound = x;
        const int id = record(x.rows(), x.cols(), /*requires_grad=*/true, /*is_leaf=*/true, {});
        bound.bind_node(id, true);
        return bound;
    }

    int record(int64_t rows, int64_t cols, bool requires_grad, bool is_leaf,
               std::vector<int> parents, GradFn fn = nullptr) {
        Node n;
        n.rows = rows;
        n.cols = cols;
        n.requires_grad = requires_grad;
        n.is_leaf = is_leaf;
        n.parents = std::move(parents);
        n.backward_fn = std::move(fn);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    bool wants_grad(int node) const {
        return node >= 0 && node < static_cast<int>(nodes_.size()) && nodes_[node].requires_grad;
    }

    void add_grad(int node, const T* g, int64_t count) {
        if (!wants_grad(node)) return;
        auto& grad = nodes_[node].grad;
        if (grad.empty()) grad.assign(static_cast<size_t>(count), T(0));
        for (int64_t i = 0; i < count; ++i) grad[static_cast<size_t>(i)] += g[i];
    }

    const std::vector<T>* grad_of(int node) const {
        if (node < 0 || nodes_[node].grad.empty()) return nullptr;
        return &nodes_[node].grad;
    }

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Reverse-topological accumulation seeded with d(loss)/d(loss) = 1.
    std::unordered_map<int, Tensor<T>> backward(const Tensor<T>& loss) {
        if (consumed_) throw rgi::TapeConsumed("tape already consumed by backward");
        if (loss.rows() != 1 || loss.cols() != 1) {
            throw ShapeError("backward: loss must be 1x1, got " + std::to_string(loss.rows()) +
                             "x" + std::to_string(loss.cols()));
        }
        const int root = loss.node();
        if (root < 0 || root >= static_cast<int>(nodes_.size())) {
            throw ShapeError("backward: loss does not live on this tape");
        }
        consumed_ = true;
        nodes_[root].grad.assign(1, T(1));
        for (int id = root; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad.empty() || !n.backward_fn) continue;
            n.backward_fn(*this, n.grad);
        }
        std::unordered_map<int, Tensor<T>> grads;
        for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
            Node& n = nodes_[id];
            if (!n.is_leaf || !n.requires_grad) continue;
            if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.rows * n.cols), T(0));
            grads.emplace(id, Tensor<T>(n.rows, n.cols, std::move(n.grad)));
        }
        return grads;
    }

private:
    struct Node {
        int64_t rows = 0, cols = 0;
        bool requires_grad = false;
        bool is_leaf = false;
        std::vector<int> parents;
        GradFn backward_fn;
        std::vector<T> grad;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

namespace ad {

namespace detail {

template <typename T>
bool track(const Tape<T>* tape, const Tensor<T>& x) {
    return tape != nullptr && x.node() >= 0 && x.requires_grad();
}

template <typename T>
Tensor<T> bind(Tape<T>* tape, Tensor<T> out, std::vector<int> parents,
               typename Tape<T>::GradFn fn) {
    const int id = tape->record(out.rows(), out.cols(), true, false, std::move(parents),
                                std::move(fn));
    out.bind_node(id, true);
    return out;
}

}  // namespace detail

// c = a * b; dA = G B^T, dB = A^T G
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = gemm_nn(a, b);
    if (!detail::track(tape, a) && !detail::track(tape, b)) return out;
    const int pa = a.node(), pb = b.node();
    Tensor<T> av = a, bv = b;
    return detail::bind(tape, std::move(out), {pa, pb},
                        [pa, pb, av, bv](Tape<T>& t, const std::vector<T>& g) {
                            Tensor<T> gt(av.rows(), bv.cols(), g);
                            if (t.wants_grad(pa)) {
                                Tensor<T> da = gemm_nt(gt, bv);
                                t.add_grad(pa, da.data(), da.size());
                            }
                            if (t.wants_grad(pb)) {
                                Tensor<T> db = gemm_tn(av, gt);
                                t.add_grad(pb, db.data(), db.size());
                            }
                        });
}

// c = a^T * b with a, b sharing their row dimension; dA = B G^T, dB = A G
template <typename T>
Tensor<T> matmul_tn(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = gemm_tn(a, b);
    if (!detail::track(tape, a) && !detail::track(tape, b)) return out;
    const int pa = a.node(), pb = b.node();
    Tensor<T> av = a, bv = b;
    return detail::bind(tape, std::move(out), {pa, pb},
                        [pa, pb, av, bv](Tape<T>& t, const std::vector<T>& g) {
                            Tensor<T> gt(av.cols(), bv.cols(), g);
                            if (t.wants_grad(pa)) {
                                Tensor<T> da = gemm_nt(bv, gt);
                                t.add_grad(pa, da.data(), da.size());
                            }
                            if (t.wants_grad(pb)) {
                                Tensor<T> db = gemm_nn(av, gt);
                                t.add_grad(pb, db.data(), db.size());
                            }
                        });
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    for (int64_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] + b.data()[i];
    if (!detail::track(tape, a) && !detail::track(tape, b)) return out;
    const int pa = a.node(), pb = b.node();
    return detail::bind(tape, std::move(out), {pa, pb},
                        [pa, pb](Tape<T>& t, const std::vector<T>& g) {
                            t.add_grad(pa, g.data(), static_cast<int64_t>(g.size()));
                            t.add_grad(pb, g.data(), static_cast<int64_t>(g.size()));
                        });
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    for (int64_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] - b.data()[i];
    if (!detail::track(tape, a) && !detail::track(tape, b)) return out;
    const int pa = a.node(), pb = b.node();
    return detail::bind(tape, std::move(out), {pa, pb},
                        [pa, pb](Tape<T>& t, const std::vector<T>& g) {
                            t.add_grad(pa, g.data(), static_cast<int64_t>(g.size()));
                            if (t.wants_grad(pb)) {
                                std::vector<T> neg(g.size());
                                for (size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                                t.add_grad(pb, neg.data(), static_cast<int64_t>(neg.size()));
                            }
                        });
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T c) {
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    for (int64_t i = 0; i < a.size(); ++i) o[i] = c * a.data()[i];
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, c](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> scaled(g.size());
                            for (size_t i = 0; i < g.size(); ++i) scaled[i] = c * g[i];
                            t.add_grad(pa, scaled.data(), static_cast<int64_t>(scaled.size()));
                        });
}

// out = a + v broadcast over rows; v is 1 x D
template <typename T>
Tensor<T> add_rowvec(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& v) {
    if (v.rows() != 1 || v.cols() != a.cols()) {
        throw ShapeError("add_rowvec: expected 1x" + std::to_string(a.cols()) + ", got " +
                         std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    }
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    const int64_t d = a.cols();
    for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < d; ++j) o[i * d + j] = a.data()[i * d + j] + v.data()[j];
    }
    if (!detail::track(tape, a) && !detail::track(tape, v)) return out;
    const int pa = a.node(), pv = v.node();
    const int64_t rows = a.rows();
    return detail::bind(tape, std::move(out), {pa, pv},
                        [pa, pv, rows, d](Tape<T>& t, const std::vector<T>& g) {
                            t.add_grad(pa, g.data(), static_cast<int64_t>(g.size()));
                            if (t.wants_grad(pv)) {
                                std::vector<T> col(static_cast<size_t>(d), T(0));
                                for (int64_t i = 0; i < rows; ++i) {
                                    for (int64_t j = 0; j < d; ++j) col[static_cast<size_t>(j)] += g[static_cast<size_t>(i * d + j)];
                                }
                                t.add_grad(pv, col.data(), d);
                            }
                        });
}

// Elementwise max(0, x); subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& a) {
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    for (int64_t i = 0; i < a.size(); ++i) o[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    auto saved = a.shared_values();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, saved](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(g.size());
                            for (size_t i = 0; i < g.size(); ++i) {
                                dx[i] = (*saved)[i] > T(0) ? g[i] : T(0);
                            }
                            t.add_grad(pa, dx.data(), static_cast<int64_t>(dx.size()));
                        });
}

// Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).
// Identity in eval mode and at p = 0.
template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& a, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) {
        throw InvalidProbability("dropout: p must be in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return a;
    const T keep_inv = static_cast<T>(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(a.size()));
    Tensor<T> out(a.rows(), a.cols());
    T* o = out.mut();
    for (int64_t i = 0; i < a.size(); ++i) {
        const bool keep = !rng.bernoulli(p);
        (*mask)[static_cast<size_t>(i)] = keep;
        o[i] = keep ? a.data()[i] * keep_inv : T(0);
    }
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, mask, keep_inv](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(g.size());
                            for (size_t i = 0; i < g.size(); ++i) {
                                dx[i] = (*mask)[i] ? g[i] * keep_inv : T(0);
                            }
                            t.add_grad(pa, dx.data(), static_cast<int64_t>(dx.size()));
                        });
}

// Per-column standardization with the current batch's mean and biased (1/N)
// variance, then affine scale/shift. Differentiable through the statistics.
template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
    const int64_t n = a.rows(), d = a.cols();
    if (n < 2) throw BatchTooSmall("batch_norm: need at least 2 rows, got " + std::to_string(n));
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(d));
    }
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(n * d));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(d));
    Tensor<T> out(n, d);
    T* o = out.mut();
    const T* x = a.data();
    for (int64_t j = 0; j < d; ++j) {
        T mean = T(0);
        for (int64_t i = 0; i < n; ++i) mean += x[i * d + j];
        mean /= static_cast<T>(n);
        T var = T(0);
        for (int64_t i = 0; i < n; ++i) {
            const T c = x[i * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(n);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(j)] = is;
        for (int64_t i = 0; i < n; ++i) {
            const T xh = (x[i * d + j] - mean) * is;
            (*xhat)[static_cast<size_t>(i * d + j)] = xh;
            o[i * d + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    if (!detail::track(tape, a) && !detail::track(tape, gamma) && !detail::track(tape, beta)) {
        return out;
    }
    const int pa = a.node(), pg = gamma.node(), pb = beta.node();
    Tensor<T> gv = gamma;
    return detail::bind(
        tape, std::move(out), {pa, pg, pb},
        [pa, pg, pb, gv, xhat, inv_std, n, d](Tape<T>& t, const std::vector<T>& g) {
            if (t.wants_grad(pb)) {
                std::vector<T> db(static_cast<size_t>(d), T(0));
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) db[static_cast<size_t>(j)] += g[static_cast<size_t>(i * d + j)];
                t.add_grad(pb, db.data(), d);
            }
            if (t.wants_grad(pg)) {
                std::vector<T> dg(static_cast<size_t>(d), T(0));
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j)
                        dg[static_cast<size_t>(j)] +=
                            g[static_cast<size_t>(i * d + j)] * (*xhat)[static_cast<size_t>(i * d + j)];
                t.add_grad(pg, dg.data(), d);
            }
            if (t.wants_grad(pa)) {
                std::vector<T> dx(static_cast<size_t>(n * d));
                for (int64_t j = 0; j < d; ++j) {
                    const T gj = gv.data()[j];
                    T sum_dxh = T(0), sum_dxh_xh = T(0);
                    for (int64_t i = 0; i < n; ++i) {
                        const T dxh = g[static_cast<size_t>(i * d + j)] * gj;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * (*xhat)[static_cast<size_t>(i * d + j)];
                    }
                    const T scale = (*inv_std)[static_cast<size_t>(j)] / static_cast<T>(n);
                    for (int64_t i = 0; i < n; ++i) {
                        const T dxh = g[static_cast<size_t>(i * d + j)] * gj;
                        const T xh = (*xhat)[static_cast<size_t>(i * d + j)];
                        dx[static_cast<size_t>(i * d + j)] =
                            scale * (static_cast<T>(n) * dxh - sum_dxh - xh * sum_dxh_xh);
                    }
                }
                t.add_grad(pa, dx.data(), n * d);
            }
        });
}

// Per-row standardization (biased 1/D variance) with per-feature affine.
template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
    const int64_t n = a.rows(), d = a.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(d));
    }
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(n * d));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    Tensor<T> out(n, d);
    T* o = out.mut();
    const T* x = a.data();
    for (int64_t i = 0; i < n; ++i) {
        T mean = T(0);
        for (int64_t j = 0; j < d; ++j) mean += x[i * d + j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int64_t j = 0; j < d; ++j) {
            const T c = x[i * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < d; ++j) {
            const T xh = (x[i * d + j] - mean) * is;
            (*xhat)[static_cast<size_t>(i * d + j)] = xh;
            o[i * d + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    if (!detail::track(tape, a) && !detail::track(tape, gamma) && !detail::track(tape, beta)) {
        return out;
    }
    const int pa = a.node(), pg = gamma.node(), pb = beta.node();
    Tensor<T> gv = gamma;
    return detail::bind(
        tape, std::move(out), {pa, pg, pb},
        [pa, pg, pb, gv, xhat, inv_std, n, d](Tape<T>& t, const std::vector<T>& g) {
            if (t.wants_grad(pb)) {
                std::vector<T> db(static_cast<size_t>(d), T(0));
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) db[static_cast<size_t>(j)] += g[static_cast<size_t>(i * d + j)];
                t.add_grad(pb, db.data(), d);
            }
            if (t.wants_grad(pg)) {
                std::vector<T> dg(static_cast<size_t>(d), T(0));
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j)
                        dg[static_cast<size_t>(j)] +=
                            g[static_cast<size_t>(i * d + j)] * (*xhat)[static_cast<size_t>(i * d + j)];
                t.add_grad(pg, dg.data(), d);
            }
            if (t.wants_grad(pa)) {
                std::vector<T> dx(static_cast<size_t>(n * d));
                for (int64_t i = 0; i < n; ++i) {
                    T sum_dxh = T(0), sum_dxh_xh = T(0);
                    for (int64_t j = 0; j < d; ++j) {
                        const T dxh = g[static_cast<size_t>(i * d + j)] * gv.data()[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * (*xhat)[static_cast<size_t>(i * d + j)];
                    }
                    const T scale = (*inv_std)[static_cast<size_t>(i)] / static_cast<T>(d);
                    for (int64_t j = 0; j < d; ++j) {
                        const T dxh = g[static_cast<size_t>(i * d + j)] * gv.data()[j];
                        const T xh = (*xhat)[static_cast<size_t>(i * d + j)];
                        dx[static_cast<size_t>(i * d + j)] =
                            scale * (static_cast<T>(d) * dxh - sum_dxh - xh * sum_dxh_xh);
                    }
                }
                t.add_grad(pa, dx.data(), n * d);
            }
        });
}

// out = S x; backward applies the operator transpose (bwd_t).
template <typename T>
Tensor<T> spmm(Tape<T>* tape, const ShiftMatrix<T>& s, const Tensor<T>& x) {
    Tensor<T> out = rgi::spmm(s.mat, s.add_identity, x);
    if (!detail::track(tape, x)) return out;
    const int px = x.node();
    const CsrMatrix<T> bwd = s.mat_t;
    const bool add_id = s.add_identity;
    return detail::bind(tape, std::move(out), {px},
                        [px, bwd, add_id](Tape<T>& t, const std::vector<T>& g) {
                            const int64_t d = static_cast<int64_t>(g.size()) / bwd.num_rows();
                            Tensor<T> gt(bwd.num_rows(), d, g);
                            Tensor<T> dx = rgi::spmm(bwd, add_id, gt);
                            t.add_grad(px, dx.data(), dx.size());
                        });
}

template <typename T>
Tensor<T> spmm(Tape<T>* tape, const KipfShift<T>& s, const Tensor<T>& x) {
    Tensor<T> out = rgi::spmm(s.mat, false, x);
    if (!detail::track(tape, x)) return out;
    const int px = x.node();
    const CsrMatrix<T> bwd = s.mat;  // symmetric
    return detail::bind(tape, std::move(out), {px},
                        [px, bwd](Tape<T>& t, const std::vector<T>& g) {
                            const int64_t d = static_cast<int64_t>(g.size()) / bwd.num_rows();
                            Tensor<T> gt(bwd.num_rows(), d, g);
                            Tensor<T> dx = rgi::spmm(bwd, false, gt);
                            t.add_grad(px, dx.data(), dx.size());
                        });
}

// K differentiable shift applications.
template <typename T>
Tensor<T> propagate(Tape<T>* tape, const Tensor<T>& u, const PropagationConfig& cfg,
                    const ShiftMatrix<T>& s) {
    if (cfg.steps < 1) throw Error("propagate: steps must be >= 1");
    Tensor<T> v = u;
    for (int64_t k = 0; k < cfg.steps; ++k) v = spmm(tape, s, v);
    return v;
}

// out = a - column mean of a
template <typename T>
Tensor<T> center_columns(Tape<T>* tape, const Tensor<T>& a) {
    const int64_t n = a.rows(), d = a.cols();
    Tensor<T> out(n, d);
    T* o = out.mut();
    for (int64_t j = 0; j < d; ++j) {
        T mean = T(0);
        for (int64_t i = 0; i < n; ++i) mean += a.data()[i * d + j];
        mean /= static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) o[i * d + j] = a.data()[i * d + j] - mean;
    }
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, n, d](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(g.size());
                            for (int64_t j = 0; j < d; ++j) {
                                T mean = T(0);
                                for (int64_t i = 0; i < n; ++i) mean += g[static_cast<size_t>(i * d + j)];
                                mean /= static_cast<T>(n);
                                for (int64_t i = 0; i < n; ++i)
                                    dx[static_cast<size_t>(i * d + j)] = g[static_cast<size_t>(i * d + j)] - mean;
                            }
                            t.add_grad(pa, dx.data(), static_cast<int64_t>(dx.size()));
                        });
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
    T s = T(0);
    for (int64_t i = 0; i < a.size(); ++i) s += a.data()[i];
    Tensor<T> out(1, 1, {s});
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    const int64_t count = a.size();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, count](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(static_cast<size_t>(count), g[0]);
                            t.add_grad(pa, dx.data(), count);
                        });
}

template <typename T>
Tensor<T> sum_squares(Tape<T>* tape, const Tensor<T>& a) {
    T s = T(0);
    for (int64_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    Tensor<T> out(1, 1, {s});
    if (!detail::track(tape, a)) return out;
    const int pa = a.node();
    auto saved = a.shared_values();
    return detail::bind(tape, std::move(out), {pa},
                        [pa, saved](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(saved->size());
                            for (size_t i = 0; i < dx.size(); ++i) dx[i] = T(2) * g[0] * (*saved)[i];
                            t.add_grad(pa, dx.data(), static_cast<int64_t>(dx.size()));
                        });
}

// Mean over all N*D elements of (a - b)^2.
template <typename T>
Tensor<T> mse(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mse");
    const T inv = T(1) / static_cast<T>(a.size());
    T s = T(0);
    for (int64_t i = 0; i < a.size(); ++i) {
        const T diff = a.data()[i] - b.data()[i];
        s += diff * diff;
    }
    Tensor<T> out(1, 1, {s * inv});
    if (!detail::track(tape, a) && !detail::track(tape, b)) return out;
    const int pa = a.node(), pb = b.node();
    auto sa = a.shared_values();
    auto sb = b.shared_values();
    return detail::bind(tape, std::move(out), {pa, pb},
                        [pa, pb, sa, sb, inv](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dx(sa->size());
                            const T c = T(2) * g[0] * inv;
                            for (size_t i = 0; i < dx.size(); ++i) dx[i] = c * ((*sa)[i] - (*sb)[i]);
                            t.add_grad(pa, dx.data(), static_cast<int64_t>(dx.size()));
                            if (t.wants_grad(pb)) {
                                for (auto& v : dx) v = -v;
                                t.add_grad(pb, dx.data(), static_cast<int64_t>(dx.size()));
                            }
                        });
}

// (1/D) * sum_n (1 - C_nn)^2 over a D x D covariance.
template <typename T>
Tensor<T> variance_penalty(Tape<T>* tape, const Tensor<T>& c) {
    if (c.rows() != c.cols()) throw ShapeError("variance_penalty: matrix must be square");
    const int64_t d = c.rows();
    T s = T(0);
    for (int64_t i = 0; i < d; ++i) {
        const T diff = T(1) - c(i, i);
        s += diff * diff;
    }
    Tensor<T> out(1, 1, {s / static_cast<T>(d)});
    if (!detail::track(tape, c)) return out;
    const int pc = c.node();
    auto saved = c.shared_values();
    return detail::bind(tape, std::move(out), {pc},
                        [pc, saved, d](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dc(static_cast<size_t>(d * d), T(0));
                            const T coef = T(2) * g[0] / static_cast<T>(d);
                            for (int64_t i = 0; i < d; ++i) {
                                dc[static_cast<size_t>(i * d + i)] =
                                    coef * ((*saved)[static_cast<size_t>(i * d + i)] - T(1));
                            }
                            t.add_grad(pc, dc.data(), d * d);
                        });
}

// (1/D) * sum_{n != m} C_nm^2 over a D x D covariance; 0 when D = 1.
template <typename T>
Tensor<T> covariance_penalty(Tape<T>* tape, const Tensor<T>& c) {
    if (c.rows() != c.cols()) throw ShapeError("covariance_penalty: matrix must be square");
    const int64_t d = c.rows();
    T s = T(0);
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            if (i == j) continue;
            s += c(i, j) * c(i, j);
        }
    }
    Tensor<T> out(1, 1, {s / static_cast<T>(d)});
    if (!detail::track(tape, c)) return out;
    const int pc = c.node();
    auto saved = c.shared_values();
    return detail::bind(tape, std::move(out), {pc},
                        [pc, saved, d](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dc(static_cast<size_t>(d * d), T(0));
                            const T coef = T(2) * g[0] / static_cast<T>(d);
                            for (int64_t i = 0; i < d; ++i) {
                                for (int64_t j = 0; j < d; ++j) {
                                    if (i == j) continue;
                                    dc[static_cast<size_t>(i * d + j)] =
                                        coef * (*saved)[static_cast<size_t>(i * d + j)];
                                }
                            }
                            t.add_grad(pc, dc.data(), d * d);
                        });
}

// Mean softmax cross-entropy over rows against integer class labels.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const std::vector<int64_t>& labels) {
    const int64_t n = logits.rows(), c = logits.cols();
    if (static_cast<int64_t>(labels.size()) != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    }
    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n * c));
    T loss = T(0);
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T z = T(0);
        for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const T log_z = std::log(z) + mx;
        for (int64_t j = 0; j < c; ++j) {
            (*probs)[static_cast<size_t>(i * c + j)] = std::exp(row[j] - log_z);
        }
        loss += log_z - row[labels[static_cast<size_t>(i)]];
    }
    Tensor<T> out(1, 1, {loss / static_cast<T>(n)});
    if (!detail::track(tape, logits)) return out;
    const int pl = logits.node();
    auto lbl = std::make_shared<std::vector<int64_t>>(labels);
    return detail::bind(tape, std::move(out), {pl},
                        [pl, probs, lbl, n, c](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dz(probs->size());
                            const T coef = g[0] / static_cast<T>(n);
                            for (int64_t i = 0; i < n; ++i) {
                                for (int64_t j = 0; j < c; ++j) {
                                    T v = (*probs)[static_cast<size_t>(i * c + j)];
                                    if (j == (*lbl)[static_cast<size_t>(i)]) v -= T(1);
                                    dz[static_cast<size_t>(i * c + j)] = coef * v;
                                }
                            }
                            t.add_grad(pl, dz.data(), n * c);
                        });
}

// Mean binary cross-entropy with logits over all elements; targets are 0/1.
template <typename T>
Tensor<T> sigmoid_bce(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& targets) {
    check_same_shape(logits, targets, "sigmoid_bce");
    const int64_t total = logits.size();
    T loss = T(0);
    for (int64_t i = 0; i < total; ++i) {
        const T z = logits.data()[i];
        const T y = targets.data()[i];
        loss += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor<T> out(1, 1, {loss / static_cast<T>(total)});
    if (!detail::track(tape, logits)) return out;
    const int pl = logits.node();
    auto sz = logits.shared_values();
    auto sy = targets.shared_values();
    return detail::bind(tape, std::move(out), {pl},
                        [pl, sz, sy, total](Tape<T>& t, const std::vector<T>& g) {
                            std::vector<T> dz(static_cast<size_t>(total));
                            const T coef = g[0] / static_cast<T>(total);
                            for (int64_t i = 0; i < total; ++i) {
                                const T z = (*sz)[static_cast<size_t>(i)];
                                const T sig = T(1) / (T(1) + std::exp(-z));
                                dz[static_cast<size_t>(i)] = coef * (sig - (*sy)[static_cast<size_t>(i)]);
                            }
                            t.add_grad(pl, dz.data(), total);
                        });
}

}  // namespace ad
}  // namespace rgi
