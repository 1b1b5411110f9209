#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rgi/data.hpp"
#include "rgi/dense.hpp"
#include "rgi/error.hpp"
#include "rgi/optim.hpp"
#include "rgi/rng.hpp"
#include "rgi/tape.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

// Each nonzero row scaled to unit Euclidean norm; zero rows pass through.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
    Tensor<T> out = x;
    T* p = out.mut();
    for (int64_t i = 0; i < x.rows(); ++i) {
        T s = T(0);
        for (int64_t j = 0; j < x.cols(); ++j) s += p[i * x.cols() + j] * p[i * x.cols() + j];
        if (s == T(0)) continue;
        const T inv = T(1) / std::sqrt(s);
        for (int64_t j = 0; j < x.cols(); ++j) p[i * x.cols() + j] *= inv;
    }
    return out;
}

struct Split {
    std::vector<int64_t> train_idx;
    std::vector<int64_t> val_idx;
    std::vector<int64_t> test_idx;
};

struct SplitFractions {
    double train = 0.1;
    double val = 0.1;
    // test takes the remainder
};

// Seeded shuffle partitioned by cumulative fractions; train and val sizes are
// floored, test takes the rest.
inline Split random_split(int64_t n, SplitFractions f, uint64_t seed) {
    if (f.train <= 0 || f.val <= 0 || f.train + f.val >= 1.0) {
        throw SplitError("split fractions must be positive and sum below 1");
    }
    const auto n_train = static_cast<int64_t>(std::floor(static_cast<double>(n) * f.train));
    const auto n_val = static_cast<int64_t>(std::floor(static_cast<double>(n) * f.val));
    const int64_t n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1) {
        throw SplitError("n = " + std::to_string(n) + " is too small for non-empty splits");
    }
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    Split s;
    s.train_idx.assign(order.begin(), order.begin() + n_train);
    s.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test_idx.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

struct LinearProbe {
    Tensor<double> weight;  // D x C
    Tensor<double> bias;    // 1 x C
    TaskKind task = TaskKind::Multiclass;
};

// Labels for evaluation. Multiclass uses `classes`, multilabel uses `matrix`.
struct LabelView {
    const std::vector<int64_t>* classes = nullptr;
    const Tensor<double>* matrix = nullptr;
};

namespace detail {

inline Tensor<double> gather_rows(const Tensor<double>& m, const std::vector<int64_t>& idx) {
    Tensor<double> out(static_cast<int64_t>(idx.size()), m.cols());
    double* p = out.mut();
    for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = m.data() + idx[r] * m.cols();
        std::copy(src, src + m.cols(), p + static_cast<int64_t>(r) * m.cols());
    }
    return out;
}

inline double accuracy_of_logits(const Tensor<double>& logits, const std::vector<int64_t>& y) {
    int64_t correct = 0;
    for (int64_t i = 0; i < logits.rows(); ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, best)) best = j;  // ties keep the lowest index
        }
        if (best == y[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

inline double micro_f1_of_logits(const Tensor<double>& logits, const Tensor<double>& y) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < logits.size(); ++i) {
        const bool pred = logits.data()[i] > 0.0;  // probability 0.5
        const bool truth = y.data()[i] != 0.0;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
    }
    const int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace detail

// Score a probe on the given node set: accuracy for multiclass (argmax, ties
// to the lowest class index), micro-average F1 for multilabel (logit > 0).
inline double evaluate(const LinearProbe& probe, const Tensor<double>& emb, const LabelView& labels,
                       const std::vector<int64_t>& idx) {
    if (idx.empty()) throw EmptyEvaluation("evaluate: empty node set");
    if (emb.cols() != probe.weight.rows()) {
        throw ShapeError("evaluate: embeddings are " + std::to_string(emb.cols()) +
                         "-dimensional, probe expects " + std::to_string(probe.weight.rows()));
    }
    Tensor<double> sub = detail::gather_rows(emb, idx);
    Tensor<double> logits = gemm_nn(sub, probe.weight);
    double* p = logits.mut();
    for (int64_t i = 0; i < logits.rows(); ++i) {
        for (int64_t j = 0; j < logits.cols(); ++j) p[i * logits.cols() + j] += probe.bias(0, j);
    }
    if (probe.task == TaskKind::Multiclass) {
        std::vector<int64_t> y(idx.size());
        for (size_t r = 0; r < idx.size(); ++r) y[r] = (*labels.classes)[static_cast<size_t>(idx[r])];
        return detail::accuracy_of_logits(logits, y);
    }
    Tensor<double> y = detail::gather_rows(*labels.matrix, idx);
    return detail::micro_f1_of_logits(logits, y);
}

struct ProbeConfig {
    double lr = 1e-2;
    int64_t steps = 1000;
    double weight_decay = 1e-4;
};

// Fits a linear head on the train split with full-batch Adam and keeps the
// weights of the step with the best validation score. Test labels are never
// touched here. Multiclass: multinomial logistic regression; multilabel:
// C independent binary logistic heads trained jointly.
inline LinearProbe fit_linear_probe(const Tensor<double>& emb, const LabelView& labels,
                                    const Split& split, TaskKind task, uint64_t seed,
                                    const ProbeConfig& pc = {}) {
    const int64_t d = emb.cols();
    int64_t c;
    std::vector<int64_t> y_train_cls, y_val_cls;
    Tensor<double> y_train_ml, y_val_ml;
    if (task == TaskKind::Multiclass) {
        int64_t max_label = 0;
        for (int64_t y : *labels.classes) max_label = std::max(max_label, y);
        c = max_label + 1;
        for (int64_t i : split.train_idx) y_train_cls.push_back((*labels.classes)[static_cast<size_t>(i)]);
        for (int64_t i : split.val_idx) y_val_cls.push_back((*labels.classes)[static_cast<size_t>(i)]);
        const auto lo = std::minmax_element(y_train_cls.begin(), y_train_cls.end());
        if (*lo.first == *lo.second) {
            throw DegenerateLabels("probe train split has a single class (" +
                                   std::to_string(*lo.first) + ")");
        }
    } else {
        c = labels.matrix->cols();
        y_train_ml = detail::gather_rows(*labels.matrix, split.train_idx);
        y_val_ml = detail::gather_rows(*labels.matrix, split.val_idx);
    }

    const Tensor<double> x_train = detail::gather_rows(emb, split.train_idx);
    const Tensor<double> x_val = detail::gather_rows(emb, split.val_idx);

    Rng rng(seed);
    Tensor<double> w(d, c);
    {
        double* p = w.mut();
        for (int64_t i = 0; i < w.size(); ++i) p[i] = 0.01 * rng.normal();
    }
    Tensor<double> b(1, c);

    AdamConfig acfg;
    acfg.weight_decay = pc.weight_decay;
    AdamState<double> adam(acfg);

    LinearProbe best{w, b, task};
    double best_score = -1.0;
    for (int64_t step = 0; step < pc.steps; ++step) {
        Tape<double> tape;
        Tensor<double> wb = tape.watch(w);
        Tensor<double> bb = tape.watch(b);
        Tensor<double> logits = ad::add_rowvec(&tape, ad::matmul(&tape, x_train, wb), bb);
        Tensor<double> loss = task == TaskKind::Multiclass
                                  ? ad::softmax_cross_entropy(&tape, logits, y_train_cls)
                                  : ad::sigmoid_bce(&tape, logits, y_train_ml);
        auto grads = tape.backward(loss);
        std::vector<std::pair<std::string, Tensor<double>*>> params{{"w", &w}, {"b", &b}};
        std::unordered_map<std::string, Tensor<double>> named;
        named.emplace("w", std::move(grads.at(wb.node())));
        named.emplace("b", std::move(grads.at(bb.node())));
        adam.step(params, named, pc.lr);

        LinearProbe probe{w, b, task};
        double score;
        {
            Tensor<double> vl = gemm_nn(x_val, w);
            double* p = vl.mut();
            for (int64_t i = 0; i < vl.rows(); ++i)
                for (int64_t j = 0; j < c; ++j) p[i * c + j] += b(0, j);
            score = task == TaskKind::Multiclass ? detail::accuracy_of_logits(vl, y_val_cls)
                                                 : detail::micro_f1_of_logits(vl, y_val_ml);
        }
        if (score > best_score) {
            best_score = score;
            best = probe;
        }
    }
    return best;
}

}  // namespace rgi
