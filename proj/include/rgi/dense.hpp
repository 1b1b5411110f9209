#pragma once

#include <cstdint>
#include <string>

#include "rgi/parallel.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

// Dense kernels. All reductions run in a fixed index order per output row and
// each output row belongs to one thread, so results are bitwise deterministic
// for any thread count.

// C = A(n x k) * B(k x m)
template <typename T>
Tensor<T> gemm_nn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    const int64_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor<T> c(n, m);
    T* out = c.mut();
    const T* pa = a.data();
    const T* pb = b.data();
    parallel_for(n, [&](int64_t i) {
        T* row = out + i * m;
        const T* arow = pa + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const T av = arow[l];
            if (av == T(0)) continue;
            const T* brow = pb + l * m;
            for (int64_t j = 0; j < m; ++j) row[j] += av * brow[j];
        }
    }, /*grain=*/16);
    return c;
}

// C = A(n x m) * B(k x m)^T
template <typename T>
Tensor<T> gemm_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    }
    const int64_t n = a.rows(), m = a.cols(), k = b.rows();
    Tensor<T> c(n, k);
    T* out = c.mut();
    const T* pa = a.data();
    const T* pb = b.data();
    parallel_for(n, [&](int64_t i) {
        T* row = out + i * k;
        const T* arow = pa + i * m;
        for (int64_t j = 0; j < k; ++j) {
            const T* brow = pb + j * m;
            T acc = T(0);
            for (int64_t l = 0; l < m; ++l) acc += arow[l] * brow[l];
            row[j] = acc;
        }
    }, /*grain=*/16);
    return c;
}

// C = A(n x k)^T * B(n x m)
template <typename T>
Tensor<T> gemm_tn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dims " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
    }
    const int64_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor<T> c(k, m);
    T* out = c.mut();
    const T* pa = a.data();
    const T* pb = b.data();
    parallel_for(k, [&](int64_t i) {
        T* row = out + i * m;
        for (int64_t l = 0; l < n; ++l) {
            const T av = pa[l * k + i];
            if (av == T(0)) continue;
            const T* brow = pb + l * m;
            for (int64_t j = 0; j < m; ++j) row[j] += av * brow[j];
        }
    }, /*grain=*/16);
    return c;
}

template <typename T>
Tensor<T> colsum(const Tensor<T>& a) {
    Tensor<T> s(1, a.cols());
    T* out = s.mut();
    const T* p = a.data();
    for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < a.cols(); ++j) out[j] += p[i * a.cols() + j];
    }
    return s;
}

}  // namespace rgi
