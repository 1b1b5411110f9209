#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rgi/error.hpp"

namespace rgi {

// Dense row-major 2-D matrix. Storage is shared and copy-on-write: copies of
// a Tensor alias the same buffer until one of them calls mut(). A Tensor
// created by an operation recorded on a tape carries the node handle of that
// operation; node() < 0 means the tensor lives outside any tape.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(int64_t rows, int64_t cols)
        : rows_(rows),
          cols_(cols),
          buf_(std::make_shared<std::vector<T>>(static_cast<size_t>(rows * cols), T(0))) {}

    Tensor(int64_t rows, int64_t cols, std::vector<T> values)
        : rows_(rows), cols_(cols), buf_(std::make_shared<std::vector<T>>(std::move(values))) {
        if (static_cast<int64_t>(buf_->size()) != rows * cols) {
            throw ShapeError("tensor: value count " + std::to_string(buf_->size()) +
                             " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    static Tensor full(int64_t rows, int64_t cols, T value) {
        Tensor t(rows, cols);
        for (auto& x : *t.buf_) x = value;
        return t;
    }

    int64_t rows() const { return rows_; }
    int64_t cols() const { return cols_; }
    int64_t size() const { return rows_ * cols_; }
    bool empty() const { return size() == 0; }

    const T* data() const { return buf_->data(); }
    const std::vector<T>& values() const { return *buf_; }
    std::shared_ptr<const std::vector<T>> shared_values() const { return buf_; }

    T operator()(int64_t i, int64_t j) const { return (*buf_)[static_cast<size_t>(i * cols_ + j)]; }

    // Writable view; clones the buffer first when it is shared.
    T* mut() {
        if (buf_.use_count() > 1) buf_ = std::make_shared<std::vector<T>>(*buf_);
        return buf_->data();
    }

    int node() const { return node_; }
    bool requires_grad() const { return requires_grad_; }

    // Tape bookkeeping; not meant to be called outside tape code.
    void bind_node(int node, bool requires_grad) {
        node_ = node;
        requires_grad_ = requires_grad;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(static_cast<size_t>(size()));
        const T* src = data();
        for (int64_t i = 0; i < size(); ++i) out[static_cast<size_t>(i)] = static_cast<U>(src[i]);
        return Tensor<U>(rows_, cols_, std::move(out));
    }

private:
    int64_t rows_ = 0;
    int64_t cols_ = 0;
    std::shared_ptr<std::vector<T>> buf_ = std::make_shared<std::vector<T>>();
    int node_ = -1;
    bool requires_grad_ = false;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!same_shape(a, b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

}  // namespace rgi
