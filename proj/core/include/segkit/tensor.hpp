#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "segkit/errors.hpp"

namespace segkit {

/// Dense N-dimensional array in row-major layout. Image batches use
/// N x C x H x W order. Instantiated for float (training) and double
/// (gradient checking).
template <typename T>
class TensorT {
public:
    TensorT() = default;

    /// Zero-filled tensor. Every extent must be >= 1.
    explicit TensorT(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

    TensorT(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_))
            throw shape_error("tensor data length does not match shape product");
    }

    static TensorT full(std::vector<std::size_t> shape, T value) {
        TensorT t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static TensorT scalar(T value) { return TensorT({1}, {value}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    /// 4-d accessors for N x C x H x W tensors.
    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    void fill(T value) {
        for (auto& v : data_) v = value;
    }

    void zero() { fill(T(0)); }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw shape_error("tensor shape must have at least one extent");
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw shape_error("tensor extents must all be >= 1");
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

/// Human-readable "N x C x H x W" string for error messages.
template <typename T>
std::string shape_str(const TensorT<T>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.shape().size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape()[i]);
    }
    return s;
}

} // namespace segkit
