#pragma once

#include <memory>

#include "segkit/graph.hpp"
#include "segkit/kernels.hpp"

namespace segkit {

// Factories for the graph ops the architectures are built from. Input arity
// is noted per op; parameters (kernels, gains) enter as parameter nodes wired
// to the op, so their gradients fall out of the normal reverse traversal.

/// inputs: x, w [, b]
template <typename T>
std::unique_ptr<OpT<T>> make_conv2d_op(std::size_t stride, std::size_t pad);

/// inputs: x, w [, b]
template <typename T>
std::unique_ptr<OpT<T>> make_transposed_conv2d_op(std::size_t stride, std::size_t pad);

/// inputs: x
template <typename T>
std::unique_ptr<OpT<T>> make_maxpool2d_op(std::size_t k, std::size_t stride);

/// inputs: x
template <typename T>
std::unique_ptr<OpT<T>> make_activation_op(Activation kind);

/// inputs: x
template <typename T>
std::unique_ptr<OpT<T>> make_softmax_channels_op();

/// inputs: x, gamma, beta; owns running_mean/running_var state
template <typename T>
std::unique_ptr<OpT<T>> make_batchnorm2d_op(std::size_t channels, T momentum, T eps);

/// inputs: a, b
template <typename T>
std::unique_ptr<OpT<T>> make_merge_op(MergeKind kind);

/// inputs: a, b; elementwise product
template <typename T>
std::unique_ptr<OpT<T>> make_mul_op();

/// inputs: x; sums every element into a scalar
template <typename T>
std::unique_ptr<OpT<T>> make_sum_op();

/// inputs: scalar x; natural log of (x + offset)
template <typename T>
std::unique_ptr<OpT<T>> make_log_op(T offset = T(0));

/// inputs: scalar a, scalar b; a - b
template <typename T>
std::unique_ptr<OpT<T>> make_sub_op();

} // namespace segkit
