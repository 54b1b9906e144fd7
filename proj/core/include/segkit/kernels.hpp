#pragma once

#include <cstdint>
#include <vector>

#include "segkit/tensor.hpp"

namespace segkit {

/// Output extent of a cross-correlation: floor((in + 2*pad - k)/stride) + 1.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

/// Output extent of a transposed convolution: (in - 1)*stride + k - 2*pad.
std::size_t tconv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

// ---------------------------------------------------------------------------
// Convolution. x: N x C x H x W, w: F x C x kh x kw, b: F (or default tensor
// for no bias). Zero padding, cross-correlation convention.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  std::size_t stride, std::size_t pad);

/// Accumulates (+=) into any of dx/dw/db that are non-null.
template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     std::size_t stride, std::size_t pad,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db);

// ---------------------------------------------------------------------------
// Transposed convolution, the adjoint of conv2d's forward pass.
// x: N x Cin x H x W, w: Cin x Cout x kh x kw, b: Cout (or default tensor).
// Running it on dy with conv2d's kernel reproduces conv2d's input gradient.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> transposed_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                             std::size_t stride, std::size_t pad = 0);

template <typename T>
void transposed_conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                                std::size_t stride, std::size_t pad,
                                TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db);

// ---------------------------------------------------------------------------
// Max pooling. Records the argmax (flat h*W + w index per output cell) so the
// backward pass routes gradient to exactly one position per window. Ties break
// to the first occurrence in row-major window scan order.
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPoolResult {
    TensorT<T> output;
    std::vector<std::uint32_t> argmax; // one entry per output element
};

template <typename T>
MaxPoolResult<T> maxpool2d(const TensorT<T>& x, std::size_t k, std::size_t stride);

template <typename T>
void maxpool2d_backward(const TensorT<T>& dy, const std::vector<std::uint32_t>& argmax,
                        TensorT<T>& dx);

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------

enum class Activation { relu, sigmoid };

template <typename T>
TensorT<T> activation(const TensorT<T>& x, Activation kind);

/// dx += dy * act'(x); pass the forward output y (used by sigmoid).
template <typename T>
void activation_backward(const TensorT<T>& x, const TensorT<T>& y, const TensorT<T>& dy,
                         Activation kind, TensorT<T>& dx);

/// Channelwise softmax over dim 1 of an N x K x H x W tensor.
template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& x);

template <typename T>
void softmax_channels_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx);

// ---------------------------------------------------------------------------
// Batch normalization over N,H,W per channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormContext {
    TensorT<T> mean;  // C
    TensorT<T> var;   // C, biased
    TensorT<T> xhat;  // same shape as x
};

/// Normalizes by batch statistics and updates running stats in place with the
/// given momentum (running <- (1-momentum)*running + momentum*batch). The
/// running variance uses the unbiased batch estimate.
template <typename T>
TensorT<T> batchnorm2d_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             TensorT<T>& running_mean, TensorT<T>& running_var,
                             T momentum, T eps, BatchNormContext<T>& ctx);

template <typename T>
TensorT<T> batchnorm2d_eval(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                            const TensorT<T>& running_mean, const TensorT<T>& running_var, T eps);

template <typename T>
void batchnorm2d_train_backward(const TensorT<T>& dy, const TensorT<T>& gamma,
                                const BatchNormContext<T>& ctx, T eps,
                                TensorT<T>* dx, TensorT<T>* dgamma, TensorT<T>* dbeta);

template <typename T>
void batchnorm2d_eval_backward(const TensorT<T>& dy, const TensorT<T>& gamma,
                               const TensorT<T>& x, const TensorT<T>& running_mean,
                               const TensorT<T>& running_var, T eps,
                               TensorT<T>* dx, TensorT<T>* dgamma, TensorT<T>* dbeta);

// ---------------------------------------------------------------------------
// Skip merges.
// ---------------------------------------------------------------------------

enum class MergeKind { concat_channels, add };

template <typename T>
TensorT<T> merge(const TensorT<T>& a, const TensorT<T>& b, MergeKind kind);

/// Channels [c0, c1) of an N x C x H x W tensor.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t c0, std::size_t c1);

// ---------------------------------------------------------------------------
// GEMM primitives used by the convolution paths (row-major, contiguous).
// Exposed for benchmarks.
// ---------------------------------------------------------------------------

/// C (MxN) = or += A (MxK) * B (KxN)
template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate);

/// C (MxN) += A^T * B with A stored KxM, B stored KxN
template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate);

/// C (MxN) += A (MxK) * B^T with B stored NxK
template <typename T>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate);

} // namespace segkit
