#include "segkit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace segkit {

namespace {

template <typename T>
void require_rank4(const TensorT<T>& t, const char* what) {
    if (t.rank() != 4)
        throw shape_error(std::string(what) + " must be rank 4, got " + shape_str(t));
}

// col is (C*kh*kw) x (Ho*Wo) for one image plane set
template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t Ho, std::size_t Wo, T* col) {
    const std::size_t P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        const T* plane = x + c * H * W;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * P;
                for (std::size_t oh = 0; oh < Ho; ++oh, dst += Wo) {
                    const std::ptrdiff_t ih =
                        std::ptrdiff_t(oh * stride + ki) - std::ptrdiff_t(pad);
                    if (ih < 0 || ih >= std::ptrdiff_t(H)) {
                        std::fill(dst, dst + Wo, T(0));
                        continue;
                    }
                    const T* src = plane + std::size_t(ih) * W;
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const std::ptrdiff_t iw =
                            std::ptrdiff_t(ow * stride + kj) - std::ptrdiff_t(pad);
                        dst[ow] = (iw >= 0 && iw < std::ptrdiff_t(W)) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

// scatter-add of a col matrix back into the image plane set; adjoint of im2col
template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                std::size_t Ho, std::size_t Wo, T* x) {
    const std::size_t P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        T* plane = x + c * H * W;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * P;
                for (std::size_t oh = 0; oh < Ho; ++oh, src += Wo) {
                    const std::ptrdiff_t ih =
                        std::ptrdiff_t(oh * stride + ki) - std::ptrdiff_t(pad);
                    if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                    T* dst = plane + std::size_t(ih) * W;
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const std::ptrdiff_t iw =
                            std::ptrdiff_t(ow * stride + kj) - std::ptrdiff_t(pad);
                        if (iw >= 0 && iw < std::ptrdiff_t(W)) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_conv_args(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                     std::size_t stride, std::size_t w_in_dim, std::size_t w_out_dim,
                     const char* op) {
    require_rank4(x, op);
    require_rank4(w, op);
    if (stride < 1) throw config_error(std::string(op) + ": stride must be >= 1");
    if (x.dim(1) != w.dim(w_in_dim))
        throw shape_error(std::string(op) + ": input has " + std::to_string(x.dim(1)) +
                          " channels but kernel expects " + std::to_string(w.dim(w_in_dim)));
    if (!b.empty() && (b.rank() != 1 || b.dim(0) != w.dim(w_out_dim)))
        throw shape_error(std::string(op) + ": bias shape " + shape_str(b) +
                          " does not match " + std::to_string(w.dim(w_out_dim)) + " filters");
}

} // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k > in + 2 * pad)
        throw shape_error("conv2d: kernel " + std::to_string(k) + " exceeds padded extent " +
                          std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

std::size_t tconv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    const std::size_t grown = (in - 1) * stride + k;
    if (grown <= 2 * pad)
        throw shape_error("transposed_conv2d: padding " + std::to_string(pad) +
                          " swallows the whole output extent");
    return grown - 2 * pad;
}

// ---------------------------------------------------------------------------
// GEMM
// ---------------------------------------------------------------------------

template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        T* crow = C + i * N;
        if (!accumulate) std::fill(crow, crow + N, T(0));
        for (std::size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            if (a == T(0)) continue;
            const T* brow = B + k * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate) {
    if (!accumulate) std::fill(C, C + M * N, T(0));
    for (std::size_t k = 0; k < K; ++k) {
        const T* arow = A + k * M;
        const T* brow = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const T a = arow[i];
            if (a == T(0)) continue;
            T* crow = C + i * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N,
             const T* A, const T* B, T* C, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* arow = A + i * K;
        T* crow = C + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const T* brow = B + j * K;
            T acc = T(0);
            for (std::size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            if (accumulate) crow[j] += acc; else crow[j] = acc;
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  std::size_t stride, std::size_t pad) {
    check_conv_args(x, w, b, stride, 1, 0, "conv2d");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = conv_out_extent(H, kh, stride, pad);
    const std::size_t Wo = conv_out_extent(W, kw, stride, pad);
    const std::size_t CKK = C * kh * kw, P = Ho * Wo;

    TensorT<T> y({N, F, Ho, Wo});
    std::vector<T> col(CKK * P);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
        T* yn = y.data() + n * F * P;
        gemm_nn(F, CKK, P, w.data(), col.data(), yn, false);
        if (!b.empty()) {
            for (std::size_t f = 0; f < F; ++f) {
                const T bias = b[f];
                T* row = yn + f * P;
                for (std::size_t p = 0; p < P; ++p) row[p] += bias;
            }
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                     std::size_t stride, std::size_t pad,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = dy.dim(2), Wo = dy.dim(3);
    const std::size_t CKK = C * kh * kw, P = Ho * Wo;

    std::vector<T> col(CKK * P);
    std::vector<T> dcol(dx ? CKK * P : 0);
    for (std::size_t n = 0; n < N; ++n) {
        const T* dyn = dy.data() + n * F * P;
        if (dw || dx) {
            if (dw) {
                im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
                gemm_nt(F, P, CKK, dyn, col.data(), dw->data(), true);
            }
            if (dx) {
                gemm_tn(CKK, F, P, w.data(), dyn, dcol.data(), false);
                col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                           dx->data() + n * C * H * W);
            }
        }
        if (db) {
            for (std::size_t f = 0; f < F; ++f) {
                const T* row = dyn + f * P;
                T acc = T(0);
                for (std::size_t p = 0; p < P; ++p) acc += row[p];
                (*db)[f] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// transposed conv2d
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> transposed_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                             std::size_t stride, std::size_t pad) {
    check_conv_args(x, w, b, stride, 0, 1, "transposed_conv2d");
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = tconv_out_extent(H, kh, stride, pad);
    const std::size_t Wo = tconv_out_extent(W, kw, stride, pad);
    const std::size_t OKK = Cout * kh * kw, Pin = H * W;

    TensorT<T> y({N, Cout, Ho, Wo});
    std::vector<T> cols(OKK * Pin);
    for (std::size_t n = 0; n < N; ++n) {
        // cols = w^T (viewed Cin x Cout*kh*kw) times the input plane rows
        gemm_tn(OKK, Cin, Pin, w.data(), x.data() + n * Cin * Pin, cols.data(), false);
        col2im_add(cols.data(), Cout, Ho, Wo, kh, kw, stride, pad, H, W,
                   y.data() + n * Cout * Ho * Wo);
        if (!b.empty()) {
            T* yn = y.data() + n * Cout * Ho * Wo;
            for (std::size_t c = 0; c < Cout; ++c) {
                const T bias = b[c];
                T* row = yn + c * Ho * Wo;
                for (std::size_t p = 0; p < Ho * Wo; ++p) row[p] += bias;
            }
        }
    }
    return y;
}

template <typename T>
void transposed_conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy,
                                std::size_t stride, std::size_t pad,
                                TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = dy.dim(2), Wo = dy.dim(3);
    const std::size_t OKK = Cout * kh * kw, Pin = H * W;

    std::vector<T> col(OKK * Pin);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(dy.data() + n * Cout * Ho * Wo, Cout, Ho, Wo, kh, kw, stride, pad, H, W,
               col.data());
        if (dx)
            gemm_nn(Cin, OKK, Pin, w.data(), col.data(), dx->data() + n * Cin * Pin, true);
        if (dw)
            gemm_nt(Cin, Pin, OKK, x.data() + n * Cin * Pin, col.data(), dw->data(), true);
        if (db) {
            const T* dyn = dy.data() + n * Cout * Ho * Wo;
            for (std::size_t c = 0; c < Cout; ++c) {
                const T* row = dyn + c * Ho * Wo;
                T acc = T(0);
                for (std::size_t p = 0; p < Ho * Wo; ++p) acc += row[p];
                (*db)[c] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// max pooling
// ---------------------------------------------------------------------------

template <typename T>
MaxPoolResult<T> maxpool2d(const TensorT<T>& x, std::size_t k, std::size_t stride) {
    require_rank4(x, "maxpool2d");
    if (stride < 1) throw config_error("maxpool2d: stride must be >= 1");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (k > H || k > W)
        throw shape_error("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                          shape_str(x));
    const std::size_t Ho = (H - k) / stride + 1;
    const std::size_t Wo = (W - k) / stride + 1;

    MaxPoolResult<T> res{TensorT<T>({N, C, Ho, Wo}), {}};
    res.argmax.resize(N * C * Ho * Wo);
    std::size_t out = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T* plane = x.data() + (n * C + c) * H * W;
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow, ++out) {
                    T best = plane[oh * stride * W + ow * stride];
                    std::uint32_t arg = std::uint32_t(oh * stride * W + ow * stride);
                    for (std::size_t ki = 0; ki < k; ++ki)
                        for (std::size_t kj = 0; kj < k; ++kj) {
                            const std::size_t idx = (oh * stride + ki) * W + ow * stride + kj;
                            if (plane[idx] > best) { // strict: ties keep first in scan order
                                best = plane[idx];
                                arg = std::uint32_t(idx);
                            }
                        }
                    res.output[out] = best;
                    res.argmax[out] = arg;
                }
        }
    return res;
}

template <typename T>
void maxpool2d_backward(const TensorT<T>& dy, const std::vector<std::uint32_t>& argmax,
                        TensorT<T>& dx) {
    const std::size_t N = dy.dim(0), C = dy.dim(1);
    const std::size_t P = dy.dim(2) * dy.dim(3);
    const std::size_t planeIn = dx.dim(2) * dx.dim(3);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* src = dy.data() + nc * P;
        T* dst = dx.data() + nc * planeIn;
        const std::uint32_t* arg = argmax.data() + nc * P;
        for (std::size_t p = 0; p < P; ++p) dst[arg[p]] += src[p];
    }
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
static T stable_sigmoid(T v) {
    if (v >= T(0)) {
        return T(1) / (T(1) + std::exp(-v));
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
TensorT<T> activation(const TensorT<T>& x, Activation kind) {
    TensorT<T> y(x.shape());
    const std::size_t n = x.size();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    } else {
        for (std::size_t i = 0; i < n; ++i) y[i] = stable_sigmoid(x[i]);
    }
    return y;
}

template <typename T>
void activation_backward(const TensorT<T>& x, const TensorT<T>& y, const TensorT<T>& dy,
                         Activation kind, TensorT<T>& dx) {
    const std::size_t n = x.size();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i)
            if (x[i] > T(0)) dx[i] += dy[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
    }
}

template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& x) {
    require_rank4(x, "softmax_channels");
    const std::size_t N = x.dim(0), K = x.dim(1), HW = x.dim(2) * x.dim(3);
    TensorT<T> y(x.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) {
            T m = x[(n * K) * HW + p];
            for (std::size_t c = 1; c < K; ++c)
                m = std::max(m, x[(n * K + c) * HW + p]);
            T sum = T(0);
            for (std::size_t c = 0; c < K; ++c) {
                const T e = std::exp(x[(n * K + c) * HW + p] - m);
                y[(n * K + c) * HW + p] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < K; ++c) y[(n * K + c) * HW + p] /= sum;
        }
    return y;
}

template <typename T>
void softmax_channels_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>& dx) {
    const std::size_t N = y.dim(0), K = y.dim(1), HW = y.dim(2) * y.dim(3);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) {
            T dot = T(0);
            for (std::size_t c = 0; c < K; ++c)
                dot += dy[(n * K + c) * HW + p] * y[(n * K + c) * HW + p];
            for (std::size_t c = 0; c < K; ++c) {
                const std::size_t i = (n * K + c) * HW + p;
                dx[i] += y[i] * (dy[i] - dot);
            }
        }
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_bn_args(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta) {
    require_rank4(x, "batchnorm2d");
    const std::size_t C = x.dim(1);
    if (gamma.size() != C || beta.size() != C)
        throw shape_error("batchnorm2d: gamma/beta must have length " + std::to_string(C));
}

} // namespace

template <typename T>
TensorT<T> batchnorm2d_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             TensorT<T>& running_mean, TensorT<T>& running_var,
                             T momentum, T eps, BatchNormContext<T>& ctx) {
    check_bn_args(x, gamma, beta);
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    const std::size_t m = N * HW;

    ctx.mean = TensorT<T>({C});
    ctx.var = TensorT<T>({C});
    ctx.xhat = TensorT<T>(x.shape());
    TensorT<T> y(x.shape());

    for (std::size_t c = 0; c < C; ++c) {
        T sum = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* row = x.data() + (n * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) sum += row[p];
        }
        const T mean = sum / T(m);
        T sq = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* row = x.data() + (n * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) {
                const T d = row[p] - mean;
                sq += d * d;
            }
        }
        const T var = sq / T(m);
        ctx.mean[c] = mean;
        ctx.var[c] = var;
        const T invstd = T(1) / std::sqrt(var + eps);
        for (std::size_t n = 0; n < N; ++n) {
            const T* row = x.data() + (n * C + c) * HW;
            T* xh = ctx.xhat.data() + (n * C + c) * HW;
            T* yr = y.data() + (n * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) {
                xh[p] = (row[p] - mean) * invstd;
                yr[p] = gamma[c] * xh[p] + beta[c];
            }
        }
        const T unbiased = m > 1 ? var * T(m) / T(m - 1) : var;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
    }
    return y;
}

template <typename T>
TensorT<T> batchnorm2d_eval(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                            const TensorT<T>& running_mean, const TensorT<T>& running_var, T eps) {
    check_bn_args(x, gamma, beta);
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    TensorT<T> y(x.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const T invstd = T(1) / std::sqrt(running_var[c] + eps);
        const T scale = gamma[c] * invstd;
        const T shift = beta[c] - scale * running_mean[c];
        for (std::size_t n = 0; n < N; ++n) {
            const T* row = x.data() + (n * C + c) * HW;
            T* yr = y.data() + (n * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) yr[p] = scale * row[p] + shift;
        }
    }
    return y;
}

template <typename T>
void batchnorm2d_train_backward(const TensorT<T>& dy, const TensorT<T>& gamma,
                                const BatchNormContext<T>& ctx, T eps,
                                TensorT<T>* dx, TensorT<T>* dgamma, TensorT<T>* dbeta) {
    const std::size_t N = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
    const std::size_t m = N * HW;
    for (std::size_t c = 0; c < C; ++c) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* dyr = dy.data() + (n * C + c) * HW;
            const T* xh = ctx.xhat.data() + (n * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) {
                sum_dy += dyr[p];
                sum_dy_xhat += dyr[p] * xh[p];
            }
        }
        if (dgamma) (*dgamma)[c] += sum_dy_xhat;
        if (dbeta) (*dbeta)[c] += sum_dy;
        if (dx) {
            const T invstd = T(1) / std::sqrt(ctx.var[c] + eps);
            const T scale = gamma[c] * invstd / T(m);
            for (std::size_t n = 0; n < N; ++n) {
                const T* dyr = dy.data() + (n * C + c) * HW;
                const T* xh = ctx.xhat.data() + (n * C + c) * HW;
                T* dxr = dx->data() + (n * C + c) * HW;
                for (std::size_t p = 0; p < HW; ++p)
                    dxr[p] += scale * (T(m) * dyr[p] - sum_dy - xh[p] * sum_dy_xhat);
            }
        }
    }
}

template <typename T>
void batchnorm2d_eval_backward(const TensorT<T>& dy, const TensorT<T>& gamma,
                               const TensorT<T>& x, const TensorT<T>& running_mean,
                               const TensorT<T>& running_var, T eps,
                               TensorT<T>* dx, TensorT<T>* dgamma, TensorT<T>* dbeta) {
    const std::size_t N = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
    for (std::size_t c = 0; c < C; ++c) {
        const T invstd = T(1) / std::sqrt(running_var[c] + eps);
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* dyr = dy.data() + (n * C + c) * HW;
            const T* xr = x.data() + (n * C + c) * HW;
            T* dxr = dx ? dx->data() + (n * C + c) * HW : nullptr;
            for (std::size_t p = 0; p < HW; ++p) {
                sum_dy += dyr[p];
                sum_dy_xhat += dyr[p] * (xr[p] - running_mean[c]) * invstd;
                if (dxr) dxr[p] += dyr[p] * gamma[c] * invstd;
            }
        }
        if (dgamma) (*dgamma)[c] += sum_dy_xhat;
        if (dbeta) (*dbeta)[c] += sum_dy;
    }
}

// ---------------------------------------------------------------------------
// merges
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> merge(const TensorT<T>& a, const TensorT<T>& b, MergeKind kind) {
    require_rank4(a, "merge");
    require_rank4(b, "merge");
    if (kind == MergeKind::add) {
        if (!a.same_shape(b))
            throw shape_error("merge(add): shapes differ, " + shape_str(a) + " vs " +
                              shape_str(b));
        TensorT<T> y(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
        return y;
    }
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw shape_error("merge(concat): spatial/batch mismatch, " + shape_str(a) + " vs " +
                          shape_str(b));
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::size_t HW = a.dim(2) * a.dim(3);
    TensorT<T> y({N, Ca + Cb, a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        std::memcpy(y.data() + n * (Ca + Cb) * HW, a.data() + n * Ca * HW,
                    Ca * HW * sizeof(T));
        std::memcpy(y.data() + (n * (Ca + Cb) + Ca) * HW, b.data() + n * Cb * HW,
                    Cb * HW * sizeof(T));
    }
    return y;
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t c0, std::size_t c1) {
    require_rank4(x, "slice_channels");
    if (c0 >= c1 || c1 > x.dim(1))
        throw shape_error("slice_channels: bad range [" + std::to_string(c0) + "," +
                          std::to_string(c1) + ") for " + shape_str(x));
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    TensorT<T> y({N, c1 - c0, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < N; ++n)
        std::memcpy(y.data() + n * (c1 - c0) * HW, x.data() + (n * C + c0) * HW,
                    (c1 - c0) * HW * sizeof(T));
    return y;
}

// ---------------------------------------------------------------------------
// explicit instantiation for the two supported precisions
// ---------------------------------------------------------------------------

#define SEGKIT_INSTANTIATE_KERNELS(T)                                                        \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,  \
                                  std::size_t, std::size_t);                                 \
    template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                     std::size_t, std::size_t, TensorT<T>*, TensorT<T>*,    \
                                     TensorT<T>*);                                           \
    template TensorT<T> transposed_conv2d<T>(const TensorT<T>&, const TensorT<T>&,          \
                                             const TensorT<T>&, std::size_t, std::size_t);  \
    template void transposed_conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,       \
                                                const TensorT<T>&, std::size_t, std::size_t, \
                                                TensorT<T>*, TensorT<T>*, TensorT<T>*);     \
    template MaxPoolResult<T> maxpool2d<T>(const TensorT<T>&, std::size_t, std::size_t);    \
    template void maxpool2d_backward<T>(const TensorT<T>&, const std::vector<std::uint32_t>&, \
                                        TensorT<T>&);                                        \
    template TensorT<T> activation<T>(const TensorT<T>&, Activation);                       \
    template void activation_backward<T>(const TensorT<T>&, const TensorT<T>&,              \
                                         const TensorT<T>&, Activation, TensorT<T>&);       \
    template TensorT<T> softmax_channels<T>(const TensorT<T>&);                             \
    template void softmax_channels_backward<T>(const TensorT<T>&, const TensorT<T>&,        \
                                               TensorT<T>&);                                 \
    template TensorT<T> batchnorm2d_train<T>(const TensorT<T>&, const TensorT<T>&,          \
                                             const TensorT<T>&, TensorT<T>&, TensorT<T>&, T, \
                                             T, BatchNormContext<T>&);                       \
    template TensorT<T> batchnorm2d_eval<T>(const TensorT<T>&, const TensorT<T>&,           \
                                            const TensorT<T>&, const TensorT<T>&,           \
                                            const TensorT<T>&, T);                          \
    template void batchnorm2d_train_backward<T>(const TensorT<T>&, const TensorT<T>&,       \
                                                const BatchNormContext<T>&, T, TensorT<T>*, \
                                                TensorT<T>*, TensorT<T>*);                   \
    template void batchnorm2d_eval_backward<T>(const TensorT<T>&, const TensorT<T>&,        \
                                               const TensorT<T>&, const TensorT<T>&,        \
                                               const TensorT<T>&, T, TensorT<T>*,           \
                                               TensorT<T>*, TensorT<T>*);                   \
    template TensorT<T> merge<T>(const TensorT<T>&, const TensorT<T>&, MergeKind);          \
    template TensorT<T> slice_channels<T>(const TensorT<T>&, std::size_t, std::size_t);     \
    template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                             bool);                                                          \
    template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                             bool);                                                          \
    template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                             bool);

SEGKIT_INSTANTIATE_KERNELS(float)
SEGKIT_INSTANTIATE_KERNELS(double)

#undef SEGKIT_INSTANTIATE_KERNELS

} // namespace segkit
