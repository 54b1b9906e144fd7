#pragma once

#include <memory>
#include <string>

#include "segkit/graph.hpp"
#include "segkit/mask.hpp"

namespace segkit {

/// Smoothing used in soft-Jaccard denominators and inside the loss log; the
/// ratio is undefined at y = yhat = 0 and the log at J = 0.
inline constexpr double kJaccardEps = 1e-7;

/// BCE probabilities are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

/// The soft Jaccard comes in two shapes: the literal per-pixel mean of
/// y*yhat / (y + yhat - y*yhat), and the aggregate sum form
/// (sum y*yhat) / (sum y + sum yhat - sum y*yhat). Training defaults to
/// aggregate; the per-pixel mean is dominated by background pixels.
enum class JaccardVariant { per_pixel, aggregate };

struct MetricValue {
    std::string name; // iou | dice | bce | loss
    double value = 0.0;
};

// ---------------------------------------------------------------------------
// Hard metrics on binarized masks. Both define empty-vs-empty as 1.0 so
// pathology-free frames evaluate cleanly.
// ---------------------------------------------------------------------------

double iou_binary(const BinaryMask& a, const BinaryMask& b);
double dice(const BinaryMask& a, const BinaryMask& b);

// ---------------------------------------------------------------------------
// Loss values computed directly on tensors (labels must be {0,1}, probs in
// [0,1], identical shapes).
// ---------------------------------------------------------------------------

template <typename T>
double soft_jaccard(const TensorT<T>& probs, const TensorT<T>& labels, JaccardVariant variant,
                    double eps = kJaccardEps);

template <typename T>
double bce(const TensorT<T>& probs, const TensorT<T>& labels);

/// Multi-class variant of H: mean over pixels of -sum_k y_k log p_k.
/// probs and onehot are N x K x H x W.
template <typename T>
double categorical_cross_entropy(const TensorT<T>& probs, const TensorT<T>& onehot);

/// H - log(J + eps)
template <typename T>
double combined_loss(const TensorT<T>& probs, const TensorT<T>& labels, JaccardVariant variant,
                     double eps = kJaccardEps);

// ---------------------------------------------------------------------------
// Differentiable graph ops (inputs: probs, labels; gradient flows to probs).
// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<OpT<T>> make_bce_op();

template <typename T>
std::unique_ptr<OpT<T>> make_soft_jaccard_op(JaccardVariant variant, T eps = T(kJaccardEps));

template <typename T>
std::unique_ptr<OpT<T>> make_cce_op();

/// Node ids of the loss subgraph wired behind a probability node.
struct LossNodes {
    int labels = -1;
    int bce = -1;
    int jaccard = -1;
    int loss = -1; // bce - log(jaccard + eps)
};

template <typename T>
LossNodes attach_combined_loss(GraphT<T>& g, int probs_node, JaccardVariant variant,
                               T eps = T(kJaccardEps));

} // namespace segkit
