#include "segkit/loss_metrics.hpp"

#include <cmath>

#include "segkit/errors.hpp"
#include "segkit/ops.hpp"

namespace segkit {

namespace {

void check_mask_pair(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": mask shapes differ (" + std::to_string(a.rows) +
                          "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + ")");
}

template <typename T>
void check_tensor_pair(const TensorT<T>& probs, const TensorT<T>& labels, const char* op) {
    if (!probs.same_shape(labels))
        throw shape_error(std::string(op) + ": prediction shape " + shape_str(probs) +
                          " does not match label shape " + shape_str(labels));
}

template <typename T>
T clamp_prob(T p) {
    const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
    return p < lo ? lo : (p > hi ? hi : p);
}

} // namespace

BinaryMask mask_from_labels(const Tensor& labels) {
    const auto& s = labels.shape();
    if (s.size() < 2) throw shape_error("mask_from_labels: need at least H x W");
    BinaryMask m(s[s.size() - 2], s[s.size() - 1]);
    if (m.size() != labels.size())
        throw shape_error("mask_from_labels: leading extents must be 1, got " +
                          shape_str(labels));
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = labels[i] > 0.5f ? 255 : 0;
    return m;
}

Tensor labels_from_mask(const BinaryMask& mask) {
    Tensor t({mask.rows, mask.cols});
    for (std::size_t i = 0; i < mask.size(); ++i) t[i] = mask.data[i] ? 1.0f : 0.0f;
    return t;
}

double iou_binary(const BinaryMask& a, const BinaryMask& b) {
    check_mask_pair(a, b, "iou_binary");
    std::size_t inter = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
        inter += (pa && pb);
        ca += pa;
        cb += pb;
    }
    const std::size_t uni = ca + cb - inter;
    if (uni == 0) return 1.0; // both empty
    return double(inter) / double(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    check_mask_pair(a, b, "dice");
    std::size_t inter = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
        inter += (pa && pb);
        ca += pa;
        cb += pb;
    }
    if (ca + cb == 0) return 1.0;
    return 2.0 * double(inter) / double(ca + cb);
}

template <typename T>
double soft_jaccard(const TensorT<T>& probs, const TensorT<T>& labels, JaccardVariant variant,
                    double eps) {
    check_tensor_pair(probs, labels, "soft_jaccard");
    const std::size_t n = probs.size();
    if (variant == JaccardVariant::per_pixel) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = labels[i], p = probs[i];
            acc += y * p / (y + p - y * p + eps);
        }
        return acc / double(n);
    }
    double inter = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i], p = probs[i];
        inter += y * p;
        sum += y + p;
    }
    return (inter + eps) / (sum - inter + eps);
}

template <typename T>
double bce(const TensorT<T>& probs, const TensorT<T>& labels) {
    check_tensor_pair(probs, labels, "bce");
    const std::size_t n = probs.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i];
        const double p = clamp_prob(double(probs[i]));
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return acc / double(n);
}

template <typename T>
double categorical_cross_entropy(const TensorT<T>& probs, const TensorT<T>& onehot) {
    check_tensor_pair(probs, onehot, "categorical_cross_entropy");
    if (probs.rank() != 4) throw shape_error("categorical_cross_entropy: expects N x K x H x W");
    const std::size_t N = probs.dim(0), K = probs.dim(1), HW = probs.dim(2) * probs.dim(3);
    double acc = 0.0;
    for (std::size_t nn = 0; nn < N; ++nn)
        for (std::size_t p = 0; p < HW; ++p)
            for (std::size_t c = 0; c < K; ++c) {
                const std::size_t i = (nn * K + c) * HW + p;
                const double y = onehot[i];
                if (y != 0.0) acc -= y * std::log(clamp_prob(double(probs[i])));
            }
    return acc / double(N * HW);
}

template <typename T>
double combined_loss(const TensorT<T>& probs, const TensorT<T>& labels, JaccardVariant variant,
                     double eps) {
    return bce(probs, labels) - std::log(soft_jaccard(probs, labels, variant, eps) + eps);
}

// ---------------------------------------------------------------------------
// graph ops
// ---------------------------------------------------------------------------

namespace {

template <typename T>
class BceOp final : public OpT<T> {
public:
    const char* kind() const override { return "bce"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        return TensorT<T>::scalar(T(bce(*xs[0], *xs[1])));
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (!dxs[0]) return;
        const TensorT<T>& probs = *xs[0];
        const TensorT<T>& labels = *xs[1];
        const std::size_t n = probs.size();
        const T scale = dy[0] / T(n);
        const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
        for (std::size_t i = 0; i < n; ++i) {
            const T p = probs[i];
            if (p < lo || p > hi) continue; // clamp region: zero slope
            (*dxs[0])[i] += scale * (p - labels[i]) / (p * (T(1) - p));
        }
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<BceOp>(*this); }
};

template <typename T>
class SoftJaccardOp final : public OpT<T> {
public:
    SoftJaccardOp(JaccardVariant variant, T eps) : variant_(variant), eps_(eps) {}

    const char* kind() const override { return "soft_jaccard"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        if (variant_ == JaccardVariant::aggregate) {
            // save the sums for backward
            const TensorT<T>& p = *xs[0];
            const TensorT<T>& y = *xs[1];
            check_tensor_pair(p, y, "soft_jaccard");
            double inter = 0.0, sum = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                inter += double(y[i]) * double(p[i]);
                sum += double(y[i]) + double(p[i]);
            }
            inter_ = inter;
            uni_ = sum - inter;
            return TensorT<T>::scalar(T((inter_ + double(eps_)) / (uni_ + double(eps_))));
        }
        return TensorT<T>::scalar(
            T(soft_jaccard(*xs[0], *xs[1], JaccardVariant::per_pixel, double(eps_))));
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (!dxs[0]) return;
        const TensorT<T>& probs = *xs[0];
        const TensorT<T>& labels = *xs[1];
        const std::size_t n = probs.size();
        if (variant_ == JaccardVariant::aggregate) {
            const T ie = T(inter_ + double(eps_));
            const T ue = T(uni_ + double(eps_));
            const T inv2 = dy[0] / (ue * ue);
            for (std::size_t i = 0; i < n; ++i) {
                const T y = labels[i];
                // d/dp of (I+eps)/(U+eps): U grows by (1-y), I by y
                (*dxs[0])[i] += inv2 * (y * ue - ie * (T(1) - y));
            }
            return;
        }
        const T scale = dy[0] / T(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T y = labels[i];
            const T den = y + probs[i] - y * probs[i] + eps_;
            (*dxs[0])[i] += scale * y * (y + eps_) / (den * den);
        }
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<SoftJaccardOp>(*this);
    }

private:
    JaccardVariant variant_;
    T eps_;
    double inter_ = 0.0, uni_ = 0.0;
};

template <typename T>
class CceOp final : public OpT<T> {
public:
    const char* kind() const override { return "categorical_cross_entropy"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        return TensorT<T>::scalar(T(categorical_cross_entropy(*xs[0], *xs[1])));
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (!dxs[0]) return;
        const TensorT<T>& probs = *xs[0];
        const TensorT<T>& onehot = *xs[1];
        const std::size_t N = probs.dim(0);
        const std::size_t HW = probs.dim(2) * probs.dim(3);
        const T scale = dy[0] / T(N * HW);
        const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const T y = onehot[i];
            if (y == T(0)) continue;
            const T p = probs[i];
            if (p < lo || p > hi) continue;
            (*dxs[0])[i] -= scale * y / p;
        }
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<CceOp>(*this); }
};

} // namespace

template <typename T>
std::unique_ptr<OpT<T>> make_bce_op() {
    return std::make_unique<BceOp<T>>();
}

template <typename T>
std::unique_ptr<OpT<T>> make_soft_jaccard_op(JaccardVariant variant, T eps) {
    return std::make_unique<SoftJaccardOp<T>>(variant, eps);
}

template <typename T>
std::unique_ptr<OpT<T>> make_cce_op() {
    return std::make_unique<CceOp<T>>();
}

template <typename T>
LossNodes attach_combined_loss(GraphT<T>& g, int probs_node, JaccardVariant variant, T eps) {
    LossNodes nodes;
    nodes.labels = g.add_input("labels");
    nodes.bce = g.add_op("loss.bce", make_bce_op<T>(), {probs_node, nodes.labels});
    nodes.jaccard =
        g.add_op("loss.jaccard", make_soft_jaccard_op<T>(variant, eps), {probs_node, nodes.labels});
    const int logj = g.add_op("loss.log_jaccard", make_log_op<T>(eps), {nodes.jaccard});
    nodes.loss = g.add_op("loss.total", make_sub_op<T>(), {nodes.bce, logj});
    return nodes;
}

#define SEGKIT_INSTANTIATE_LOSS(T)                                                          \
    template double soft_jaccard<T>(const TensorT<T>&, const TensorT<T>&, JaccardVariant,   \
                                    double);                                                 \
    template double bce<T>(const TensorT<T>&, const TensorT<T>&);                           \
    template double categorical_cross_entropy<T>(const TensorT<T>&, const TensorT<T>&);     \
    template double combined_loss<T>(const TensorT<T>&, const TensorT<T>&, JaccardVariant,  \
                                     double);                                                \
    template std::unique_ptr<OpT<T>> make_bce_op<T>();                                      \
    template std::unique_ptr<OpT<T>> make_soft_jaccard_op<T>(JaccardVariant, T);            \
    template std::unique_ptr<OpT<T>> make_cce_op<T>();                                      \
    template LossNodes attach_combined_loss<T>(GraphT<T>&, int, JaccardVariant, T);

SEGKIT_INSTANTIATE_LOSS(float)
SEGKIT_INSTANTIATE_LOSS(double)

#undef SEGKIT_INSTANTIATE_LOSS

} // namespace segkit
