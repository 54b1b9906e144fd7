#include "segkit/ops.hpp"

#include <cmath>

#include "segkit/errors.hpp"

namespace segkit {

namespace {

template <typename T>
class Conv2dOp final : public OpT<T> {
public:
    Conv2dOp(std::size_t stride, std::size_t pad) : stride_(stride), pad_(pad) {}

    const char* kind() const override { return "conv2d"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        const TensorT<T>& b = xs.size() > 2 ? *xs[2] : none_;
        return conv2d(*xs[0], *xs[1], b, stride_, pad_);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        conv2d_backward(*xs[0], *xs[1], dy, stride_, pad_, dxs[0], dxs[1],
                        dxs.size() > 2 ? dxs[2] : nullptr);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<Conv2dOp>(*this);
    }

private:
    std::size_t stride_, pad_;
    TensorT<T> none_;
};

template <typename T>
class TransposedConv2dOp final : public OpT<T> {
public:
    TransposedConv2dOp(std::size_t stride, std::size_t pad) : stride_(stride), pad_(pad) {}

    const char* kind() const override { return "transposed_conv2d"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        const TensorT<T>& b = xs.size() > 2 ? *xs[2] : none_;
        return transposed_conv2d(*xs[0], *xs[1], b, stride_, pad_);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        transposed_conv2d_backward(*xs[0], *xs[1], dy, stride_, pad_, dxs[0], dxs[1],
                                   dxs.size() > 2 ? dxs[2] : nullptr);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<TransposedConv2dOp>(*this);
    }

private:
    std::size_t stride_, pad_;
    TensorT<T> none_;
};

template <typename T>
class MaxPool2dOp final : public OpT<T> {
public:
    MaxPool2dOp(std::size_t k, std::size_t stride) : k_(k), stride_(stride) {}

    const char* kind() const override { return "maxpool2d"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        auto res = maxpool2d(*xs[0], k_, stride_);
        argmax_ = std::move(res.argmax);
        return std::move(res.output);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>&,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (dxs[0]) maxpool2d_backward(dy, argmax_, *dxs[0]);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<MaxPool2dOp>(*this);
    }

private:
    std::size_t k_, stride_;
    std::vector<std::uint32_t> argmax_;
};

template <typename T>
class ActivationOp final : public OpT<T> {
public:
    explicit ActivationOp(Activation kind) : act_(kind) {}

    const char* kind() const override {
        return act_ == Activation::relu ? "relu" : "sigmoid";
    }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        return activation(*xs[0], act_);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>& y, const std::vector<TensorT<T>*>& dxs) override {
        if (dxs[0]) activation_backward(*xs[0], y, dy, act_, *dxs[0]);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<ActivationOp>(*this);
    }

private:
    Activation act_;
};

template <typename T>
class SoftmaxChannelsOp final : public OpT<T> {
public:
    const char* kind() const override { return "softmax_channels"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        return softmax_channels(*xs[0]);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>&,
                  const TensorT<T>& y, const std::vector<TensorT<T>*>& dxs) override {
        if (dxs[0]) softmax_channels_backward(y, dy, *dxs[0]);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<SoftmaxChannelsOp>(*this);
    }
};

template <typename T>
class BatchNorm2dOp final : public OpT<T> {
public:
    BatchNorm2dOp(std::size_t channels, T momentum, T eps)
        : momentum_(momentum), eps_(eps),
          running_mean_({channels}), running_var_(TensorT<T>::full({channels}, T(1))) {}

    const char* kind() const override { return "batchnorm2d"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool training) override {
        trained_forward_ = training;
        if (training)
            return batchnorm2d_train(*xs[0], *xs[1], *xs[2], running_mean_, running_var_,
                                     momentum_, eps_, ctx_);
        return batchnorm2d_eval(*xs[0], *xs[1], *xs[2], running_mean_, running_var_, eps_);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (trained_forward_)
            batchnorm2d_train_backward(dy, *xs[1], ctx_, eps_, dxs[0], dxs[1], dxs[2]);
        else
            batchnorm2d_eval_backward(dy, *xs[1], *xs[0], running_mean_, running_var_, eps_,
                                      dxs[0], dxs[1], dxs[2]);
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<BatchNorm2dOp>(*this);
    }

    std::vector<std::pair<std::string, TensorT<T>*>> state() override {
        return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
    }

private:
    T momentum_, eps_;
    TensorT<T> running_mean_, running_var_;
    BatchNormContext<T> ctx_;
    bool trained_forward_ = true;
};

template <typename T>
class MergeOp final : public OpT<T> {
public:
    explicit MergeOp(MergeKind kind) : merge_(kind) {}

    const char* kind() const override {
        return merge_ == MergeKind::add ? "add" : "concat_channels";
    }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        return merge(*xs[0], *xs[1], merge_);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (merge_ == MergeKind::add) {
            for (TensorT<T>* dx : dxs) {
                if (!dx) continue;
                for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
            }
            return;
        }
        const std::size_t Ca = xs[0]->dim(1);
        const std::size_t Cb = xs[1]->dim(1);
        if (dxs[0]) {
            TensorT<T> part = slice_channels(dy, 0, Ca);
            for (std::size_t i = 0; i < part.size(); ++i) (*dxs[0])[i] += part[i];
        }
        if (dxs[1]) {
            TensorT<T> part = slice_channels(dy, Ca, Ca + Cb);
            for (std::size_t i = 0; i < part.size(); ++i) (*dxs[1])[i] += part[i];
        }
    }

    std::unique_ptr<OpT<T>> clone() const override {
        return std::make_unique<MergeOp>(*this);
    }

private:
    MergeKind merge_;
};

template <typename T>
class MulOp final : public OpT<T> {
public:
    const char* kind() const override { return "mul"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        if (!xs[0]->same_shape(*xs[1]))
            throw shape_error("mul: shapes differ, " + shape_str(*xs[0]) + " vs " +
                              shape_str(*xs[1]));
        TensorT<T> y(xs[0]->shape());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*xs[0])[i] * (*xs[1])[i];
        return y;
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        for (std::size_t i = 0; i < dy.size(); ++i) {
            if (dxs[0]) (*dxs[0])[i] += dy[i] * (*xs[1])[i];
            if (dxs[1]) (*dxs[1])[i] += dy[i] * (*xs[0])[i];
        }
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<MulOp>(*this); }
};

template <typename T>
class SumOp final : public OpT<T> {
public:
    const char* kind() const override { return "sum"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        T acc = T(0);
        for (std::size_t i = 0; i < xs[0]->size(); ++i) acc += (*xs[0])[i];
        return TensorT<T>::scalar(acc);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>&,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (!dxs[0]) return;
        for (std::size_t i = 0; i < dxs[0]->size(); ++i) (*dxs[0])[i] += dy[0];
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<SumOp>(*this); }
};

template <typename T>
class LogOp final : public OpT<T> {
public:
    explicit LogOp(T offset) : offset_(offset) {}

    const char* kind() const override { return "log"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        if (xs[0]->size() != 1) throw shape_error("log: expects a scalar node");
        return TensorT<T>::scalar(std::log((*xs[0])[0] + offset_));
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (dxs[0]) (*dxs[0])[0] += dy[0] / ((*xs[0])[0] + offset_);
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<LogOp>(*this); }

private:
    T offset_;
};

template <typename T>
class SubOp final : public OpT<T> {
public:
    const char* kind() const override { return "sub"; }

    TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool) override {
        if (xs[0]->size() != 1 || xs[1]->size() != 1)
            throw shape_error("sub: expects scalar nodes");
        return TensorT<T>::scalar((*xs[0])[0] - (*xs[1])[0]);
    }

    void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>&,
                  const TensorT<T>&, const std::vector<TensorT<T>*>& dxs) override {
        if (dxs[0]) (*dxs[0])[0] += dy[0];
        if (dxs[1]) (*dxs[1])[0] -= dy[0];
    }

    std::unique_ptr<OpT<T>> clone() const override { return std::make_unique<SubOp>(*this); }
};

} // namespace

template <typename T>
std::unique_ptr<OpT<T>> make_conv2d_op(std::size_t stride, std::size_t pad) {
    return std::make_unique<Conv2dOp<T>>(stride, pad);
}

template <typename T>
std::unique_ptr<OpT<T>> make_transposed_conv2d_op(std::size_t stride, std::size_t pad) {
    return std::make_unique<TransposedConv2dOp<T>>(stride, pad);
}

template <typename T>
std::unique_ptr<OpT<T>> make_maxpool2d_op(std::size_t k, std::size_t stride) {
    return std::make_unique<MaxPool2dOp<T>>(k, stride);
}

template <typename T>
std::unique_ptr<OpT<T>> make_activation_op(Activation kind) {
    return std::make_unique<ActivationOp<T>>(kind);
}

template <typename T>
std::unique_ptr<OpT<T>> make_softmax_channels_op() {
    return std::make_unique<SoftmaxChannelsOp<T>>();
}

template <typename T>
std::unique_ptr<OpT<T>> make_batchnorm2d_op(std::size_t channels, T momentum, T eps) {
    return std::make_unique<BatchNorm2dOp<T>>(channels, momentum, eps);
}

template <typename T>
std::unique_ptr<OpT<T>> make_merge_op(MergeKind kind) {
    return std::make_unique<MergeOp<T>>(kind);
}

template <typename T>
std::unique_ptr<OpT<T>> make_mul_op() {
    return std::make_unique<MulOp<T>>();
}

template <typename T>
std::unique_ptr<OpT<T>> make_sum_op() {
    return std::make_unique<SumOp<T>>();
}

template <typename T>
std::unique_ptr<OpT<T>> make_log_op(T offset) {
    return std::make_unique<LogOp<T>>(offset);
}

template <typename T>
std::unique_ptr<OpT<T>> make_sub_op() {
    return std::make_unique<SubOp<T>>();
}

#define SEGKIT_INSTANTIATE_OPS(T)                                            \
    template std::unique_ptr<OpT<T>> make_conv2d_op<T>(std::size_t, std::size_t); \
    template std::unique_ptr<OpT<T>> make_transposed_conv2d_op<T>(std::size_t, std::size_t); \
    template std::unique_ptr<OpT<T>> make_maxpool2d_op<T>(std::size_t, std::size_t); \
    template std::unique_ptr<OpT<T>> make_activation_op<T>(Activation);     \
    template std::unique_ptr<OpT<T>> make_softmax_channels_op<T>();         \
    template std::unique_ptr<OpT<T>> make_batchnorm2d_op<T>(std::size_t, T, T); \
    template std::unique_ptr<OpT<T>> make_merge_op<T>(MergeKind);           \
    template std::unique_ptr<OpT<T>> make_mul_op<T>();                      \
    template std::unique_ptr<OpT<T>> make_sum_op<T>();                      \
    template std::unique_ptr<OpT<T>> make_log_op<T>(T);                      \
    template std::unique_ptr<OpT<T>> make_sub_op<T>();

SEGKIT_INSTANTIATE_OPS(float)
SEGKIT_INSTANTIATE_OPS(double)

#undef SEGKIT_INSTANTIATE_OPS

} // namespace segkit
