#pragma once

#include <cstdint>
#include <string>

#include "segkit/graph.hpp"

namespace segkit {

/// The four architecture families compared in the experiments: the plain
/// concat-skip encoder-decoder, two VGG-style concat-skip variants (differing
/// in convs per encoder stage), and the residual encoder with additive skips.
enum class NetStyle { unet, vgg_concat_11, vgg_concat_16, residual_add };

NetStyle net_style_from_string(const std::string& s);
std::string to_string(NetStyle style);

struct NetworkSpec {
    NetStyle style = NetStyle::unet;
    std::size_t input_channels = 3;
    std::size_t base_width = 8; // channels after the first stage
    std::size_t depth = 3;      // number of 2x downsamplings
    std::size_t output_classes = 1;

    bool operator==(const NetworkSpec&) const = default;
};

template <typename T>
struct NetworkT {
    NetworkSpec spec;
    GraphT<T> graph;
    int input = -1;
    int logits = -1; // pre-activation head
    int output = -1; // sigmoid (binary) or channel softmax head
};

using Network = NetworkT<float>;
using Network64 = NetworkT<double>;

/// Builds a randomly initialized network (He-uniform fan-in for kernels,
/// zero biases, gamma=1/beta=0). Deterministic for a given seed.
template <typename T>
NetworkT<T> build(const NetworkSpec& spec, std::uint64_t seed = 0);

/// batch: N x input_channels x H x W with H and W divisible by 2^depth.
/// Returns per-pixel probabilities, same spatial size as the input.
template <typename T>
TensorT<T> forward_segment(NetworkT<T>& net, TensorT<T> batch);

/// Exact count of trainable scalars.
template <typename T>
std::size_t parameter_count(NetworkT<T>& net);

/// Fills parameters in creation order from a flat little-endian array of
/// 32-bit floats; the file length must match parameter_count exactly.
/// Import hook for externally produced encoder weights.
template <typename T>
void import_flat_weights(NetworkT<T>& net, const std::string& path);

} // namespace segkit
