#include "segkit/nets.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include "segkit/errors.hpp"
#include "segkit/ops.hpp"

namespace segkit {

namespace {

constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

/// Stage widths saturate at 8x base, mirroring the VGG/ResNet progression.
std::size_t stage_width(std::size_t base, std::size_t stage) {
    std::size_t mult = 1;
    for (std::size_t i = 0; i < stage && mult < 8; ++i) mult *= 2;
    return base * mult;
}

template <typename T>
class NetBuilder {
public:
    NetBuilder(GraphT<T>& g, std::uint64_t seed) : g_(g), rng_(seed) {}

    int conv(int x, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
             std::size_t pad, const std::string& name, bool bias = true) {
        const int w = g_.add_parameter(name + ".w", he_uniform({cout, cin, k, k}, cin * k * k));
        std::vector<int> in{x, w};
        if (bias) in.push_back(g_.add_parameter(name + ".b", TensorT<T>({cout})));
        return g_.add_op(name, make_conv2d_op<T>(stride, pad), std::move(in));
    }

    int tconv(int x, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
              std::size_t pad, const std::string& name, bool bias = true) {
        const int w = g_.add_parameter(name + ".w", he_uniform({cin, cout, k, k}, cin * k * k));
        std::vector<int> in{x, w};
        if (bias) in.push_back(g_.add_parameter(name + ".b", TensorT<T>({cout})));
        return g_.add_op(name, make_transposed_conv2d_op<T>(stride, pad), std::move(in));
    }

    int bn(int x, std::size_t c, const std::string& name) {
        const int gamma = g_.add_parameter(name + ".gamma", TensorT<T>::full({c}, T(1)));
        const int beta = g_.add_parameter(name + ".beta", TensorT<T>({c}));
        return g_.add_op(name, make_batchnorm2d_op<T>(c, T(kBnMomentum), T(kBnEps)),
                         {x, gamma, beta});
    }

    int relu(int x, const std::string& name) {
        return g_.add_op(name, make_activation_op<T>(Activation::relu), {x});
    }

    int sigmoid(int x, const std::string& name) {
        return g_.add_op(name, make_activation_op<T>(Activation::sigmoid), {x});
    }

    int pool(int x, const std::string& name) {
        return g_.add_op(name, make_maxpool2d_op<T>(2, 2), {x});
    }

    int concat(int a, int b, const std::string& name) {
        return g_.add_op(name, make_merge_op<T>(MergeKind::concat_channels), {a, b});
    }

    int add(int a, int b, const std::string& name) {
        return g_.add_op(name, make_merge_op<T>(MergeKind::add), {a, b});
    }

private:
    TensorT<T> he_uniform(std::vector<std::size_t> shape, std::size_t fan_in) {
        const double limit = std::sqrt(6.0 / double(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        TensorT<T> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(dist(rng_));
        return t;
    }

    GraphT<T>& g_;
    std::mt19937_64 rng_;
};

std::string stage_name(const char* prefix, std::size_t i) {
    return std::string(prefix) + std::to_string(i);
}

/// Shape-preserving 2x upsampling step used by every decoder.
constexpr std::size_t kUpK = 4, kUpStride = 2, kUpPad = 1;

template <typename T>
void build_concat_style(const NetworkSpec& spec, NetBuilder<T>& b, int input,
                        int& logits) {
    // convs per encoder stage: plain unet uses 2 everywhere; the VGG styles
    // follow their stage patterns (repeating the last entry past stage 5)
    auto convs_in_stage = [&](std::size_t i) -> std::size_t {
        const std::size_t j = std::min<std::size_t>(i, 4);
        switch (spec.style) {
        case NetStyle::vgg_concat_11: return j < 2 ? 1 : 2;
        case NetStyle::vgg_concat_16: return j < 2 ? 2 : 3;
        default: return 2;
        }
    };

    std::vector<int> skips;
    std::vector<std::size_t> skip_widths;
    int cur = input;
    std::size_t cin = spec.input_channels;
    for (std::size_t i = 0; i < spec.depth; ++i) {
        const std::size_t w = stage_width(spec.base_width, i);
        for (std::size_t c = 0; c < convs_in_stage(i); ++c) {
            const std::string name = stage_name("enc", i) + ".conv" + std::to_string(c);
            cur = b.relu(b.conv(cur, cin, w, 3, 1, 1, name), name + ".relu");
            cin = w;
        }
        skips.push_back(cur);
        skip_widths.push_back(w);
        cur = b.pool(cur, stage_name("enc", i) + ".pool");
    }

    const std::size_t center_w = stage_width(spec.base_width, spec.depth);
    const std::size_t center_convs = spec.style == NetStyle::unet ? 2 : 1;
    for (std::size_t c = 0; c < center_convs; ++c) {
        const std::string name = "center.conv" + std::to_string(c);
        cur = b.relu(b.conv(cur, cin, center_w, 3, 1, 1, name), name + ".relu");
        cin = center_w;
    }

    for (std::size_t i = spec.depth; i-- > 0;) {
        const std::size_t w = skip_widths[i];
        const std::string up = stage_name("dec", i) + ".up";
        cur = b.relu(b.tconv(cur, cin, w, kUpK, kUpStride, kUpPad, up), up + ".relu");
        cur = b.concat(skips[i], cur, stage_name("dec", i) + ".concat");
        cin = 2 * w;
        const std::size_t dec_convs = spec.style == NetStyle::unet ? 2 : 1;
        for (std::size_t c = 0; c < dec_convs; ++c) {
            const std::string name = stage_name("dec", i) + ".conv" + std::to_string(c);
            cur = b.relu(b.conv(cur, cin, w, 3, 1, 1, name), name + ".relu");
            cin = w;
        }
    }

    logits = b.conv(cur, cin, spec.output_classes, 1, 1, 0, "head");
}

template <typename T>
int residual_block(NetBuilder<T>& b, int x, std::size_t cin, std::size_t cout,
                   std::size_t stride, const std::string& name) {
    int main = b.conv(x, cin, cout, 3, stride, 1, name + ".conv0", false);
    main = b.relu(b.bn(main, cout, name + ".bn0"), name + ".relu0");
    main = b.conv(main, cout, cout, 3, 1, 1, name + ".conv1", false);
    main = b.bn(main, cout, name + ".bn1");
    int skip = x;
    if (stride != 1 || cin != cout) {
        skip = b.conv(x, cin, cout, 1, stride, 0, name + ".proj", false);
        skip = b.bn(skip, cout, name + ".proj_bn");
    }
    return b.relu(b.add(main, skip, name + ".add"), name + ".relu1");
}

/// 1x1 conv cutting the filter count by 4, batch norm, then a transposed
/// conv doubling the spatial extent.
template <typename T>
int decoder_block(NetBuilder<T>& b, int x, std::size_t cin, std::size_t cout,
                  const std::string& name) {
    const std::size_t mid = std::max<std::size_t>(1, cin / 4);
    int cur = b.conv(x, cin, mid, 1, 1, 0, name + ".reduce", false);
    cur = b.relu(b.bn(cur, mid, name + ".reduce_bn"), name + ".reduce_relu");
    cur = b.tconv(cur, mid, cout, kUpK, kUpStride, kUpPad, name + ".up", false);
    cur = b.relu(b.bn(cur, cout, name + ".up_bn"), name + ".up_relu");
    return cur;
}

template <typename T>
void build_residual_style(const NetworkSpec& spec, NetBuilder<T>& b, int input,
                          int& logits) {
    if (spec.depth < 2)
        throw config_error("residual_add needs depth >= 2 (stem conv + pool already halve twice)");

    const std::size_t bw = spec.base_width;
    int cur = b.conv(input, spec.input_channels, bw, 7, 2, 3, "stem.conv", false);
    cur = b.relu(b.bn(cur, bw, "stem.bn"), "stem.relu");
    const int stem_out = cur; // H/2
    cur = b.pool(cur, "stem.pool"); // H/4

    // skips[0]: stem output at H/2; skips[j+1]: residual stage j output
    std::vector<int> skips{stem_out};
    std::vector<std::size_t> skip_widths{bw};

    std::size_t cin = bw;
    const std::size_t stages = spec.depth - 1; // stage 0 keeps stride 1
    for (std::size_t j = 0; j < stages; ++j) {
        const std::size_t w = stage_width(bw, j);
        const std::size_t stride = j == 0 ? 1 : 2;
        cur = residual_block(b, cur, cin, w, stride, stage_name("res", j) + ".block0");
        cur = residual_block(b, cur, w, w, 1, stage_name("res", j) + ".block1");
        cin = w;
        skips.push_back(cur);
        skip_widths.push_back(w);
    }

    // additive decoder: upsample to each shallower skip's scale and add
    for (std::size_t j = skips.size() - 1; j-- > 0;) {
        const std::string name = stage_name("dec", j);
        cur = decoder_block(b, cur, cin, skip_widths[j], name);
        cur = b.add(cur, skips[j], name + ".add");
        cin = skip_widths[j];
    }

    // final upsampling from H/2 back to full resolution
    cur = decoder_block(b, cur, cin, bw, "final");
    logits = b.conv(cur, bw, spec.output_classes, 1, 1, 0, "head");
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.depth < 1) throw config_error("network depth must be >= 1");
    if (spec.base_width < 1) throw config_error("base_width must be >= 1");
    if (spec.input_channels < 1) throw config_error("input_channels must be >= 1");
    if (spec.output_classes < 1) throw config_error("output_classes must be >= 1");
}

} // namespace

NetStyle net_style_from_string(const std::string& s) {
    if (s == "unet") return NetStyle::unet;
    if (s == "vgg_concat_11") return NetStyle::vgg_concat_11;
    if (s == "vgg_concat_16") return NetStyle::vgg_concat_16;
    if (s == "residual_add") return NetStyle::residual_add;
    throw config_error("unknown network style '" + s + "'");
}

std::string to_string(NetStyle style) {
    switch (style) {
    case NetStyle::unet: return "unet";
    case NetStyle::vgg_concat_11: return "vgg_concat_11";
    case NetStyle::vgg_concat_16: return "vgg_concat_16";
    case NetStyle::residual_add: return "residual_add";
    }
    return "unet";
}

template <typename T>
NetworkT<T> build(const NetworkSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    NetworkT<T> net;
    net.spec = spec;
    NetBuilder<T> b(net.graph, seed);
    net.input = net.graph.add_input("image");

    if (spec.style == NetStyle::residual_add)
        build_residual_style(spec, b, net.input, net.logits);
    else
        build_concat_style(spec, b, net.input, net.logits);

    if (spec.output_classes == 1)
        net.output = b.sigmoid(net.logits, "head.sigmoid");
    else
        net.output = net.graph.add_op("head.softmax", make_softmax_channels_op<T>(),
                                      {net.logits});
    return net;
}

template <typename T>
TensorT<T> forward_segment(NetworkT<T>& net, TensorT<T> batch) {
    if (batch.rank() != 4)
        throw shape_error("forward_segment: batch must be N x C x H x W, got " +
                          shape_str(batch));
    if (batch.dim(1) != net.spec.input_channels)
        throw shape_error("forward_segment: expected " +
                          std::to_string(net.spec.input_channels) + " channels, got " +
                          std::to_string(batch.dim(1)));
    const std::size_t div = std::size_t(1) << net.spec.depth;
    if (batch.dim(2) % div != 0 || batch.dim(3) % div != 0)
        throw shape_error("forward_segment: spatial extent " + std::to_string(batch.dim(2)) +
                          "x" + std::to_string(batch.dim(3)) + " not divisible by 2^depth = " +
                          std::to_string(div));
    net.graph.feed(net.input, std::move(batch));
    return net.graph.forward(net.output);
}

template <typename T>
std::size_t parameter_count(NetworkT<T>& net) {
    std::size_t n = 0;
    for (const auto& p : net.graph.parameters()) n += p.value->size();
    return n;
}

template <typename T>
void import_flat_weights(NetworkT<T>& net, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("import_flat_weights: cannot open " + path);
    std::vector<float> buf(parameter_count(net));
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (std::size_t(in.gcount()) != buf.size() * sizeof(float) || in.peek() != EOF)
        throw io_error("import_flat_weights: " + path + " does not hold exactly " +
                       std::to_string(buf.size()) + " float32 values");
    std::size_t off = 0;
    for (auto& p : net.graph.parameters()) {
        for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = T(buf[off + i]);
        off += p.value->size();
    }
}

#define SEGKIT_INSTANTIATE_NETS(T)                                        \
    template NetworkT<T> build<T>(const NetworkSpec&, std::uint64_t);     \
    template TensorT<T> forward_segment<T>(NetworkT<T>&, TensorT<T>);     \
    template std::size_t parameter_count<T>(NetworkT<T>&);                \
    template void import_flat_weights<T>(NetworkT<T>&, const std::string&);

SEGKIT_INSTANTIATE_NETS(float)
SEGKIT_INSTANTIATE_NETS(double)

#undef SEGKIT_INSTANTIATE_NETS

} // namespace segkit
