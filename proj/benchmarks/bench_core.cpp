#include <benchmark/benchmark.h>

#include <random>

#include "segkit/data_pipeline.hpp"
#include "segkit/kernels.hpp"
#include "segkit/loss_metrics.hpp"
#include "segkit/nets.hpp"
#include "segkit/ops.hpp"
#include "segkit/postprocess.hpp"
#include "segkit/trainer.hpp"

using namespace segkit;

namespace {

Tensor randn(std::vector<std::size_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(dist(rng));
    return t;
}

void conv2d_forward_64(benchmark::State& state) {
    const Tensor x = randn({8, 8, 64, 64}, 1);
    const Tensor w = randn({8, 8, 3, 3}, 2);
    const Tensor b = randn({8}, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
    }
}
BENCHMARK(conv2d_forward_64)->Unit(benchmark::kMillisecond);

void transposed_conv2d_forward_64(benchmark::State& state) {
    const Tensor x = randn({8, 8, 32, 32}, 4);
    const Tensor w = randn({8, 8, 4, 4}, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(transposed_conv2d(x, w, Tensor(), 2, 1));
    }
}
BENCHMARK(transposed_conv2d_forward_64)->Unit(benchmark::kMillisecond);

void unet_forward_64(benchmark::State& state) {
    NetworkSpec spec;
    spec.base_width = 8;
    spec.depth = 3;
    Network net = build<float>(spec, 1);
    net.graph.set_training(false);
    const Tensor x = randn({1, 3, 64, 64}, 6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_segment(net, x));
    }
}
BENCHMARK(unet_forward_64)->Unit(benchmark::kMillisecond);

void ccl_64(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    BinaryMask m(64, 64);
    for (auto& v : m.data) v = unit(rng) < 0.3 ? 255 : 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(connected_components_with_stats(m, 8));
    }
}
BENCHMARK(ccl_64)->Unit(benchmark::kMicrosecond);

void affine_augment_64(benchmark::State& state) {
    auto samples = synth_blobs(8, 1, 64, 3);
    const AugmentParams params;
    std::mt19937_64 rng(9);
    for (auto _ : state) {
        benchmark::DoNotOptimize(augment_affine(samples[0], params, rng));
    }
}
BENCHMARK(affine_augment_64)->Unit(benchmark::kMicrosecond);

void hsv_augment_64(benchmark::State& state) {
    auto samples = synth_blobs(10, 1, 64, 3);
    const AugmentParams params;
    std::mt19937_64 rng(11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(augment_hsv(samples[0].image, params, rng));
    }
}
BENCHMARK(hsv_augment_64)->Unit(benchmark::kMicrosecond);

void soft_jaccard_aggregate_256(benchmark::State& state) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    Tensor probs({1, 1, 256, 256});
    Tensor labels({1, 1, 256, 256});
    for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = unit(rng);
        labels[i] = unit(rng) < 0.1f ? 1.0f : 0.0f;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(soft_jaccard(probs, labels, JaccardVariant::aggregate));
    }
}
BENCHMARK(soft_jaccard_aggregate_256)->Unit(benchmark::kMicrosecond);

void adam_step_100k(benchmark::State& state) {
    Graph g;
    const int x = g.add_input("x");
    const int w = g.add_parameter("w", randn({100, 1000}, 13));
    const int prod = g.add_op("prod", make_mul_op<float>(), {w, x});
    const int loss = g.add_op("loss", make_sum_op<float>(), {prod});
    g.feed(x, randn({100, 1000}, 14));
    g.forward(loss);
    g.backward(loss);
    auto params = g.parameters();
    OptState opt;
    for (auto _ : state) {
        adam_step(params, opt, 1e-3);
    }
}
BENCHMARK(adam_step_100k)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
