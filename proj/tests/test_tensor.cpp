#include <doctest.h>

#include <cstring>
#include <random>

#include "segkit/kernels.hpp"
#include "oracles.hpp"

using namespace segkit;

namespace {

template <typename T>
TensorT<T> randn(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    TensorT<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(dist(rng));
    return t;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

} // namespace

TEST_SUITE("tensor") {

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor({0, 3}), shape_error);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), shape_error);
    const Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t[0] == 0.0f);
}

TEST_CASE("conv2d shape arithmetic") {
    std::mt19937_64 rng(7);
    // 3x3 kernel, stride 1, pad 1 preserves 512x512
    Tensor x({1, 3, 512, 512});
    Tensor w = randn<float>({64, 3, 3, 3}, rng);
    Tensor y = conv2d(x, w, Tensor({64}), 1, 1);
    CHECK(y.shape() == std::vector<std::size_t>{1, 64, 512, 512});

    // 7x7 kernel with stride 2 halves it
    Tensor w7 = randn<float>({64, 3, 7, 7}, rng);
    Tensor y7 = conv2d(x, w7, Tensor({64}), 2, 3);
    CHECK(y7.shape() == std::vector<std::size_t>{1, 64, 256, 256});
}

TEST_CASE("conv2d all-ones 3x3 window sums to 9") {
    const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
    const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    const Tensor y = conv2d(x, w, Tensor({1}), 1, 0);
    CHECK(y.shape() == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d matches direct summation oracle") {
    std::mt19937_64 rng(11);
    const Tensor x = randn<float>({1, 2, 4, 4}, rng);
    const Tensor w = randn<float>({3, 2, 3, 3}, rng);
    const Tensor b = randn<float>({3}, rng);
    for (std::size_t pad : {0u, 1u}) {
        for (std::size_t stride : {1u, 2u}) {
            const Tensor got = conv2d(x, w, b, stride, pad);
            const Tensor want = oracle::conv2d_direct(x, w, b, stride, pad);
            CHECK(max_abs_diff(got, want) <= 1e-6);
        }
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    const Tensor x({1, 3, 8, 8});
    const Tensor w({4, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), 1, 1), shape_error);
    CHECK_THROWS_AS(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor(), 1, 0),
                    shape_error);
}

TEST_CASE("transposed_conv2d shape and kernel stamp") {
    std::mt19937_64 rng(3);
    const Tensor x = randn<float>({1, 64, 16, 16}, rng);
    const Tensor w = randn<float>({64, 8, 2, 2}, rng);
    const Tensor y = transposed_conv2d(x, w, Tensor(), 2, 0);
    CHECK(y.shape() == std::vector<std::size_t>{1, 8, 32, 32});

    const Tensor one({1, 1, 1, 1}, {1.0f});
    const Tensor stamp({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    const Tensor s = transposed_conv2d(one, stamp, Tensor(), 2, 0);
    CHECK(s.shape() == std::vector<std::size_t>{1, 1, 2, 2});
    CHECK(s[0] == 1.0f);
    CHECK(s[1] == 2.0f);
    CHECK(s[2] == 3.0f);
    CHECK(s[3] == 4.0f);
}

TEST_CASE("transposed_conv2d matches scatter-add oracle") {
    // checked in the 64-bit mode so accumulation-order noise stays below
    // the 1e-6 agreement bound
    std::mt19937_64 rng(5);
    const Tensor64 x = randn<double>({2, 3, 5, 4}, rng);
    const Tensor64 w = randn<double>({3, 2, 3, 3}, rng);
    for (std::size_t stride : {1u, 2u}) {
        const Tensor64 got = transposed_conv2d(x, w, Tensor64(), stride, 0);
        const Tensor64 want = oracle::tconv2d_scatter(x, w, stride, 0);
        CHECK(max_abs_diff(got, want) <= 1e-6);
    }
    // padded variant used by the decoders
    const Tensor64 wp = randn<double>({3, 2, 4, 4}, rng);
    const Tensor64 got = transposed_conv2d(x, wp, Tensor64(), 2, 1);
    const Tensor64 want = oracle::tconv2d_scatter(x, wp, 2, 1);
    CHECK(max_abs_diff(got, want) <= 1e-6);
}

TEST_CASE("transposed_conv2d is the adjoint of conv2d") {
    // propagating dy through conv2d's input gradient equals running the
    // transposed convolution forward on dy with the same kernel; exact-fit
    // geometry so no trailing rows are dropped by the conv floor
    std::mt19937_64 rng(13);
    const std::size_t stride = 2, pad = 1;
    const Tensor x = randn<float>({1, 3, 9, 9}, rng);
    const Tensor w = randn<float>({5, 3, 3, 3}, rng);
    const Tensor y = conv2d(x, w, Tensor(), stride, pad);
    const Tensor dy = randn<float>(y.shape(), rng);

    Tensor dx(x.shape());
    conv2d_backward<float>(x, w, dy, stride, pad, &dx, nullptr, nullptr);
    const Tensor via_tconv = transposed_conv2d(dy, w, Tensor(), stride, pad);
    CHECK(max_abs_diff(dx, via_tconv) <= 1e-5);
}

TEST_CASE("conv then transposed conv restores spatial extent") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> hd(6, 24), kd(1, 5), sd(1, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = kd(rng), s = sd(rng);
        std::size_t H = hd(rng);
        if (H < k) H = k;
        H = k + ((H - k) / s) * s; // make (H - k) divisible by stride
        const Tensor x = randn<float>({1, 2, H, H}, rng);
        const Tensor w = randn<float>({3, 2, k, k}, rng);
        const Tensor mid = conv2d(x, w, Tensor(), s, 0);
        const Tensor wt = randn<float>({3, 2, k, k}, rng);
        const Tensor back = transposed_conv2d(mid, wt, Tensor(), s, 0);
        CHECK(back.dim(2) == H);
        CHECK(back.dim(3) == H);
    }
}

TEST_CASE("maxpool2d halves and picks window maxima") {
    const Tensor big({1, 1, 512, 512});
    CHECK(maxpool2d(big, 2, 2).output.shape() ==
          std::vector<std::size_t>{1, 1, 256, 256});

    const Tensor win({1, 1, 2, 2}, {1.0f, 5.0f, 3.0f, 2.0f});
    const auto res = maxpool2d(win, 2, 2);
    CHECK(res.output[0] == 5.0f);
    CHECK(res.argmax[0] == 1);

    CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 3, 3}), 4, 1), shape_error);
}

TEST_CASE("maxpool2d matches window-scan oracle exactly") {
    std::mt19937_64 rng(19);
    const Tensor x = randn<float>({2, 3, 8, 8}, rng);
    for (std::size_t k : {2u, 3u}) {
        const auto got = maxpool2d(x, k, k);
        const Tensor want = oracle::maxpool_scan(x, k, k);
        CHECK(max_abs_diff(got.output, want) == 0.0);
    }
}

TEST_CASE("maxpool backward routes one unit to the first-tie argmax") {
    // all-equal window: the tie must break to the first row-major position
    const Tensor x = Tensor::full({1, 1, 2, 2}, 3.0f);
    const auto res = maxpool2d(x, 2, 2);
    CHECK(res.argmax[0] == 0);

    Tensor dx({1, 1, 2, 2});
    const Tensor dy({1, 1, 1, 1}, {1.0f});
    maxpool2d_backward(dy, res.argmax, dx);
    CHECK(dx[0] == 1.0f);
    CHECK(dx[1] == 0.0f);
    CHECK(dx[2] == 0.0f);
    CHECK(dx[3] == 0.0f);

    // exactly one unit lands per window even with overlapping values
    std::mt19937_64 rng(23);
    const Tensor r = randn<float>({1, 2, 6, 6}, rng);
    const auto pooled = maxpool2d(r, 2, 2);
    Tensor drx({1, 2, 6, 6});
    maxpool2d_backward(Tensor::full(pooled.output.shape(), 1.0f), pooled.argmax, drx);
    double total = 0.0;
    for (std::size_t i = 0; i < drx.size(); ++i) total += drx[i];
    CHECK(total == doctest::Approx(double(pooled.output.size())));
}

TEST_CASE("activations") {
    const Tensor x({1, 1, 1, 3}, {-1.5f, 0.0f, 15.0f});
    const Tensor r = activation(x, Activation::relu);
    CHECK(r[0] == 0.0f);
    CHECK(r[1] == 0.0f);
    CHECK(r[2] == 15.0f);

    const Tensor s = activation(x, Activation::sigmoid);
    CHECK(s[1] == doctest::Approx(0.5));
    CHECK(s[2] < 1.0f);           // saturated but not pinned to 1
    CHECK(s[2] > 1.0f - 1e-6f);
    CHECK(std::isfinite(s[2]));

    const Tensor64 big({1}, {30.0});
    const Tensor64 sb = activation(big, Activation::sigmoid);
    CHECK(sb[0] < 1.0);
    CHECK(sb[0] > 1.0 - 1e-6);

    const Tensor64 neg({1}, {-745.0}); // exp underflow region
    CHECK(std::isfinite(activation(neg, Activation::sigmoid)[0]));
}

TEST_CASE("batchnorm2d train mode") {
    std::mt19937_64 rng(29);

    // constant channel: output collapses to beta
    Tensor x = Tensor::full({2, 1, 3, 3}, 4.2f);
    Tensor gamma = Tensor::full({1}, 1.7f);
    Tensor beta = Tensor::full({1}, -0.3f);
    Tensor rm({1}), rv = Tensor::full({1}, 1.0f);
    BatchNormContext<float> ctx;
    Tensor y = batchnorm2d_train(x, gamma, beta, rm, rv, 0.1f, 1e-5f, ctx);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(-0.3).epsilon(1e-5));

    // gamma=1, beta=0 on a zero-mean unit-variance channel is near-identity
    Tensor z({1, 1, 4, 4});
    {
        double mean = 0.0;
        std::normal_distribution<double> dist(0.0, 1.0);
        for (std::size_t i = 0; i < z.size(); ++i) { z[i] = float(dist(rng)); mean += z[i]; }
        mean /= double(z.size());
        double var = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = float(z[i] - mean);
            var += double(z[i]) * double(z[i]);
        }
        var /= double(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = float(z[i] / std::sqrt(var));
    }
    Tensor g1 = Tensor::full({1}, 1.0f), b0({1});
    Tensor rm2({1}), rv2 = Tensor::full({1}, 1.0f);
    Tensor zn = batchnorm2d_train(z, g1, b0, rm2, rv2, 0.1f, 1e-5f, ctx);
    CHECK(max_abs_diff(zn, z) < 1e-4);

    // random batch: per-channel output moments land on beta / gamma
    Tensor r = randn<float>({4, 3, 8, 8}, rng);
    Tensor gr({3}, {0.5f, 1.0f, 2.0f});
    Tensor br({3}, {-1.0f, 0.0f, 1.0f});
    Tensor rm3({3}), rv3 = Tensor::full({3}, 1.0f);
    Tensor out = batchnorm2d_train(r, gr, br, rm3, rv3, 0.1f, 1e-5f, ctx);
    const std::size_t HW = 64, N = 4;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t p = 0; p < HW; ++p) mean += out[(n * 3 + c) * HW + p];
        mean /= double(N * HW);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t p = 0; p < HW; ++p) {
                const double d = out[(n * 3 + c) * HW + p] - mean;
                var += d * d;
            }
        var /= double(N * HW);
        CHECK(std::fabs(mean - br[c]) < 1e-4);
        CHECK(std::fabs(std::sqrt(var) - gr[c]) < 1e-3);
    }
}

TEST_CASE("batchnorm2d eval mode uses running stats") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 3.0f);
    Tensor gamma = Tensor::full({1}, 2.0f), beta = Tensor::full({1}, 1.0f);
    Tensor rm = Tensor::full({1}, 1.0f), rv = Tensor::full({1}, 4.0f);
    const Tensor y = batchnorm2d_eval(x, gamma, beta, rm, rv, 0.0f);
    CHECK(y[0] == doctest::Approx(2.0 * (3.0 - 1.0) / 2.0 + 1.0)); // = 3
}

TEST_CASE("merge concat and add") {
    std::mt19937_64 rng(31);
    const Tensor a = randn<float>({1, 64, 32, 32}, rng);
    const Tensor b = randn<float>({1, 128, 32, 32}, rng);
    const Tensor cat = merge(a, b, MergeKind::concat_channels);
    CHECK(cat.shape() == std::vector<std::size_t>{1, 192, 32, 32});

    // concat then slice recovers both inputs exactly
    const Tensor back_a = slice_channels(cat, 0, 64);
    const Tensor back_b = slice_channels(cat, 64, 192);
    CHECK(std::memcmp(back_a.data(), a.data(), a.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(back_b.data(), b.data(), b.size() * sizeof(float)) == 0);

    const Tensor zeros(a.shape());
    const Tensor sum = merge(a, zeros, MergeKind::add);
    CHECK(std::memcmp(sum.data(), a.data(), a.size() * sizeof(float)) == 0);

    CHECK_THROWS_AS(merge(a, Tensor({1, 64, 16, 16}), MergeKind::concat_channels),
                    shape_error);
    CHECK_THROWS_AS(merge(a, b, MergeKind::add), shape_error);
}

TEST_CASE("forward kernels are deterministic within a build") {
    std::mt19937_64 rng(37);
    const Tensor x = randn<float>({2, 3, 12, 12}, rng);
    const Tensor w = randn<float>({4, 3, 3, 3}, rng);
    const Tensor b = randn<float>({4}, rng);
    const Tensor y1 = conv2d(x, w, b, 1, 1);
    const Tensor y2 = conv2d(x, w, b, 1, 1);
    CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0);
}

} // TEST_SUITE
