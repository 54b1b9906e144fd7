#include <doctest.h>

#include <random>

#include "segkit/postprocess.hpp"
#include "oracles.hpp"

using namespace segkit;

namespace {

void check_against_flood(const BinaryMask& m, int connectivity) {
    const LabelImage got = label_components(m, connectivity);
    const oracle::FloodResult want = oracle::flood_fill_ccl(m, connectivity);
    REQUIRE(got.count == int(want.components.size()));
    CHECK(got.labels == want.labels);

    const auto comps = connected_components_with_stats(m, connectivity);
    REQUIRE(comps.size() == want.components.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
        CHECK(comps[i].area == want.components[i].area);
        CHECK(std::fabs(comps[i].centroid_row - want.components[i].centroid_row) <= 1e-9);
        CHECK(std::fabs(comps[i].centroid_col - want.components[i].centroid_col) <= 1e-9);
        CHECK(comps[i].top == want.components[i].top);
        CHECK(comps[i].left == want.components[i].left);
        CHECK(comps[i].height == want.components[i].height);
        CHECK(comps[i].width == want.components[i].width);
    }
}

Tensor disk_prob(std::size_t size, double cr, double cc, double radius, float p) {
    Tensor t({size, size});
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
            if (d2 <= radius * radius) t[r * size + c] = p;
        }
    return t;
}

BinaryMask disk_mask(std::size_t size, double cr, double cc, double radius) {
    BinaryMask m(size, size);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
            if (d2 <= radius * radius) m.at(r, c) = 255;
        }
    return m;
}

} // namespace

TEST_SUITE("postprocess") {

TEST_CASE("binarize uses strictly-greater semantics") {
    const Tensor p({1, 4}, {0.3f, 0.31f, 0.0f, 1.0f});
    const BinaryMask m = binarize(p, 0.3f);
    CHECK(m.data[0] == 0); // exactly at the threshold: not above
    CHECK(m.data[1] == 255);
    CHECK(m.data[2] == 0);
    CHECK(m.data[3] == 255);

    const BinaryMask z = binarize(Tensor({8, 8}), 0.3f);
    CHECK(z.foreground_count() == 0);

    CHECK_THROWS_AS(binarize(Tensor({2, 2}), 1.5f), config_error);
    CHECK_THROWS_AS(binarize(Tensor({2, 2}), -0.1f), config_error);
}

TEST_CASE("two separated squares produce two components with exact stats") {
    BinaryMask m(16, 16);
    for (std::size_t r = 2; r < 5; ++r)
        for (std::size_t c = 3; c < 6; ++c) m.at(r, c) = 255;
    for (std::size_t r = 9; r < 12; ++r)
        for (std::size_t c = 10; c < 13; ++c) m.at(r, c) = 255;

    const auto comps = connected_components_with_stats(m, 8);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].label == 1);
    CHECK(comps[0].area == 9);
    CHECK(comps[0].centroid_row == doctest::Approx(3.0));
    CHECK(comps[0].centroid_col == doctest::Approx(4.0));
    CHECK(comps[0].top == 2);
    CHECK(comps[0].left == 3);
    CHECK(comps[0].height == 3);
    CHECK(comps[0].width == 3);
    CHECK(comps[1].area == 9);
    CHECK(comps[1].centroid_row == doctest::Approx(10.0));
    CHECK(comps[1].centroid_col == doctest::Approx(11.0));

    const auto none = connected_components_with_stats(BinaryMask(8, 8), 8);
    CHECK(none.empty());
}

TEST_CASE("connectivity: diagonal touch merges under 8, splits under 4") {
    BinaryMask m(4, 4);
    m.at(0, 0) = 255;
    m.at(1, 1) = 255;
    CHECK(connected_components_with_stats(m, 8).size() == 1);
    CHECK(connected_components_with_stats(m, 4).size() == 2);
    CHECK_THROWS_AS(label_components(m, 6), config_error);
}

TEST_CASE("label image matches the flood-fill oracle on random masks") {
    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 300; ++trial) {
        const double density = (trial % 3 == 0) ? 0.1 : (trial % 3 == 1 ? 0.3 : 0.5);
        const BinaryMask m = oracle::random_mask(64, 64, density, rng);
        check_against_flood(m, 8);
        check_against_flood(m, 4);
    }
}

TEST_CASE("partition property: areas sum to the foreground count") {
    std::mt19937_64 rng(83);
    const BinaryMask m = oracle::random_mask(64, 64, 0.4, rng);
    for (int connectivity : {4, 8}) {
        const LabelImage li = label_components(m, connectivity);
        const auto comps = connected_components_with_stats(m, connectivity);
        std::size_t total = 0;
        for (const auto& c : comps) total += c.area;
        CHECK(total == m.foreground_count());
        for (std::size_t i = 0; i < m.size(); ++i)
            CHECK((m.data[i] != 0) == (li.labels[i] > 0));
    }
}

TEST_CASE("filter_components keeps the 300-pixel boundary case") {
    std::vector<Component> cs(3);
    cs[0].area = 299;
    cs[1].area = 300;
    cs[2].area = 1648; // the dataset's median lesion area
    cs[0].label = 1; cs[1].label = 2; cs[2].label = 3;
    const auto kept = filter_components(cs, 300);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].area == 300);
    CHECK(kept[1].area == 1648);

    CHECK(filter_components({}, 300).empty());
    CHECK(filter_components(cs, 0).size() == 3);
}

TEST_CASE("detect composes binarize, labeling and the area filter") {
    // ~400 px blob (r=11.3) at probability 0.9: present, centroid at center
    Tensor p({64, 64});
    std::size_t area = 0;
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c) {
            const double d2 = (r - 30.0) * (r - 30.0) + (c - 27.0) * (c - 27.0);
            if (d2 <= 11.3 * 11.3) {
                p[r * 64 + c] = 0.9f;
                ++area;
            }
        }
    REQUIRE(area >= 400);
    const Detection d = detect(p, 0.3f, 8, 300);
    CHECK(d.present);
    REQUIRE(d.lesions.size() == 1);
    CHECK(std::fabs(d.lesions[0].centroid_row - 30.0) <= 0.5);
    CHECK(std::fabs(d.lesions[0].centroid_col - 27.0) <= 0.5);

    // a 100 px blob is filtered out: the image reads as normal
    const Tensor small = disk_prob(64, 20, 20, 5.5, 0.9f);
    const Detection ds = detect(small, 0.3f, 8, 300);
    CHECK_FALSE(ds.present);
    CHECK(ds.lesions.empty());

    const Detection de = detect(Tensor({64, 64}), 0.3f, 8, 300);
    CHECK_FALSE(de.present);
}

TEST_CASE("binarize is monotone in the threshold") {
    std::mt19937_64 rng(87);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    Tensor p({32, 32});
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = unit(rng);
    const BinaryMask lo = binarize(p, 0.2f);
    const BinaryMask hi = binarize(p, 0.6f);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (hi.data[i]) CHECK(lo.data[i]); // raising the threshold never adds pixels
}

TEST_CASE("detect presence is nonincreasing in threshold and min_area") {
    const Tensor p = disk_prob(64, 32, 32, 12, 0.5f);
    CHECK(detect(p, 0.3f, 8, 300).present);
    CHECK_FALSE(detect(p, 0.6f, 8, 300).present);
    CHECK(detect(p, 0.3f, 8, 400).present);
    CHECK_FALSE(detect(p, 0.3f, 8, 500).present);
}

TEST_CASE("match_lesions hand cases") {
    const BinaryMask truth = disk_mask(64, 20, 20, 6);

    // perfect single-lesion prediction
    const MatchResult perfect = match_lesions({{20.0, 20.0}}, truth, 30.0);
    CHECK(perfect.tp == 1);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);

    // prediction on an empty truth mask
    const MatchResult fp = match_lesions({{10.0, 10.0}}, BinaryMask(64, 64), 30.0);
    CHECK(fp.tp == 0);
    CHECK(fp.fp == 1);
    CHECK(fp.fn == 0);

    // two predictions near one component: one-to-one leaves one unmatched
    const MatchResult two = match_lesions({{20.0, 20.0}, {21.0, 22.0}}, truth, 30.0);
    CHECK(two.tp == 1);
    CHECK(two.fp == 1);
    CHECK(two.fn == 0);

    // miss beyond the radius
    const MatchResult far = match_lesions({{60.0, 60.0}}, truth, 10.0);
    CHECK(far.tp == 0);
    CHECK(far.fp == 1);
    CHECK(far.fn == 1);
}

TEST_CASE("match_lesions counting invariants on random cases") {
    std::mt19937_64 rng(89);
    std::uniform_real_distribution<double> pos(0.0, 63.0);
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryMask truth = oracle::random_mask(64, 64, 0.02, rng);
        const int truth_comps = int(connected_components_with_stats(truth, 8).size());
        std::vector<std::pair<double, double>> preds;
        const int np = int(rng() % 5);
        for (int i = 0; i < np; ++i) preds.emplace_back(pos(rng), pos(rng));
        const MatchResult res = match_lesions(preds, truth, 5.0);
        CHECK(res.tp + res.fp == int(preds.size()));
        CHECK(res.tp + res.fn == truth_comps);
        CHECK(res.tp == int(res.pairs.size()));
    }
}

TEST_CASE("localization regression: two-lesion fixture") {
    // truth blobs centered on (376,144) and (437,445) in a 576x576 frame;
    // predictions a few pixels off must match one-to-one
    BinaryMask truth(576, 576);
    for (std::ptrdiff_t r = -8; r <= 8; ++r)
        for (std::ptrdiff_t c = -8; c <= 8; ++c) {
            if (r * r + c * c > 64) continue;
            truth.at(std::size_t(376 + r), std::size_t(144 + c)) = 255;
            truth.at(std::size_t(437 + r), std::size_t(445 + c)) = 255;
        }
    const auto comps = connected_components_with_stats(truth, 8);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].centroid_row == doctest::Approx(376.0));
    CHECK(comps[0].centroid_col == doctest::Approx(144.0));
    CHECK(comps[1].centroid_row == doctest::Approx(437.0));
    CHECK(comps[1].centroid_col == doctest::Approx(445.0));

    const MatchResult res =
        match_lesions({{380.0, 143.0}, {437.0, 447.0}}, truth, 30.0);
    CHECK(res.tp == 2);
    CHECK(res.fp == 0);
    CHECK(res.fn == 0);

    // both predictions sit within Euclidean distance 5 of the mask centroids
    CHECK(std::hypot(380.0 - 376.0, 143.0 - 144.0) <= 5.0);
    CHECK(std::hypot(437.0 - 437.0, 447.0 - 445.0) <= 5.0);
}

} // TEST_SUITE
