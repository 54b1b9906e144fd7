#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "segkit/mask.hpp"
#include "segkit/tensor.hpp"

namespace segkit {

/// One connected foreground region. Centroid is the arithmetic mean of the
/// member pixel coordinates, (row, col) order, subpixel precision.
struct Component {
    int label = 0;            // 1..K, first-encounter row-major order
    std::size_t area = 0;     // pixel count
    double centroid_row = 0.0;
    double centroid_col = 0.0;
    std::size_t top = 0, left = 0, height = 0, width = 0; // tight bbox
};

struct Detection {
    bool present = false;
    std::vector<Component> lesions; // present == !lesions.empty()
};

/// Pixel > threshold -> 255, else 0 (strictly greater at the boundary).
/// prob holds values in [0,1]; last two dims are H x W with leading
/// extents of 1. Threshold outside [0,1] is a configuration error.
BinaryMask binarize(const Tensor& prob, float threshold = 0.3f);

/// Label image: 0 = background, components numbered 1..K in first-encounter
/// row-major order.
struct LabelImage {
    std::size_t rows = 0, cols = 0;
    std::vector<std::int32_t> labels;
    int count = 0;

    std::int32_t at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

/// Two-pass union-find labeling. connectivity is 4 or 8.
LabelImage label_components(const BinaryMask& mask, int connectivity = 8);

/// Labels plus per-component area, centroid and bounding box, in label order.
std::vector<Component> connected_components_with_stats(const BinaryMask& mask,
                                                       int connectivity = 8);

/// Keeps components with area >= min_area, preserving order.
std::vector<Component> filter_components(std::vector<Component> components,
                                         std::size_t min_area = 300);

/// binarize -> label -> filter; present iff any component survives.
Detection detect(const Tensor& prob, float threshold = 0.3f, int connectivity = 8,
                 std::size_t min_area = 300);

struct MatchResult {
    int tp = 0, fp = 0, fn = 0;
    std::vector<std::pair<int, int>> pairs; // (prediction index, truth label)
};

/// Greedy nearest-first one-to-one matching of predicted centroids (row, col)
/// against the truth mask's components. A prediction may match a component it
/// lies inside of, or whose nearest pixel is within `radius`.
MatchResult match_lesions(const std::vector<std::pair<double, double>>& predicted,
                          const BinaryMask& truth, double radius = 30.0,
                          int connectivity = 8);

} // namespace segkit
