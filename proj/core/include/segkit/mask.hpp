#pragma once

#include <cstdint>
#include <vector>

#include "segkit/tensor.hpp"

namespace segkit {

/// 8-bit single-channel binary image, values {0, 255}, row-major.
struct BinaryMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (std::uint8_t v : data) n += (v != 0);
        return n;
    }

    bool same_shape(const BinaryMask& o) const { return rows == o.rows && cols == o.cols; }
};

/// Label tensor {0,1} (last two dims H x W) -> {0,255} mask.
BinaryMask mask_from_labels(const Tensor& labels);

/// {0,255} mask -> H x W label tensor with values {0,1}.
Tensor labels_from_mask(const BinaryMask& mask);

} // namespace segkit
