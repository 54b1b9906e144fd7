#pragma once

#include <string>

#include "segkit/mask.hpp"
#include "segkit/tensor.hpp"

namespace segkit {

/// Decodes a 24-bit image file to 3 x H x W floats rescaled from [0..255]
/// to [0..1], RGB channel order. Throws io_error naming the path on missing
/// or corrupt files and on images that are not 3-channel 8-bit.
Tensor read_image_rgb(const std::string& path);

/// Decodes a mask (PNG or JPEG, any channel layout) as grayscale and
/// binarizes at 127 (pixel > 127 -> 255). JPEG masks are lossy, so exact-255
/// matching would be wrong.
BinaryMask read_mask(const std::string& path);

/// 8-bit single-channel PNG with values {0,255}. Deterministic bytes.
void write_mask_png(const std::string& path, const BinaryMask& mask);

/// 3 x H x W floats in [0,1] -> 24-bit PNG.
void write_image_rgb_png(const std::string& path, const Tensor& image);

} // namespace segkit
