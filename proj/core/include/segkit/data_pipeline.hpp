#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "segkit/mask.hpp"
#include "segkit/tensor.hpp"

namespace segkit {

/// One image with optional lesion annotation. Image is 3 x H x W in [0,1]
/// after loading (arbitrary range after standardization); mask is H x W with
/// values {0,1}.
struct Sample {
    Tensor image;
    std::optional<Tensor> mask;
    std::string source_id;
    int fold = -1;
};

/// Conventional ImageNet channel statistics; the standardization scheme's
/// defaults, overridable in the run config.
inline constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};

/// Loads an image (and its mask when a path is given), rescaled to [0,1];
/// masks binarize at 127. Mask extents must match the image.
Sample load_sample(const std::string& image_path, const std::string& mask_path = "");

/// Centered window of target x target; offset floor((extent-target)/2) per
/// axis; mask cropped identically.
Sample center_crop(const Sample& s, std::size_t target);

/// Per channel (v - mean_c) / std_c.
Sample standardize(const Sample& s, const std::array<float, 3>& mean = kImagenetMean,
                   const std::array<float, 3>& stdev = kImagenetStd);

// ---------------------------------------------------------------------------
// cross-validation folds
// ---------------------------------------------------------------------------

struct FoldSplit {
    int k = 0;
    std::vector<std::pair<std::string, int>> assignment; // sorted by sample id

    int fold_of(const std::string& id) const;
    std::vector<std::size_t> fold_sizes() const;
};

/// Seeded shuffle then contiguous partition; fold sizes differ by at most
/// one, larger folds first (299 ids, k=5 -> 60,60,60,60,59).
FoldSplit split_folds(std::vector<std::string> ids, int k, std::uint64_t seed);

/// Text table, one "sample_id,fold" line per sample.
void save_fold_table(const std::string& path, const FoldSplit& split);
FoldSplit load_fold_table(const std::string& path);

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

struct AugmentParams {
    double rotation_deg = 15.0;  // sampled from [-r, r]
    double scale_lo = 0.9, scale_hi = 1.1;
    double shift_frac = 0.1;     // of the image extent, per axis
    double shear_deg = 5.0;
    double hflip_p = 0.5, vflip_p = 0.5;
    double hue_deg = 10.0;       // additive, wraps mod 360
    double sat_lo = 0.9, sat_hi = 1.1;
    double val_lo = 0.9, val_hi = 1.1;

    /// Zero ranges, unit scales, zero flip probabilities.
    static AugmentParams identity();
    void validate() const;

    bool operator==(const AugmentParams&) const = default;
};

/// One concrete sampled transform; exposed so tests can apply exact angles.
struct AffineTransform {
    double angle_deg = 0.0; // positive rotates content counterclockwise
    double scale = 1.0;
    double shear_deg = 0.0; // shears columns along rows
    double shift_r = 0.0, shift_c = 0.0; // pixels
    bool hflip = false, vflip = false;
};

AffineTransform sample_affine(const AugmentParams& params, std::size_t extent,
                              std::mt19937_64& rng);

/// Applies the map about the image center: bilinear with reflection padding
/// for the image, nearest neighbor for the mask. Requires a square sample.
Sample apply_affine(const Sample& s, const AffineTransform& t);

Sample augment_affine(const Sample& s, const AugmentParams& params, std::mt19937_64& rng);

struct HsvJitter {
    double hue_shift_deg = 0.0;
    double sat_scale = 1.0;
    double val_scale = 1.0;
};

/// RGB -> HSV (hexcone) -> jitter -> RGB. Hue shifts wrap mod 360; S and V
/// scale multiplicatively and clamp to [0,1]. Image must be in [0,1].
Tensor apply_hsv(const Tensor& image, const HsvJitter& jitter);

Tensor augment_hsv(const Tensor& image, const AugmentParams& params, std::mt19937_64& rng);

/// Hexcone conversions used by the jitter; h in [0,360), s,v in [0,1].
std::array<double, 3> rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

// ---------------------------------------------------------------------------
// synthetic desk-scale data
// ---------------------------------------------------------------------------

struct SynthOptions {
    // lesion radius range in pixels; <= 0 means scaled to the image size so
    // the default pipeline's 300 px area floor keeps every lesion
    double radius_lo = -1.0;
    double radius_hi = -1.0;
};

/// Mucosa-like textured background with 0..max_lesions reddish elliptical
/// blobs; the mask is the union of blob supports. Lesion counts skew toward
/// one per image. Deterministic per (seed, index).
std::vector<Sample> synth_blobs(std::uint64_t seed, std::size_t count, std::size_t size,
                                std::size_t max_lesions, const SynthOptions& opts = {});

/// Renders one elliptical lesion (rotation `angle` radians, soft color edge)
/// into the sample's image and its exact support into the mask.
void stamp_blob(Sample& s, double row, double col, double r_major, double r_minor,
                double angle, const std::array<float, 3>& color);

} // namespace segkit
