#include "segkit/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "segkit/errors.hpp"
#include "segkit/image_io.hpp"

namespace segkit {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::size_t spatial_h(const Tensor& image) { return image.dim(1); }
std::size_t spatial_w(const Tensor& image) { return image.dim(2); }

// symmetric reflection with the edge included: -1 -> 0, n -> n-1
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

} // namespace

Sample load_sample(const std::string& image_path, const std::string& mask_path) {
    Sample s;
    s.image = read_image_rgb(image_path);
    s.source_id = image_path;
    if (!mask_path.empty()) {
        const BinaryMask m = read_mask(mask_path);
        if (m.rows != spatial_h(s.image) || m.cols != spatial_w(s.image))
            throw shape_error("mask " + mask_path + " is " + std::to_string(m.rows) + "x" +
                              std::to_string(m.cols) + " but image is " +
                              std::to_string(spatial_h(s.image)) + "x" +
                              std::to_string(spatial_w(s.image)));
        s.mask = labels_from_mask(m);
    }
    return s;
}

Sample center_crop(const Sample& s, std::size_t target) {
    const std::size_t H = spatial_h(s.image), W = spatial_w(s.image);
    if (target > H || target > W)
        throw shape_error("center_crop: target " + std::to_string(target) +
                          " exceeds extent " + std::to_string(H) + "x" + std::to_string(W));
    const std::size_t r0 = (H - target) / 2, c0 = (W - target) / 2;

    Sample out;
    out.source_id = s.source_id;
    out.fold = s.fold;
    out.image = Tensor({3, target, target});
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t r = 0; r < target; ++r)
            for (std::size_t c = 0; c < target; ++c)
                out.image[(ch * target + r) * target + c] =
                    s.image[(ch * H + r0 + r) * W + c0 + c];
    if (s.mask) {
        Tensor m({target, target});
        for (std::size_t r = 0; r < target; ++r)
            for (std::size_t c = 0; c < target; ++c)
                m[r * target + c] = (*s.mask)[(r0 + r) * W + c0 + c];
        out.mask = std::move(m);
    }
    return out;
}

Sample standardize(const Sample& s, const std::array<float, 3>& mean,
                   const std::array<float, 3>& stdev) {
    for (float sd : stdev)
        if (sd <= 0.0f) throw config_error("standardize: std components must be > 0");
    Sample out = s;
    const std::size_t HW = spatial_h(s.image) * spatial_w(s.image);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < HW; ++i)
            out.image[ch * HW + i] = (s.image[ch * HW + i] - mean[ch]) / stdev[ch];
    return out;
}

// ---------------------------------------------------------------------------
// folds
// ---------------------------------------------------------------------------

int FoldSplit::fold_of(const std::string& id) const {
    const auto it = std::lower_bound(assignment.begin(), assignment.end(), id,
                                     [](const auto& a, const std::string& b) { return a.first < b; });
    if (it == assignment.end() || it->first != id)
        throw state_error("fold_of: unknown sample id '" + id + "'");
    return it->second;
}

std::vector<std::size_t> FoldSplit::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (const auto& [id, fold] : assignment) sizes.at(fold) += 1;
    return sizes;
}

FoldSplit split_folds(std::vector<std::string> ids, int k, std::uint64_t seed) {
    if (k < 2) throw config_error("split_folds: k must be >= 2");
    if (ids.size() < std::size_t(k))
        throw config_error("split_folds: need at least k=" + std::to_string(k) + " ids, got " +
                           std::to_string(ids.size()));
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const std::size_t n = ids.size();
    const std::size_t base = n / std::size_t(k), extra = n % std::size_t(k);
    FoldSplit split;
    split.k = k;
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = base + (std::size_t(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) split.assignment.emplace_back(ids[pos++], f);
    }
    std::sort(split.assignment.begin(), split.assignment.end());
    return split;
}

void save_fold_table(const std::string& path, const FoldSplit& split) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write fold table: " + path);
    out << "sample_id,fold\n";
    for (const auto& [id, fold] : split.assignment) out << id << "," << fold << "\n";
    if (!out) throw io_error("failed writing fold table: " + path);
}

FoldSplit load_fold_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read fold table: " + path);
    FoldSplit split;
    std::string line;
    bool header = true;
    int max_fold = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) { // "sample_id,fold"
            header = false;
            continue;
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw io_error("malformed fold table line in " + path + ": " + line);
        const std::string id = line.substr(0, comma);
        const int fold = std::stoi(line.substr(comma + 1));
        split.assignment.emplace_back(id, fold);
        max_fold = std::max(max_fold, fold);
    }
    split.k = max_fold + 1;
    std::sort(split.assignment.begin(), split.assignment.end());
    return split;
}

// ---------------------------------------------------------------------------
// affine augmentation
// ---------------------------------------------------------------------------

AugmentParams AugmentParams::identity() {
    AugmentParams p;
    p.rotation_deg = 0.0;
    p.scale_lo = p.scale_hi = 1.0;
    p.shift_frac = 0.0;
    p.shear_deg = 0.0;
    p.hflip_p = p.vflip_p = 0.0;
    p.hue_deg = 0.0;
    p.sat_lo = p.sat_hi = 1.0;
    p.val_lo = p.val_hi = 1.0;
    return p;
}

void AugmentParams::validate() const {
    if (rotation_deg < 0 || shear_deg < 0 || hue_deg < 0 || shift_frac < 0)
        throw config_error("augment ranges must be non-negative");
    if (scale_lo <= 0 || scale_hi < scale_lo)
        throw config_error("augment scale range must satisfy 0 < lo <= hi");
    if (sat_lo < 0 || sat_hi < sat_lo || val_lo < 0 || val_hi < val_lo)
        throw config_error("augment sat/val ranges must satisfy 0 <= lo <= hi");
    if (hflip_p < 0 || hflip_p > 1 || vflip_p < 0 || vflip_p > 1)
        throw config_error("flip probabilities must be in [0,1]");
}

AffineTransform sample_affine(const AugmentParams& params, std::size_t extent,
                              std::mt19937_64& rng) {
    params.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AffineTransform t;
    t.angle_deg = (2.0 * unit(rng) - 1.0) * params.rotation_deg;
    t.scale = params.scale_lo + unit(rng) * (params.scale_hi - params.scale_lo);
    t.shear_deg = (2.0 * unit(rng) - 1.0) * params.shear_deg;
    t.shift_r = (2.0 * unit(rng) - 1.0) * params.shift_frac * double(extent);
    t.shift_c = (2.0 * unit(rng) - 1.0) * params.shift_frac * double(extent);
    t.hflip = unit(rng) < params.hflip_p;
    t.vflip = unit(rng) < params.vflip_p;
    return t;
}

Sample apply_affine(const Sample& s, const AffineTransform& t) {
    const std::size_t H = spatial_h(s.image), W = spatial_w(s.image);
    if (H != W) throw shape_error("apply_affine: sample must be square, got " +
                                  std::to_string(H) + "x" + std::to_string(W));

    // forward content map: p_out = M (p_in - c) + c + shift, with
    // M = R(angle) * Shear * (scale * Flip) in (row, col) coordinates
    const double a = t.angle_deg * kPi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double sh = std::tan(t.shear_deg * kPi / 180.0);
    const double fr = t.vflip ? -1.0 : 1.0;
    const double fc = t.hflip ? -1.0 : 1.0;

    // R * Sh, with R = [[ca, -sa], [sa, ca]] and Sh = [[1, 0], [sh, 1]]
    double m00 = ca - sa * sh, m01 = -sa;
    double m10 = sa + ca * sh, m11 = ca;
    // * scale * flip (column scaling)
    m00 *= t.scale * fr;
    m10 *= t.scale * fr;
    m01 *= t.scale * fc;
    m11 *= t.scale * fc;

    const double det = m00 * m11 - m01 * m10;
    const double i00 = m11 / det, i01 = -m01 / det;
    const double i10 = -m10 / det, i11 = m00 / det;

    const double cr = (double(H) - 1.0) / 2.0;
    const double cc = (double(W) - 1.0) / 2.0;

    Sample out;
    out.source_id = s.source_id;
    out.fold = s.fold;
    out.image = Tensor({3, H, W});
    if (s.mask) out.mask = Tensor({H, W});

    const auto nH = std::ptrdiff_t(H), nW = std::ptrdiff_t(W);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const double vr = double(r) - cr - t.shift_r;
            const double vc = double(c) - cc - t.shift_c;
            const double sr = i00 * vr + i01 * vc + cr;
            const double sc = i10 * vr + i11 * vc + cc;

            // bilinear with reflection for the image
            const double fl_r = std::floor(sr), fl_c = std::floor(sc);
            const double wr = sr - fl_r, wc = sc - fl_c;
            const std::ptrdiff_t r0 = reflect_index(std::ptrdiff_t(fl_r), nH);
            const std::ptrdiff_t r1 = reflect_index(std::ptrdiff_t(fl_r) + 1, nH);
            const std::ptrdiff_t c0 = reflect_index(std::ptrdiff_t(fl_c), nW);
            const std::ptrdiff_t c1 = reflect_index(std::ptrdiff_t(fl_c) + 1, nW);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float* plane = s.image.data() + ch * H * W;
                const double v00 = plane[r0 * nW + c0], v01 = plane[r0 * nW + c1];
                const double v10 = plane[r1 * nW + c0], v11 = plane[r1 * nW + c1];
                const double top = v00 + wc * (v01 - v00);
                const double bot = v10 + wc * (v11 - v10);
                out.image[(ch * H + r) * W + c] = float(top + wr * (bot - top));
            }
            if (s.mask) {
                const std::ptrdiff_t rn = reflect_index(std::ptrdiff_t(std::llround(sr)), nH);
                const std::ptrdiff_t cn = reflect_index(std::ptrdiff_t(std::llround(sc)), nW);
                (*out.mask)[r * W + c] = (*s.mask)[rn * nW + cn];
            }
        }
    }
    return out;
}

Sample augment_affine(const Sample& s, const AugmentParams& params, std::mt19937_64& rng) {
    return apply_affine(s, sample_affine(params, spatial_h(s.image), rng));
}

// ---------------------------------------------------------------------------
// HSV jitter
// ---------------------------------------------------------------------------

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
    const double v = std::max({r, g, b});
    const double lo = std::min({r, g, b});
    const double delta = v - lo;
    double h = 0.0;
    if (delta > 0.0) {
        if (v == r) h = 60.0 * std::fmod((g - b) / delta, 6.0);
        else if (v == g) h = 60.0 * ((b - r) / delta + 2.0);
        else h = 60.0 * ((r - g) / delta + 4.0);
        if (h < 0.0) h += 360.0;
    }
    const double s = v > 0.0 ? delta / v : 0.0;
    return {h, s, v};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

Tensor apply_hsv(const Tensor& image, const HsvJitter& jitter) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw shape_error("apply_hsv: expected 3 x H x W, got " + shape_str(image));
    const std::size_t HW = image.dim(1) * image.dim(2);
    Tensor out(image.shape());
    for (std::size_t i = 0; i < HW; ++i) {
        auto [h, s, v] = rgb_to_hsv(image[i], image[HW + i], image[2 * HW + i]);
        h = std::fmod(h + jitter.hue_shift_deg, 360.0);
        if (h < 0.0) h += 360.0;
        s = std::clamp(s * jitter.sat_scale, 0.0, 1.0);
        v = std::clamp(v * jitter.val_scale, 0.0, 1.0);
        const auto rgb = hsv_to_rgb(h, s, v);
        out[i] = float(rgb[0]);
        out[HW + i] = float(rgb[1]);
        out[2 * HW + i] = float(rgb[2]);
    }
    return out;
}

Tensor augment_hsv(const Tensor& image, const AugmentParams& params, std::mt19937_64& rng) {
    params.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    HsvJitter j;
    j.hue_shift_deg = (2.0 * unit(rng) - 1.0) * params.hue_deg;
    j.sat_scale = params.sat_lo + unit(rng) * (params.sat_hi - params.sat_lo);
    j.val_scale = params.val_lo + unit(rng) * (params.val_hi - params.val_lo);
    return apply_hsv(image, j);
}

// ---------------------------------------------------------------------------
// synthetic blobs
// ---------------------------------------------------------------------------

void stamp_blob(Sample& s, double row, double col, double r_major, double r_minor,
                double angle, const std::array<float, 3>& color) {
    if (!s.mask) throw state_error("stamp_blob: sample has no mask");
    const std::size_t H = spatial_h(s.image), W = spatial_w(s.image);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double rmax = std::max(r_major, r_minor) * 1.3 + 1.0;
    const auto rlo = std::size_t(std::max(0.0, std::floor(row - rmax)));
    const auto rhi = std::size_t(std::min(double(H) - 1.0, std::ceil(row + rmax)));
    const auto clo = std::size_t(std::max(0.0, std::floor(col - rmax)));
    const auto chi = std::size_t(std::min(double(W) - 1.0, std::ceil(col + rmax)));

    for (std::size_t r = rlo; r <= rhi; ++r) {
        for (std::size_t c = clo; c <= chi; ++c) {
            const double dr = double(r) - row, dc = double(c) - col;
            const double u = ca * dr + sa * dc;
            const double v = -sa * dr + ca * dc;
            const double q = (u / r_major) * (u / r_major) + (v / r_minor) * (v / r_minor);
            if (q <= 1.0) (*s.mask)[r * W + c] = 1.0f;
            // solid core, soft shoulder spilling slightly past the support
            const double alpha = q <= 0.85 ? 1.0 : std::clamp((1.15 - q) / 0.30, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                float& px = s.image[(ch * H + r) * W + c];
                px = float((1.0 - alpha) * px + alpha * color[ch]);
            }
        }
    }
}

namespace {

Sample synth_one(std::uint64_t seed, std::size_t index, std::size_t size,
                 std::size_t max_lesions, double rlo, double rhi) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (index + 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Sample s;
    s.source_id = "synth_" + std::to_string(index);
    s.image = Tensor({3, size, size});
    s.mask = Tensor({size, size});

    // mucosa-like background: coarse value-noise grid, bilinearly upsampled,
    // plus fine per-pixel noise
    const std::array<double, 3> base{0.78, 0.48, 0.42};
    const std::size_t step = std::max<std::size_t>(4, size / 8);
    const std::size_t gn = size / step + 2;
    std::vector<double> grid(3 * gn * gn);
    for (auto& g : grid) g = (2.0 * unit(rng) - 1.0) * 0.08;
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t r = 0; r < size; ++r)
            for (std::size_t c = 0; c < size; ++c) {
                const double gr = double(r) / double(step), gc = double(c) / double(step);
                const auto g0 = std::size_t(gr), g1 = std::size_t(gc);
                const double fr = gr - double(g0), fc = gc - double(g1);
                const double* g = grid.data() + ch * gn * gn;
                const double top = g[g0 * gn + g1] * (1 - fc) + g[g0 * gn + g1 + 1] * fc;
                const double bot =
                    g[(g0 + 1) * gn + g1] * (1 - fc) + g[(g0 + 1) * gn + g1 + 1] * fc;
                s.image[(ch * size + r) * size + c] =
                    float(std::clamp(base[ch] + top * (1 - fr) + bot * fr, 0.0, 1.0));
            }
    for (std::size_t i = 0; i < s.image.size(); ++i)
        s.image[i] = float(std::clamp(double(s.image[i]) + (2.0 * unit(rng) - 1.0) * 0.02,
                                      0.0, 1.0));

    // lesion count skews toward one per image
    static constexpr double kCountWeight[] = {1.0, 5.0, 2.5, 1.2, 0.6, 0.3, 0.15};
    double total = 0.0;
    for (std::size_t j = 0; j <= max_lesions; ++j)
        total += kCountWeight[std::min<std::size_t>(j, 6)];
    double draw = unit(rng) * total;
    std::size_t lesions = max_lesions;
    for (std::size_t j = 0; j <= max_lesions; ++j) {
        draw -= kCountWeight[std::min<std::size_t>(j, 6)];
        if (draw <= 0.0) {
            lesions = j;
            break;
        }
    }

    for (std::size_t j = 0; j < lesions; ++j) {
        const double r1 = rlo + unit(rng) * (rhi - rlo);
        const double r2 = std::clamp(r1 * (0.85 + 0.30 * unit(rng)), rlo * 0.9, rhi);
        const double angle = unit(rng) * kPi;
        const double margin = std::max(r1, r2) + 2.0;
        const double row = margin + unit(rng) * (double(size) - 1.0 - 2.0 * margin);
        const double col = margin + unit(rng) * (double(size) - 1.0 - 2.0 * margin);
        const std::array<float, 3> color{float(0.55 + (2 * unit(rng) - 1) * 0.06),
                                         float(0.13 + (2 * unit(rng) - 1) * 0.05),
                                         float(0.13 + (2 * unit(rng) - 1) * 0.05)};
        stamp_blob(s, row, col, r1, r2, angle, color);
    }
    return s;
}

} // namespace

std::vector<Sample> synth_blobs(std::uint64_t seed, std::size_t count, std::size_t size,
                                std::size_t max_lesions, const SynthOptions& opts) {
    if (size < 16) throw config_error("synth_blobs: size must be >= 16");
    const double rlo = opts.radius_lo > 0 ? opts.radius_lo : 0.18 * double(size);
    const double rhi = opts.radius_hi > 0 ? opts.radius_hi : 0.235 * double(size);
    if (rhi < rlo) throw config_error("synth_blobs: radius_hi < radius_lo");

    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(synth_one(seed, i, size, max_lesions, rlo, rhi));
    return out;
}

} // namespace segkit
