#include "segkit/image_io.hpp"

#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "segkit/errors.hpp"

namespace segkit {

Tensor read_image_rgb(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (img.empty()) throw io_error("cannot decode image: " + path);
    if (img.channels() != 3 || img.depth() != CV_8U)
        throw io_error("not a 3-channel 8-bit image: " + path + " (channels=" +
                       std::to_string(img.channels()) + ")");

    const std::size_t H = std::size_t(img.rows), W = std::size_t(img.cols);
    Tensor t({3, H, W});
    for (std::size_t r = 0; r < H; ++r) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(int(r));
        for (std::size_t c = 0; c < W; ++c) {
            // OpenCV decodes BGR
            t[(0 * H + r) * W + c] = float(row[c][2]) / 255.0f;
            t[(1 * H + r) * W + c] = float(row[c][1]) / 255.0f;
            t[(2 * H + r) * W + c] = float(row[c][0]) / 255.0f;
        }
    }
    return t;
}

BinaryMask read_mask(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw io_error("cannot decode mask: " + path);
    BinaryMask m(std::size_t(img.rows), std::size_t(img.cols));
    for (std::size_t r = 0; r < m.rows; ++r) {
        const std::uint8_t* row = img.ptr<std::uint8_t>(int(r));
        for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = row[c] > 127 ? 255 : 0;
    }
    return m;
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
    cv::Mat img(int(mask.rows), int(mask.cols), CV_8UC1);
    for (std::size_t r = 0; r < mask.rows; ++r) {
        std::uint8_t* row = img.ptr<std::uint8_t>(int(r));
        for (std::size_t c = 0; c < mask.cols; ++c) row[c] = mask.at(r, c);
    }
    if (!cv::imwrite(path, img)) throw io_error("cannot write mask PNG: " + path);
}

void write_image_rgb_png(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw shape_error("write_image_rgb_png: expected 3 x H x W, got " + shape_str(image));
    const std::size_t H = image.dim(1), W = image.dim(2);
    cv::Mat img(int(H), int(W), CV_8UC3);
    auto to_byte = [](float v) {
        const long b = std::lround(double(v) * 255.0);
        return std::uint8_t(b < 0 ? 0 : (b > 255 ? 255 : b));
    };
    for (std::size_t r = 0; r < H; ++r) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(int(r));
        for (std::size_t c = 0; c < W; ++c) {
            row[c][2] = to_byte(image[(0 * H + r) * W + c]);
            row[c][1] = to_byte(image[(1 * H + r) * W + c]);
            row[c][0] = to_byte(image[(2 * H + r) * W + c]);
        }
    }
    if (!cv::imwrite(path, img)) throw io_error("cannot write PNG: " + path);
}

} // namespace segkit
