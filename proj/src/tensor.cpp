#include "mmc/tensor.hpp"

#include <cstdio>

namespace mmc {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t image_content_hash(const Image& img) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::int32_t dims[3] = {img.shape.channels, img.shape.height, img.shape.width};
    h = fnv1a64(dims, sizeof(dims), h);
    std::vector<std::uint8_t> q(static_cast<std::size_t>(img.data.size()));
    for (Eigen::Index i = 0; i < img.data.size(); ++i) q[static_cast<std::size_t>(i)] = quantize_u8(img.data[i]);
    return fnv1a64(q.data(), q.size(), h);
}

Image resize_bilinear(const Image& img, int out_height, int out_width) {
    if (out_height == img.shape.height && out_width == img.shape.width) return img;
    Image out(img.shape.channels, out_height, out_width);
    const double sy = static_cast<double>(img.shape.height) / out_height;
    const double sx = static_cast<double>(img.shape.width) / out_width;
    for (int c = 0; c < img.shape.channels; ++c) {
        for (int y = 0; y < out_height; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.shape.height - 1);
            const int y1 = std::min(y0 + 1, img.shape.height - 1);
            const double wy = std::clamp(fy - y0, 0.0, 1.0);
            for (int x = 0; x < out_width; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.shape.width - 1);
                const int x1 = std::min(x0 + 1, img.shape.width - 1);
                const double wx = std::clamp(fx - x0, 0.0, 1.0);
                const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
                const double bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = static_cast<float>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

Image pad_center(const Image& img, int out_height, int out_width) {
    Image out(img.shape.channels, out_height, out_width);
    const int oy = (out_height - img.shape.height) / 2;
    const int ox = (out_width - img.shape.width) / 2;
    for (int c = 0; c < img.shape.channels; ++c)
        for (int y = 0; y < img.shape.height; ++y)
            for (int x = 0; x < img.shape.width; ++x) out.at(c, y + oy, x + ox) = img.at(c, y, x);
    return out;
}

Image crop_center(const Image& img, int out_height, int out_width) {
    Image out(img.shape.channels, out_height, out_width);
    const int oy = (img.shape.height - out_height) / 2;
    const int ox = (img.shape.width - out_width) / 2;
    for (int c = 0; c < img.shape.channels; ++c)
        for (int y = 0; y < out_height; ++y)
            for (int x = 0; x < out_width; ++x) out.at(c, y, x) = img.at(c, y + oy, x + ox);
    return out;
}

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

} // namespace mmc
