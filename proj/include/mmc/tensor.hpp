#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmc/errors.hpp"

namespace mmc {

struct ImageShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    int elements() const { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

/// Dense raster tensor stored channel-major (C planes of H*W), backed by a
/// single Eigen array so elementwise math stays expression-friendly.
template <typename Scalar>
struct BasicImage {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    ImageShape shape;
    Array data;

    BasicImage() = default;
    BasicImage(int channels, int height, int width)
        : shape{channels, height, width}, data(Array::Zero(channels * height * width)) {}
    explicit BasicImage(ImageShape s) : BasicImage(s.channels, s.height, s.width) {}

    bool empty() const { return data.size() == 0; }

    Scalar& at(int c, int y, int x) { return data[(c * shape.height + y) * shape.width + x]; }
    Scalar at(int c, int y, int x) const { return data[(c * shape.height + y) * shape.width + x]; }

    /// Mutable view of one channel plane as an H x W row-major matrix.
    auto plane(int c) {
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data.data() + static_cast<std::ptrdiff_t>(c) * shape.height * shape.width, shape.height,
            shape.width);
    }
    auto plane(int c) const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data.data() + static_cast<std::ptrdiff_t>(c) * shape.height * shape.width, shape.height,
            shape.width);
    }

    bool bitwise_equal(const BasicImage& other) const {
        if (shape != other.shape) return false;
        return std::memcmp(data.data(), other.data.data(), sizeof(Scalar) * data.size()) == 0;
    }
};

using Image = BasicImage<float>;

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.shape != b.shape)
        throw Error(ErrorCode::shape_mismatch, std::string(what) + ": tensors differ in shape");
}

// ---- hashing ---------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

inline std::uint8_t quantize_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}

/// Content hash over the 8-bit quantized pixels plus the shape. Stable across
/// an encode/decode round trip, which is what cache keys need.
std::uint64_t image_content_hash(const Image& img);

// ---- geometry --------------------------------------------------------------

/// Bilinear resample to the given output size. Scale 1:1 is the identity.
Image resize_bilinear(const Image& img, int out_height, int out_width);

/// Zero-pad a smaller image into the center of a target canvas.
Image pad_center(const Image& img, int out_height, int out_width);

/// Crop the centered window of the given size out of a larger image.
Image crop_center(const Image& img, int out_height, int out_width);

// ---- reductions ------------------------------------------------------------

/// Pairwise summation; order-independent enough for reproducible score
/// aggregation regardless of how callers batch the inputs.
double pairwise_sum(std::span<const double> values);

inline double pairwise_mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    return pairwise_sum(values) / static_cast<double>(values.size());
}

} // namespace mmc
