#pragma once

#include <filesystem>

#include "mmc/tensor.hpp"

namespace mmc {

/// Raster I/O for the formats the toolkit produces and consumes: binary PPM
/// (P6) and 8-bit RGB PNG. The PNG encoder emits stored (uncompressed)
/// deflate blocks; the decoder handles exactly that subset, which covers
/// every file this toolkit writes. Pixels map to [0, 1] floats, 3 channels.

bool is_supported_image_file(const std::filesystem::path& path);

/// Throws Error{undecodable_image} when the file is missing, truncated, or in
/// an unsupported encoding.
Image read_image(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

/// Dispatches on the extension (.png / .ppm).
void write_image(const std::filesystem::path& path, const Image& img);

} // namespace mmc
