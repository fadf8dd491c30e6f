// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "gsvo/image.hpp"

namespace gsvo {

/// 8- or 16-bit RGB, RGBA or grayscale PNG, scaled to [0,1].
/// Throws kMissingFile or kIo.
RgbImage read_png(const std::filesystem::path& path);

/// 8-bit RGB PNG, channels rounded from [0,1].
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Single-channel little-endian float32 PFM ("Pf", scale -1, rows bottom-up).
void write_pfm(const std::filesystem::path& path, const ScalarImage& image);
ScalarImage read_pfm(const std::filesystem::path& path);

/// Maps depth to gray for viewing: [0, max_depth] -> [1, 0], invalid (<= 0) -> 0.
GrayImage depth_to_gray(const ScalarImage& depth, double max_depth);

}  // namespace gsvo
