// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gsvo/image.hpp"

namespace gsvo {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all uniform windows lying fully inside the image. The
/// window shrinks to the largest odd size that fits when the image is
/// smaller than `window`. Throws kDimensionMismatch / kInvalidArgument.
double ssim(const GrayImage& a, const GrayImage& b, int window = 11);

/// Per-channel SSIM averaged over RGB.
double ssim(const RgbImage& a, const RgbImage& b, int window = 11);

struct SsimGradient {
  double value = 0.0;
  std::vector<double> d_first;  // d ssim / d a, row-major, same size as the image
};

/// SSIM of two single-channel planes plus its analytic gradient with respect to `a`.
SsimGradient ssim_with_gradient(std::span<const double> a, std::span<const double> b, int width,
                                int height, int window = 11);

/// Window size actually used for an image of the given dimensions.
int effective_ssim_window(int width, int height, int window);

}  // namespace gsvo
