// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gsvo/geometry.hpp"

namespace gsvo {

/// Row-major single-channel image with intensities in [0,1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  GrayImage(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  double operator()(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  double& operator()(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double mean() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Interleaved RGB image, each channel in [0,1].
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, const Vec3& fill = Vec3::Zero());

  int width() const { return width_; }
  int height() const { return height_; }
  size_t pixel_count() const { return static_cast<size_t>(width_) * height_; }

  Vec3 at(int x, int y) const {
    const size_t i = 3 * (static_cast<size_t>(y) * width_ + x);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, const Vec3& c) {
    const size_t i = 3 * (static_cast<size_t>(y) * width_ + x);
    data_[i] = c.x();
    data_[i + 1] = c.y();
    data_[i + 2] = c.z();
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  GrayImage channel(int c) const;
  /// ITU-R BT.601 luma.
  GrayImage to_gray() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Single-channel float image used for depth and alpha maps (no range constraint).
struct ScalarImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ScalarImage() = default;
  ScalarImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  double operator()(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  double& operator()(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
};

/// Bilinear interpolation; position must lie in [0,w-1] x [0,h-1] (kOutOfBounds otherwise).
double bilinear_sample(const GrayImage& image, const Vec2& position);

struct SampleWithGradient {
  double value;
  Vec2 gradient;  // exact derivative of the bilinear interpolant
};

/// Unchecked bilinear sample plus the analytic derivative of the interpolant.
/// The caller guarantees 0 <= x < w-1 and 0 <= y < h-1.
SampleWithGradient bilinear_sample_with_gradient(const GrayImage& image, double x, double y);

/// Central-difference gradient at an integer pixel (one-sided at the border).
Vec2 central_gradient(const GrayImage& image, int x, int y);

struct ImagePyramid {
  std::vector<GrayImage> levels;

  int num_levels() const { return static_cast<int>(levels.size()); }
  const GrayImage& level(int l) const { return levels.at(static_cast<size_t>(l)); }
};

/// 2x2 box-filter pyramid; throws kTooSmallImage when the image has fewer than
/// 2^(levels-1) pixels along either axis.
ImagePyramid build_pyramid(const GrayImage& image, int levels);

}  // namespace gsvo
