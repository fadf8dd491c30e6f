// SPDX-License-Identifier: Apache-2.0
#include "gsvo/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gsvo/error.hpp"

namespace gsvo {

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

GrayImage::GrayImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (data_.size() != static_cast<size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "gray image buffer size");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "intensity outside [0,1]: " + std::to_string(v));
    }
  }
}

double GrayImage::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

RgbImage::RgbImage(int width, int height, const Vec3& fill)
    : width_(width), height_(height), data_(3 * static_cast<size_t>(width) * height) {
  for (size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.x();
    data_[i + 1] = fill.y();
    data_[i + 2] = fill.z();
  }
}

GrayImage RgbImage::channel(int c) const {
  GrayImage out(width_, height_);
  auto dst = out.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = data_[3 * i + static_cast<size_t>(c)];
  return out;
}

GrayImage RgbImage::to_gray() const {
  GrayImage out(width_, height_);
  auto dst = out.data();
  for (size_t i = 0; i < dst.size(); ++i) {
    const double v = 0.299 * data_[3 * i] + 0.587 * data_[3 * i + 1] + 0.114 * data_[3 * i + 2];
    dst[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

double bilinear_sample(const GrayImage& image, const Vec2& position) {
  const double x = position.x();
  const double y = position.y();
  if (!(x >= 0.0 && y >= 0.0 && x <= image.width() - 1 && y <= image.height() - 1)) {
    throw Error(ErrorCode::kOutOfBounds,
                "sample at (" + std::to_string(x) + ", " + std::to_string(y) + ")");
  }
  const int x0 = std::min(static_cast<int>(x), std::max(image.width() - 2, 0));
  const int y0 = std::min(static_cast<int>(y), std::max(image.height() - 2, 0));
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  // Exact at lattice points: a zero weight multiplies its neighbour away.
  if (fx == 0.0 && fy == 0.0) return image(x0, y0);
  const double top = (1.0 - fx) * image(x0, y0) + fx * image(x1, y0);
  const double bottom = (1.0 - fx) * image(x0, y1) + fx * image(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

SampleWithGradient bilinear_sample_with_gradient(const GrayImage& image, double x, double y) {
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const double fx = x - x0;
  const double fy = y - y0;
  const double i00 = image(x0, y0);
  const double i10 = image(x0 + 1, y0);
  const double i01 = image(x0, y0 + 1);
  const double i11 = image(x0 + 1, y0 + 1);
  const double top = i00 + fx * (i10 - i00);
  const double bottom = i01 + fx * (i11 - i01);
  SampleWithGradient out;
  out.value = top + fy * (bottom - top);
  out.gradient = Vec2((1.0 - fy) * (i10 - i00) + fy * (i11 - i01), bottom - top);
  return out;
}

Vec2 central_gradient(const GrayImage& image, int x, int y) {
  const int xm = std::max(x - 1, 0);
  const int xp = std::min(x + 1, image.width() - 1);
  const int ym = std::max(y - 1, 0);
  const int yp = std::min(y + 1, image.height() - 1);
  const double gx = xp > xm ? (image(xp, y) - image(xm, y)) / (xp - xm) : 0.0;
  const double gy = yp > ym ? (image(x, yp) - image(x, ym)) / (yp - ym) : 0.0;
  return {gx, gy};
}

ImagePyramid build_pyramid(const GrayImage& image, int levels) {
  if (levels < 1) throw Error(ErrorCode::kInvalidArgument, "pyramid needs at least one level");
  const int need = 1 << (levels - 1);
  if (image.width() < need || image.height() < need) {
    throw Error(ErrorCode::kTooSmallImage, std::to_string(image.width()) + "x" +
                                               std::to_string(image.height()) + " for " +
                                               std::to_string(levels) + " levels");
  }
  ImagePyramid pyr;
  pyr.levels.reserve(static_cast<size_t>(levels));
  pyr.levels.push_back(image);
  for (int l = 1; l < levels; ++l) {
    const GrayImage& prev = pyr.levels.back();
    GrayImage next(prev.width() / 2, prev.height() / 2);
    for (int y = 0; y < next.height(); ++y) {
      for (int x = 0; x < next.width(); ++x) {
        next(x, y) = 0.25 * (prev(2 * x, 2 * y) + prev(2 * x + 1, 2 * y) + prev(2 * x, 2 * y + 1) +
                             prev(2 * x + 1, 2 * y + 1));
      }
    }
    pyr.levels.push_back(std::move(next));
  }
  return pyr;
}

}  // namespace gsvo
