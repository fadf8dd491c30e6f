// SPDX-License-Identifier: Apache-2.0
#include "gsvo/image_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "gsvo/error.hpp"

namespace gsvo {

RgbImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, path.string());
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(ErrorCode::kIo, "cannot decode image " + path.string());
  double scale = 0.0;
  if (raw.depth() == CV_8U) {
    scale = 1.0 / 255.0;
  } else if (raw.depth() == CV_16U) {
    scale = 1.0 / 65535.0;
  } else {
    throw Error(ErrorCode::kIo, "unsupported bit depth in " + path.string());
  }
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::merge(std::vector<cv::Mat>{raw, raw, raw}, rgb); break;
    case 3: rgb = raw; break;
    case 4: {
      std::vector<cv::Mat> ch;
      cv::split(raw, ch);
      ch.pop_back();
      cv::merge(ch, rgb);
      break;
    }
    default: throw Error(ErrorCode::kIo, "unsupported channel count in " + path.string());
  }
  cv::Mat f;
  rgb.convertTo(f, CV_64FC3, scale);
  RgbImage out(f.cols, f.rows);
  auto dst = out.data();
  for (int y = 0; y < f.rows; ++y) {
    const auto* row = f.ptr<cv::Vec3d>(y);
    for (int x = 0; x < f.cols; ++x) {
      const size_t i = 3 * (static_cast<size_t>(y) * f.cols + x);
      // OpenCV stores BGR.
      dst[i] = row[x][2];
      dst[i + 1] = row[x][1];
      dst[i + 2] = row[x][0];
    }
  }
  return out;
}

namespace {

uint8_t to_u8(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void encode(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<uchar> buf;
  if (!cv::imencode(".png", mat, buf)) throw Error(ErrorCode::kIo, "png encode failed");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const Vec3 c = image.at(x, y);
      row[x] = cv::Vec3b(to_u8(c.z()), to_u8(c.y()), to_u8(c.x()));
    }
  }
  encode(path, mat);
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) row[x] = to_u8(image(x, y));
  }
  encode(path, mat);
}

void write_pfm(const std::filesystem::path& path, const ScalarImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << fmt::format("Pf\n{} {}\n-1.0\n", image.width, image.height);
  std::vector<float> row(static_cast<size_t>(image.width));
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) row[x] = static_cast<float>(image(x, y));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

ScalarImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::string magic;
  int w = 0;
  int h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": not a little-endian gray PFM");
  }
  ScalarImage img(w, h);
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * sizeof(float)));
    if (!in) throw Error(ErrorCode::kTruncatedBody, path.string());
    for (int x = 0; x < w; ++x) img(x, y) = row[x];
  }
  return img;
}

GrayImage depth_to_gray(const ScalarImage& depth, double max_depth) {
  GrayImage out(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double d = depth(x, y);
      out(x, y) = d > 0.0 ? std::clamp(1.0 - d / max_depth, 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

}  // namespace gsvo
