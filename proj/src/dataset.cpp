// SPDX-License-Identifier: Apache-2.0
#include "gsvo/dataset.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "gsvo/error.hpp"
#include "gsvo/image_io.hpp"

namespace gsvo {

namespace {

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::kMissingFile, path.string());
  }
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

}  // namespace

PinholeCamera read_camera_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream fields(line);
    PinholeCamera cam;
    std::string extra;
    if (!(fields >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height) ||
        (fields >> extra)) {
      throw Error(ErrorCode::kMalformedLine,
                  fmt::format("{}:{}: expected 'fx fy cx cy width height'", path.string(),
                              line_no));
    }
    try {
      cam.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedLine,
                  fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    return cam;
  }
  throw Error(ErrorCode::kMalformedLine, path.string() + ": no camera line");
}

std::string format_camera(const PinholeCamera& camera) {
  return fmt::format("{:.10g} {:.10g} {:.10g} {:.10g} {} {}\n", camera.fx, camera.fy, camera.cx,
                     camera.cy, camera.width, camera.height);
}

std::vector<FrameEntry> read_frame_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::vector<FrameEntry> frames;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream fields(line);
    FrameEntry f;
    std::string rel;
    std::string extra;
    if (!(fields >> f.timestamp >> rel) || (fields >> extra)) {
      throw Error(ErrorCode::kMalformedLine,
                  fmt::format("{}:{}: expected 'timestamp path'", path.string(), line_no));
    }
    if (!frames.empty() && !(f.timestamp > frames.back().timestamp)) {
      throw Error(ErrorCode::kTimestampDisorder,
                  fmt::format("{}:{}: timestamp {:.6f} not after previous {:.6f}", path.string(),
                              line_no, f.timestamp, frames.back().timestamp));
    }
    f.image_path = path.parent_path() / rel;
    frames.push_back(std::move(f));
  }
  return frames;
}

SequenceDataset load_sequence(const std::filesystem::path& root) {
  SequenceDataset ds;
  ds.root = root;
  if (!std::filesystem::is_directory(root)) throw Error(ErrorCode::kMissingFile, root.string());
  for (const char* name : {"rgb.txt", "groundtruth.txt", "camera.txt", "cloud.ply"}) {
    require_file(root / name);
  }
  ds.camera = read_camera_file(root / "camera.txt");
  ds.frames = read_frame_list(root / "rgb.txt");
  ds.ground_truth = read_tum_trajectory(root / "groundtruth.txt");
  ds.point_cloud_path = root / "cloud.ply";
  for (const auto& f : ds.frames) require_file(f.image_path);
  return ds;
}

RgbImage SequenceDataset::load_image(size_t index) const {
  if (index >= frames.size()) {
    throw Error(ErrorCode::kOutOfBounds, fmt::format("frame {} of {}", index, frames.size()));
  }
  RgbImage img = read_png(frames[index].image_path);
  if (img.width() != camera.width || img.height() != camera.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("{} is {}x{}, camera expects {}x{}", frames[index].image_path.string(),
                            img.width(), img.height(), camera.width, camera.height));
  }
  return img;
}

}  // namespace gsvo
