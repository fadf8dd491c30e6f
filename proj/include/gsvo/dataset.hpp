// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsvo/geometry.hpp"
#include "gsvo/image.hpp"
#include "gsvo/trajectory.hpp"

namespace gsvo {

struct FrameEntry {
  double timestamp = 0.0;
  std::filesystem::path image_path;  // absolute
};

/// Directory layout: rgb.txt, groundtruth.txt, camera.txt, cloud.ply.
struct SequenceDataset {
  std::filesystem::path root;
  std::vector<FrameEntry> frames;
  PinholeCamera camera;
  Trajectory ground_truth;
  std::filesystem::path point_cloud_path;

  /// Loads frame `index`; kDimensionMismatch if it disagrees with the camera.
  RgbImage load_image(size_t index) const;
};

/// Throws kMissingFile, kMalformedLine (with line numbers), kTimestampDisorder.
SequenceDataset load_sequence(const std::filesystem::path& root);

/// Single line "fx fy cx cy width height".
PinholeCamera read_camera_file(const std::filesystem::path& path);
std::string format_camera(const PinholeCamera& camera);

/// TUM association list: "timestamp relative/path" per line.
std::vector<FrameEntry> read_frame_list(const std::filesystem::path& path);

}  // namespace gsvo
