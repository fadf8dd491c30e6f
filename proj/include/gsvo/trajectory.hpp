// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsvo/geometry.hpp"

namespace gsvo {

/// A camera-to-world pose at a time in seconds.
struct TimedPose {
  double timestamp = 0.0;
  SE3Pose pose;
};

/// Time-stamped pose sequence with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;

  /// Throws kTimestampDisorder unless timestamp exceeds the last one.
  void push_back(double timestamp, const SE3Pose& pose);

  const std::vector<TimedPose>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TimedPose& operator[](size_t i) const { return entries_[i]; }
  TimedPose& operator[](size_t i) { return entries_[i]; }

  /// Sum of consecutive translation distances.
  double path_length() const;

  /// Index of the entry nearest to `timestamp` within `max_dt`, or -1.
  long nearest(double timestamp, double max_dt) const;

 private:
  std::vector<TimedPose> entries_;
};

/// TUM format: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
/// Throws kMissingFile, kMalformedLine (with line number) and
/// kTimestampDisorder (naming the first offending line).
Trajectory read_tum_trajectory(const std::filesystem::path& path);
Trajectory parse_tum_trajectory(const std::string& text, const std::string& source = "<text>");

std::string format_tum_trajectory(const Trajectory& trajectory);
void write_tum_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);

/// Writes `content` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace gsvo
