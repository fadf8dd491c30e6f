// SPDX-License-Identifier: Apache-2.0
#include "gsvo/trajectory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gsvo/error.hpp"

namespace gsvo {

void Trajectory::push_back(double timestamp, const SE3Pose& pose) {
  if (!entries_.empty() && !(timestamp > entries_.back().timestamp)) {
    throw Error(ErrorCode::kTimestampDisorder,
                fmt::format("timestamp {:.6f} does not follow {:.6f}", timestamp,
                            entries_.back().timestamp));
  }
  entries_.push_back({timestamp, pose});
}

double Trajectory::path_length() const {
  double len = 0.0;
  for (size_t i = 1; i < entries_.size(); ++i) {
    len += (entries_[i].pose.translation() - entries_[i - 1].pose.translation()).norm();
  }
  return len;
}

long Trajectory::nearest(double timestamp, double max_dt) const {
  if (entries_.empty()) return -1;
  auto it = std::lower_bound(entries_.begin(), entries_.end(), timestamp,
                             [](const TimedPose& e, double t) { return e.timestamp < t; });
  long best = -1;
  double best_dt = max_dt;
  auto consider = [&](std::vector<TimedPose>::const_iterator c) {
    const double dt = std::abs(c->timestamp - timestamp);
    if (dt <= best_dt) {
      // Ties resolve to the earlier entry.
      if (dt < best_dt || best < 0 || (c - entries_.begin()) < best) {
        best_dt = dt;
        best = c - entries_.begin();
      }
    }
  };
  if (it != entries_.begin()) consider(std::prev(it));
  if (it != entries_.end()) consider(it);
  return best;
}

Trajectory parse_tum_trajectory(const std::string& text, const std::string& source) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double v[8];
    for (double& x : v) {
      if (!(fields >> x)) {
        throw Error(ErrorCode::kMalformedLine,
                    fmt::format("{}:{}: expected 8 numbers (timestamp tx ty tz qx qy qz qw)",
                                source, line_no));
      }
    }
    std::string extra;
    if (fields >> extra) {
      throw Error(ErrorCode::kMalformedLine,
                  fmt::format("{}:{}: trailing content '{}'", source, line_no, extra));
    }
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 1e-12) || !std::isfinite(q.norm())) {
      throw Error(ErrorCode::kMalformedLine,
                  fmt::format("{}:{}: degenerate quaternion", source, line_no));
    }
    if (!traj.empty() && !(v[0] > traj.entries().back().timestamp)) {
      throw Error(ErrorCode::kTimestampDisorder,
                  fmt::format("{}:{}: timestamp {:.6f} not after previous {:.6f}", source,
                              line_no, v[0], traj.entries().back().timestamp));
    }
    traj.push_back(v[0], SE3Pose(q, Vec3(v[1], v[2], v[3])));
  }
  return traj;
}

Trajectory read_tum_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tum_trajectory(ss.str(), path.string());
}

std::string format_tum_trajectory(const Trajectory& trajectory) {
  std::string out;
  for (const auto& e : trajectory.entries()) {
    const Vec3& t = e.pose.translation();
    const Eigen::Quaterniond q = e.pose.quaternion();
    out += fmt::format("{:.6f} {:.10f} {:.10f} {:.10f} {:.10f} {:.10f} {:.10f} {:.10f}\n",
                       e.timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_tum_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  write_file_atomic(path, format_tum_trajectory(trajectory));
}

}  // namespace gsvo
