// SPDX-License-Identifier: Apache-2.0
#include "gsvo/metrics.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>
#include <json.hpp>
#include <cmath>
#include <map>
#include <numbers>

#include "gsvo/error.hpp"

namespace gsvo {

Alignment parse_alignment(const std::string& name) {
  if (name == "none") return Alignment::kNone;
  if (name == "rigid") return Alignment::kRigid;
  if (name == "similarity" || name == "sim3") return Alignment::kSimilarity;
  throw Error(ErrorCode::kInvalidArgument, "unknown alignment '" + name + "'");
}

std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::kNone: return "none";
    case Alignment::kRigid: return "rigid";
    case Alignment::kSimilarity: return "similarity";
  }
  return "none";
}

std::vector<AssociatedPair> associate(const Trajectory& estimate, const Trajectory& reference,
                                      double max_dt) {
  std::vector<AssociatedPair> pairs;
  for (size_t i = 0; i < estimate.size(); ++i) {
    const long j = reference.nearest(estimate[i].timestamp, max_dt);
    if (j >= 0) pairs.push_back({i, static_cast<size_t>(j)});
  }
  return pairs;
}

AteResult compute_ate(const Trajectory& estimate, const Trajectory& reference, Alignment align,
                      double max_dt) {
  const auto pairs = associate(estimate, reference, max_dt);
  if (pairs.empty()) {
    throw Error(ErrorCode::kNoAssociation, "no estimate timestamp within the association window");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n);
  Eigen::Matrix3Xd dst(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    src.col(k) = estimate[pairs[k].estimate].pose.translation();
    dst.col(k) = reference[pairs[k].reference].pose.translation();
  }

  AteResult out;
  if (align != Alignment::kNone && n >= 2) {
    out.alignment = Eigen::umeyama(src, dst, align == Alignment::kSimilarity);
  } else if (align != Alignment::kNone) {
    out.alignment.block<3, 1>(0, 3) = dst.col(0) - src.col(0);
  }
  const Eigen::Matrix3d a = out.alignment.topLeftCorner<3, 3>();
  const Vec3 b = out.alignment.block<3, 1>(0, 3);

  double sum_sq = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double e = (a * src.col(k) + b - dst.col(k)).norm();
    out.timestamps.push_back(estimate[pairs[k].estimate].timestamp);
    out.errors.push_back(e);
    sum_sq += e * e;
  }
  out.rmse = std::sqrt(sum_sq / static_cast<double>(n));
  return out;
}

double ate_rmse(const Trajectory& estimate, const Trajectory& reference, Alignment align,
                double max_dt) {
  return compute_ate(estimate, reference, align, max_dt).rmse;
}

RelativeErrorResult compute_relative_errors(const Trajectory& estimate,
                                            const Trajectory& reference, double delta,
                                            double max_dt) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  const auto pairs = associate(estimate, reference, max_dt);
  // Reference timestamp -> pair index, for locating the partner at t + delta.
  std::map<double, size_t> by_time;
  for (size_t k = 0; k < pairs.size(); ++k) {
    by_time.emplace(reference[pairs[k].reference].timestamp, k);
  }

  RelativeErrorResult out;
  double sum_t = 0.0;
  double sum_r = 0.0;
  for (size_t k = 0; k < pairs.size(); ++k) {
    const double t = reference[pairs[k].reference].timestamp;
    const double target = t + delta;
    auto it = by_time.lower_bound(target);
    long best = -1;
    double best_dt = max_dt;
    if (it != by_time.end() && std::abs(it->first - target) <= best_dt) {
      best_dt = std::abs(it->first - target);
      best = static_cast<long>(it->second);
    }
    if (it != by_time.begin()) {
      auto prev = std::prev(it);
      if (std::abs(prev->first - target) < best_dt ||
          (best < 0 && std::abs(prev->first - target) <= best_dt)) {
        best = static_cast<long>(prev->second);
      }
    }
    if (best < 0 || static_cast<size_t>(best) == k) continue;
    const auto& p2 = pairs[static_cast<size_t>(best)];
    const SE3Pose& q1 = reference[pairs[k].reference].pose;
    const SE3Pose& q2 = reference[p2.reference].pose;
    const SE3Pose& p1 = estimate[pairs[k].estimate].pose;
    const SE3Pose& pp2 = estimate[p2.estimate].pose;
    const SE3Pose e = (q1.inverse() * q2).inverse() * (p1.inverse() * pp2);
    const double te = e.translation().norm();
    const double re = rotation_angle(e.rotation()) * 180.0 / std::numbers::pi;
    out.timestamps.push_back(estimate[pairs[k].estimate].timestamp);
    out.translation_errors.push_back(te);
    out.rotation_errors_deg.push_back(re);
    sum_t += te * te;
    sum_r += re * re;
  }
  if (out.timestamps.empty()) {
    throw Error(ErrorCode::kInsufficientOverlap,
                fmt::format("no associated pair spans {} s", delta));
  }
  const double n = static_cast<double>(out.timestamps.size());
  out.rte_rmse = std::sqrt(sum_t / n);
  out.rre_rmse_deg = std::sqrt(sum_r / n);
  return out;
}

RteRre rte_rre_rmse(const Trajectory& estimate, const Trajectory& reference, double delta,
                    double max_dt) {
  const auto r = compute_relative_errors(estimate, reference, delta, max_dt);
  return {r.rte_rmse, r.rre_rmse_deg};
}

MetricReport evaluate_trajectory(const Trajectory& estimate, const Trajectory& reference,
                                 Alignment align, double delta, double max_dt) {
  MetricReport report;
  report.ate = compute_ate(estimate, reference, align, max_dt);
  report.ate_rmse = report.ate.rmse;
  report.n_pairs = report.ate.errors.size();
  try {
    report.relative = compute_relative_errors(estimate, reference, delta, max_dt);
    report.rte_rmse = report.relative.rte_rmse;
    report.rre_rmse = report.relative.rre_rmse_deg;
    report.has_relative = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInsufficientOverlap) throw;
  }
  return report;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["ate_rmse"] = report.ate_rmse;
  j["rte_rmse"] = report.has_relative ? nlohmann::ordered_json(report.rte_rmse) : nullptr;
  j["rre_rmse"] = report.has_relative ? nlohmann::ordered_json(report.rre_rmse) : nullptr;
  j["n_pairs"] = report.n_pairs;
  return j.dump(2) + "\n";
}

std::string report_csv(const MetricReport& report) {
  std::map<double, size_t> rel;
  for (size_t i = 0; i < report.relative.timestamps.size(); ++i) {
    rel.emplace(report.relative.timestamps[i], i);
  }
  std::string out = "timestamp,ate_error,rte_error,rre_error_deg\n";
  for (size_t i = 0; i < report.ate.timestamps.size(); ++i) {
    const double t = report.ate.timestamps[i];
    out += fmt::format("{:.6f},{:.9g}", t, report.ate.errors[i]);
    if (auto it = rel.find(t); it != rel.end()) {
      out += fmt::format(",{:.9g},{:.9g}\n", report.relative.translation_errors[it->second],
                         report.relative.rotation_errors_deg[it->second]);
    } else {
      out += ",,\n";
    }
  }
  return out;
}

}  // namespace gsvo
