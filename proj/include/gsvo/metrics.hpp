// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "gsvo/trajectory.hpp"

namespace gsvo {

enum class Alignment { kNone, kRigid, kSimilarity };

Alignment parse_alignment(const std::string& name);
std::string to_string(Alignment a);

inline constexpr double kDefaultAssociationWindow = 0.02;
inline constexpr double kDefaultRelativeDelta = 1.0;

/// Index pair (estimate, reference) of timestamps matched by nearest neighbour.
struct AssociatedPair {
  size_t estimate = 0;
  size_t reference = 0;
};

std::vector<AssociatedPair> associate(const Trajectory& estimate, const Trajectory& reference,
                                      double max_dt = kDefaultAssociationWindow);

struct AteResult {
  double rmse = 0.0;
  /// Per associated pair, in estimate order.
  std::vector<double> timestamps;
  std::vector<double> errors;
  /// Applied to the estimate positions before differencing.
  Eigen::Matrix4d alignment = Eigen::Matrix4d::Identity();
};

/// Throws kNoAssociation when no timestamps match.
AteResult compute_ate(const Trajectory& estimate, const Trajectory& reference, Alignment align,
                      double max_dt = kDefaultAssociationWindow);
double ate_rmse(const Trajectory& estimate, const Trajectory& reference, Alignment align,
                double max_dt = kDefaultAssociationWindow);

struct RelativeErrorResult {
  double rte_rmse = 0.0;      // meters
  double rre_rmse_deg = 0.0;  // degrees
  std::vector<double> timestamps;
  std::vector<double> translation_errors;
  std::vector<double> rotation_errors_deg;
};

/// Throws kInsufficientOverlap when no pair spans `delta`.
RelativeErrorResult compute_relative_errors(const Trajectory& estimate,
                                            const Trajectory& reference,
                                            double delta = kDefaultRelativeDelta,
                                            double max_dt = kDefaultAssociationWindow);

struct RteRre {
  double rte = 0.0;
  double rre_deg = 0.0;
};
RteRre rte_rre_rmse(const Trajectory& estimate, const Trajectory& reference,
                    double delta = kDefaultRelativeDelta,
                    double max_dt = kDefaultAssociationWindow);

struct MetricReport {
  double ate_rmse = 0.0;
  double rte_rmse = 0.0;
  double rre_rmse = 0.0;
  size_t n_pairs = 0;
  /// Relative errors are absent when the overlap is shorter than delta.
  bool has_relative = false;
  AteResult ate;
  RelativeErrorResult relative;
};

MetricReport evaluate_trajectory(const Trajectory& estimate, const Trajectory& reference,
                                 Alignment align, double delta = kDefaultRelativeDelta,
                                 double max_dt = kDefaultAssociationWindow);

std::string report_json(const MetricReport& report);
/// timestamp,ate_error,rte_error,rre_error_deg (empty cells where undefined).
std::string report_csv(const MetricReport& report);

}  // namespace gsvo
