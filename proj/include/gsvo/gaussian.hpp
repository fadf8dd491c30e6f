// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "gsvo/geometry.hpp"

namespace gsvo {

/// One anisotropic map primitive. `scale` holds per-axis standard deviations
/// in the frame given by `rotation`; opacity is the base opacity factor that
/// the per-pixel Gaussian falloff multiplies.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Constant(0.01);
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 0.8;
  Vec3 color = Vec3::Constant(0.5);

  /// World covariance R diag(scale^2) R^T.
  Mat3 covariance() const;

  /// Throws kInvalidArgument when scale, opacity, quaternion norm or color
  /// fall outside their documented ranges.
  void validate() const;
};

inline constexpr double kMinScale = 1e-6;
inline constexpr double kMaxScale = 1e3;

struct GaussianMap {
  std::vector<Gaussian3D> gaussians;
  Vec3 background_color = Vec3::Zero();

  size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  void validate() const;
};

/// Screen-space footprint of a Gaussian.
struct Splat2D {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // cov2d^-1
  double depth = 0.0;
  double base_opacity = 0.0;
  Vec3 color = Vec3::Zero();
  uint32_t source_index = 0;
  // Pixel-center bounding box of the cutoff ellipse, inclusive.
  int min_x = 0;
  int min_y = 0;
  int max_x = -1;
  int max_y = -1;
};

inline constexpr double kCov2dDilation = 0.3;
inline constexpr double kAlphaMax = 0.999;
inline constexpr double kDefaultCutoffSigma = 3.0;
inline constexpr double kNearClip = 0.01;

/// EWA projection of `g`. Returns nullopt when the Gaussian is closer than
/// the near clip or its cutoff ellipse misses every pixel center.
std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const SE3Pose& world_to_camera,
                                        const PinholeCamera& camera,
                                        double cutoff_sigma = kDefaultCutoffSigma);

/// base_opacity * exp(-0.5 d^T cov2d^-1 d), zero at or beyond the cutoff
/// Mahalanobis distance, clamped to kAlphaMax.
double evaluate_alpha(const Splat2D& s, const Vec2& pixel,
                      double cutoff_sigma = kDefaultCutoffSigma);

/// Stable ascending-depth order.
std::vector<Splat2D> sort_splats(std::vector<Splat2D> splats);

}  // namespace gsvo
