// SPDX-License-Identifier: Apache-2.0
#include "gsvo/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gsvo/error.hpp"

namespace gsvo {

Mat3 Gaussian3D::covariance() const {
  const Mat3 r = rotation.normalized().toRotationMatrix();
  return r * scale.cwiseAbs2().asDiagonal() * r.transpose();
}

void Gaussian3D::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(scale[i] >= kMinScale && scale[i] <= kMaxScale)) {
      throw Error(ErrorCode::kInvalidArgument, "gaussian scale out of range: " +
                                                   std::to_string(scale[i]));
    }
    if (!(color[i] >= 0.0 && color[i] <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "gaussian color outside [0,1]");
    }
  }
  if (!(opacity > 0.0 && opacity < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian opacity outside (0,1): " +
                                                 std::to_string(opacity));
  }
  if (std::abs(rotation.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian quaternion not unit norm");
  }
  if (!position.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian position not finite");
  }
}

void GaussianMap::validate() const {
  for (const auto& g : gaussians) g.validate();
}

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const SE3Pose& world_to_camera,
                                        const PinholeCamera& camera, double cutoff_sigma) {
  const Vec3 t = world_to_camera * g.position;
  if (!(t.z() > kNearClip)) return std::nullopt;

  const double inv_z = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx * inv_z, 0.0, -camera.fx * t.x() * inv_z * inv_z,  //
      0.0, camera.fy * inv_z, -camera.fy * t.y() * inv_z * inv_z;
  const Mat3& w = world_to_camera.rotation();
  const Eigen::Matrix<double, 2, 3> jw = jac * w;

  Splat2D s;
  s.cov2d = jw * g.covariance() * jw.transpose();
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
  s.cov2d.diagonal().array() += kCov2dDilation;
  s.conic = s.cov2d.inverse();
  s.mean2d = project_unchecked(camera, t);
  s.depth = t.z();
  s.base_opacity = g.opacity;
  s.color = g.color;

  const double rx = cutoff_sigma * std::sqrt(s.cov2d(0, 0));
  const double ry = cutoff_sigma * std::sqrt(s.cov2d(1, 1));
  const double lo_x = std::max(s.mean2d.x() - rx, 0.0);
  const double hi_x = std::min(s.mean2d.x() + rx, camera.width - 1.0);
  const double lo_y = std::max(s.mean2d.y() - ry, 0.0);
  const double hi_y = std::min(s.mean2d.y() + ry, camera.height - 1.0);
  if (!(lo_x <= hi_x && lo_y <= hi_y)) return std::nullopt;
  s.min_x = static_cast<int>(std::ceil(lo_x));
  s.max_x = static_cast<int>(std::floor(hi_x));
  s.min_y = static_cast<int>(std::ceil(lo_y));
  s.max_y = static_cast<int>(std::floor(hi_y));
  if (s.min_x > s.max_x || s.min_y > s.max_y) return std::nullopt;
  return s;
}

double evaluate_alpha(const Splat2D& s, const Vec2& pixel, double cutoff_sigma) {
  const Vec2 d = pixel - s.mean2d;
  const double m2 = d.dot(s.conic * d);
  if (m2 >= cutoff_sigma * cutoff_sigma) return 0.0;
  return std::min(s.base_opacity * std::exp(-0.5 * m2), kAlphaMax);
}

std::vector<Splat2D> sort_splats(std::vector<Splat2D> splats) {
  std::stable_sort(splats.begin(), splats.end(),
                   [](const Splat2D& a, const Splat2D& b) { return a.depth < b.depth; });
  return splats;
}

}  // namespace gsvo
