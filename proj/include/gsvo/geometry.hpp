// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

Mat3 skew(const Vec3& v);

/// Rigid transform x -> R x + t.
///
/// Twists are ordered (translation, rotation): twist.head<3>() is the
/// translational part and twist.tail<3>() the rotation vector in radians.
class SE3Pose {
 public:
  SE3Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  SE3Pose(const Mat3& rotation, const Vec3& translation);
  SE3Pose(const Eigen::Quaterniond& q, const Vec3& translation);

  static SE3Pose identity() { return {}; }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  SE3Pose inverse() const;
  /// Same pose with the rotation re-projected onto SO(3).
  SE3Pose normalized() const;
  SE3Pose operator*(const SE3Pose& rhs) const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  Eigen::Matrix4d matrix() const;

  /// Adjoint for the (translation, rotation) twist ordering:
  /// exp(Adj(T) xi) = T exp(xi) T^-1.
  Mat6 adjoint() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

SE3Pose se3_exp(const Vec6& twist);
Vec6 se3_log(const SE3Pose& pose);

Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);

/// Rotation angle of a pose in radians, in [0, pi].
double rotation_angle(const Mat3& rotation);

/// Pinhole intrinsics. Integer pixel coordinates address pixel centers.
struct PinholeCamera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws kInvalidArgument when the invariants fx,fy > 0, 0 <= c < size fail.
  void validate() const;

  /// Intrinsics for pyramid level `level` under 2x2 box downsampling:
  /// a level-(L+1) pixel center sits at level-L coordinate 2u + 0.5.
  PinholeCamera scaled_to_level(int level) const;
};

inline constexpr double kMinProjectionDepth = 1e-6;

/// Throws kBehindCamera when z <= 1e-6.
Vec2 project(const PinholeCamera& camera, const Vec3& point);

/// Unchecked projection for inner loops where z was validated by the caller.
inline Vec2 project_unchecked(const PinholeCamera& camera, const Vec3& point) {
  return {camera.fx * point.x() / point.z() + camera.cx,
          camera.fy * point.y() / point.z() + camera.cy};
}

/// Throws kInvalidDepth for non-positive or non-finite inverse depth and
/// kOutOfBounds for pixels outside the image.
Vec3 backproject(const PinholeCamera& camera, const Vec2& pixel, double inv_depth);

}  // namespace gsvo
