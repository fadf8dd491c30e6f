// SPDX-License-Identifier: Apache-2.0
#include "gsvo/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

#include "gsvo/error.hpp"

namespace gsvo {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

SE3Pose::SE3Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

SE3Pose::SE3Pose(const Eigen::Quaterniond& q, const Vec3& translation)
    : rotation_(q.normalized().toRotationMatrix()), translation_(translation) {}

Eigen::Quaterniond SE3Pose::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  // Canonical sign keeps serialized output stable.
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

SE3Pose SE3Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

SE3Pose SE3Pose::normalized() const {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return {r, translation_};
}

SE3Pose SE3Pose::operator*(const SE3Pose& rhs) const {
  return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
}

Eigen::Matrix4d SE3Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Mat6 SE3Pose::adjoint() const {
  Mat6 adj = Mat6::Zero();
  adj.topLeftCorner<3, 3>() = rotation_;
  adj.topRightCorner<3, 3>() = skew(translation_) * rotation_;
  adj.bottomRightCorner<3, 3>() = rotation_;
  return adj;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  const Mat3 w = skew(omega);
  double a;
  double b;
  if (theta_sq < 1e-10) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta_sq;
  }
  return Mat3::Identity() + a * w + b * w * w;
}

double rotation_angle(const Mat3& rotation) {
  const double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near 0 and pi, atan2 of the skew part does not.
  const Vec3 axis_sin(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                      rotation(1, 0) - rotation(0, 1));
  return std::atan2(0.5 * axis_sin.norm(), c);
}

Vec3 so3_log(const Mat3& rotation) {
  const double theta = rotation_angle(rotation);
  const Vec3 vee(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                 rotation(1, 0) - rotation(0, 1));
  if (theta < 1e-5) {
    // sin(theta)/theta ~ 1 - theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * vee;
  }
  if (theta > M_PI - 1e-4) {
    // Near pi the skew part vanishes; recover the axis from the symmetric part.
    // Symmetric part is cos(theta) I + (1 - cos(theta)) n n^T.
    const Mat3 nnt = (0.5 * (rotation + rotation.transpose()) -
                      std::cos(theta) * Mat3::Identity()) /
                     (1.0 - std::cos(theta));
    int k = 0;
    nnt.diagonal().maxCoeff(&k);
    Vec3 axis = nnt.col(k) / std::sqrt(std::max(nnt(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(vee) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * vee;
}

namespace {

// V such that translation = V * v for twist (v, omega).
Mat3 left_jacobian(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  const Mat3 w = skew(omega);
  double b;
  double c;
  if (theta_sq < 1e-10) {
    b = 0.5 - theta_sq / 24.0;
    c = 1.0 / 6.0 - theta_sq / 120.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    b = (1.0 - std::cos(theta)) / theta_sq;
    c = (theta - std::sin(theta)) / (theta_sq * theta);
  }
  return Mat3::Identity() + b * w + c * w * w;
}

}  // namespace

SE3Pose se3_exp(const Vec6& twist) {
  const Vec3 v = twist.head<3>();
  const Vec3 omega = twist.tail<3>();
  return {so3_exp(omega), left_jacobian(omega) * v};
}

Vec6 se3_log(const SE3Pose& pose) {
  const Vec3 omega = so3_log(pose.rotation());
  Vec6 out;
  out.head<3>() = left_jacobian(omega).inverse() * pose.translation();
  out.tail<3>() = omega;
  return out;
}

void PinholeCamera::validate() const {
  const bool ok = fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
                  cx < width && cy >= 0.0 && cy < height && std::isfinite(fx) &&
                  std::isfinite(fy);
  if (!ok) {
    throw Error(ErrorCode::kInvalidArgument,
                "camera intrinsics violate fx,fy>0 and 0<=c<size (fx=" + std::to_string(fx) +
                    " fy=" + std::to_string(fy) + " cx=" + std::to_string(cx) +
                    " cy=" + std::to_string(cy) + " " + std::to_string(width) + "x" +
                    std::to_string(height) + ")");
  }
}

PinholeCamera PinholeCamera::scaled_to_level(int level) const {
  PinholeCamera out = *this;
  for (int l = 0; l < level; ++l) {
    out.fx *= 0.5;
    out.fy *= 0.5;
    out.cx = (out.cx - 0.5) * 0.5;
    out.cy = (out.cy - 0.5) * 0.5;
    out.width /= 2;
    out.height /= 2;
  }
  return out;
}

Vec2 project(const PinholeCamera& camera, const Vec3& point) {
  if (!(point.z() > kMinProjectionDepth)) {
    throw Error(ErrorCode::kBehindCamera, "point z=" + std::to_string(point.z()));
  }
  return project_unchecked(camera, point);
}

Vec3 backproject(const PinholeCamera& camera, const Vec2& pixel, double inv_depth) {
  if (!(inv_depth > 0.0) || !std::isfinite(inv_depth)) {
    throw Error(ErrorCode::kInvalidDepth, "inverse depth " + std::to_string(inv_depth));
  }
  if (!(pixel.x() >= -0.5 && pixel.x() <= camera.width - 0.5 && pixel.y() >= -0.5 &&
        pixel.y() <= camera.height - 0.5)) {
    throw Error(ErrorCode::kOutOfBounds, "pixel outside image");
  }
  const Vec3 ray((pixel.x() - camera.cx) / camera.fx, (pixel.y() - camera.cy) / camera.fy, 1.0);
  return ray / inv_depth;
}

}  // namespace gsvo
