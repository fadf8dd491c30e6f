// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "gsvo/geometry.hpp"
#include "gsvo/image.hpp"

namespace gsvo {

inline constexpr double kDefaultNnRadius = 15.0;

/// Z-buffered projection of `cloud` (nearest z per rounded pixel), 0 where empty.
ScalarImage zbuffer_depth(std::span<const Vec3> cloud, const SE3Pose& world_to_camera,
                          const PinholeCamera& camera);

/// Z-buffer, then every empty pixel takes the depth of the nearest hit pixel
/// within `radius` (Euclidean, ties broken in row-major offset order); pixels
/// with no hit in range stay 0. Throws kEmptyCloud, kEmptyProjection.
ScalarImage interpolate_depth_nn(std::span<const Vec3> cloud, const SE3Pose& world_to_camera,
                                 const PinholeCamera& camera, double radius = kDefaultNnRadius);

}  // namespace gsvo
