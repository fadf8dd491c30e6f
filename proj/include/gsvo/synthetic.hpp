// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsvo/gaussian.hpp"
#include "gsvo/render.hpp"
#include "gsvo/trajectory.hpp"

namespace gsvo {

/// Textured planar rectangle: points center + a*u + b*v with |a| <= half_u, |b| <= half_v.
struct SceneRect {
  Vec3 center = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;

  Vec3 normal() const { return u.cross(v); }
  bool contains(const Vec3& p, double margin = 0.0) const;
};

struct SyntheticOptions {
  /// "two-planes", "room-box" or "textured-wall".
  std::string layout = "two-planes";
  uint64_t seed = 0;
  int width = 320;
  int height = 240;
  int frames = 50;
  double frame_rate = 10.0;
  /// Gaussian grid spacing in meters; 0 picks the layout default.
  double spacing = 0.0;
  /// When positive, overrides `spacing` to give about this many Gaussians.
  int target_gaussians = 0;
  /// In-plane Gaussian standard deviation as a fraction of the grid spacing.
  double footprint = 0.45;
  bool render_views = true;
  RenderOptions render;
};

struct SyntheticScene {
  std::string layout;
  uint64_t seed = 0;
  GaussianMap map;
  Trajectory trajectory;  // camera-to-world
  PinholeCamera camera;
  std::vector<RenderedView> views;
  std::vector<SceneRect> surfaces;
  /// Surface patches left out of `cloud` (empty except for two-planes).
  std::vector<SceneRect> cloud_voids;
  std::vector<Vec3> cloud;
};

bool is_known_layout(const std::string& layout);

/// Deterministic in the options. Throws kInvalidArgument for an unknown
/// layout or when a pose renders with mean alpha <= 0.8.
SyntheticScene make_synthetic_scene(const SyntheticOptions& options);

/// Camera z-depth of the nearest surface through each pixel center, 0 where
/// no surface is hit.
ScalarImage analytic_depth(const std::vector<SceneRect>& surfaces, const SE3Pose& world_to_camera,
                           const PinholeCamera& camera);

/// Mask of pixels whose nearest visible surface point lies in one of `regions`.
std::vector<bool> region_mask(const std::vector<SceneRect>& surfaces,
                              const std::vector<SceneRect>& regions,
                              const SE3Pose& world_to_camera, const PinholeCamera& camera);

}  // namespace gsvo
