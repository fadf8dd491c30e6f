// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gsvo/gaussian.hpp"
#include "gsvo/image.hpp"

namespace gsvo {

struct RenderOptions {
  /// Compositing for a pixel stops once the remaining transmittance drops
  /// below this value. Zero disables early termination.
  double early_stop_transmittance = 1e-4;
  double cutoff_sigma = kDefaultCutoffSigma;
  /// Worker count; 0 = hardware concurrency. Output is identical for any value.
  int threads = 0;
};

/// Color, raw (alpha-weighted, unnormalized) depth and accumulated opacity.
struct RenderedView {
  RgbImage color;
  ScalarImage depth;
  ScalarImage alpha;
};

inline constexpr int kTileSize = 16;

/// Front-to-back alpha compositing of all Gaussians visible from
/// `world_to_camera`. Throws kEmptyMap for an empty map.
RenderedView render(const GaussianMap& map, const SE3Pose& world_to_camera,
                    const PinholeCamera& camera, const RenderOptions& options = {});

/// Loss gradient of one Gaussian in the optimizer's parameterization:
/// raw position, log-scale, right-multiplied rotation tangent, logit opacity
/// and raw color.
struct GaussianGradient {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  double logit_opacity = 0.0;
  Vec3 color = Vec3::Zero();

  GaussianGradient& operator+=(const GaussianGradient& o);
};

/// Back-propagates dL/d(rendered color) through the compositing and the EWA
/// projection. Culled Gaussians receive zero gradient. Per-tile partial sums
/// are reduced in tile order, so the result is independent of `threads`.
std::vector<GaussianGradient> render_backward(const GaussianMap& map,
                                              const SE3Pose& world_to_camera,
                                              const PinholeCamera& camera,
                                              const RgbImage& dloss_dcolor,
                                              const RenderOptions& options = {});

}  // namespace gsvo
