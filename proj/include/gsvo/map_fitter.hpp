// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gsvo/gaussian.hpp"
#include "gsvo/image.hpp"
#include "gsvo/render.hpp"

namespace gsvo {

struct TrainingView {
  RgbImage image;
  SE3Pose world_to_camera;
  PinholeCamera camera;
};

struct PointSample {
  Vec3 position = Vec3::Zero();
  std::optional<Vec3> color;
};

/// Adam step sizes per attribute group, in the optimized parameterization.
struct LearningRates {
  double position = 1e-3;
  /// Position step decays log-linearly to position * position_final_ratio.
  double position_final_ratio = 0.01;
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double logit_opacity = 5e-2;
  double color = 2.5e-2;
};

struct FitConfig {
  int iterations = 2000;
  LearningRates lr;
  double lambda_ssim = 0.2;
  int ssim_window = 11;
  uint64_t rng_seed = 0;
  /// Optimize l_c divided by the pixel count instead of the raw pixel sum.
  bool normalize_color_loss = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-15;
  RenderOptions render;

  void validate() const;
};

/// One Gaussian per point: opacity 0.8, point color (or uniform random),
/// log-uniform per-axis scale in [0.5, 2] x mean nearest-neighbour spacing,
/// uniformly random orientation. Throws kEmptyCloud.
GaussianMap init_from_pointcloud(std::span<const PointSample> points, uint64_t rng_seed);

/// Mean distance from each point to its nearest neighbour (0 for < 2 points).
double mean_nearest_neighbor_distance(std::span<const Vec3> points);

struct LossBreakdown {
  double color_raw = 0.0;         // sum over pixels of |c - c_gt|^2
  double color_normalized = 0.0;  // color_raw / pixel count
  double ssim_loss = 0.0;         // 1 - SSIM
  double total = 0.0;             // lambda * ssim_loss + (1 - lambda) * l_c
};

/// `normalize` selects which l_c enters `total`.
LossBreakdown compute_loss(const RgbImage& rendered, const RgbImage& target, double lambda_ssim,
                           int ssim_window = 11, bool normalize = true);

struct LossGradient {
  LossBreakdown loss;
  std::vector<GaussianGradient> gradients;
};

/// Analytic gradient of the fitting loss for one view. Throws kZeroCoverage
/// when nothing in the map is visible.
LossGradient loss_gradient(const GaussianMap& map, const TrainingView& view,
                           const FitConfig& config);

/// Loss only (no gradient), used by finite-difference checks.
LossBreakdown evaluate_loss(const GaussianMap& map, const TrainingView& view,
                            const FitConfig& config);

/// Moves a Gaussian along a tangent vector of the optimized parameterization:
/// position += dp, scale *= exp(dls), R = R Exp(dr), logit(opacity) += do, color += dc.
Gaussian3D retract(const Gaussian3D& g, const GaussianGradient& delta);

struct FitRecord {
  int iteration = 0;
  int view_index = 0;
  LossBreakdown loss;
};

struct FitResult {
  GaussianMap map;
  std::vector<FitRecord> history;
};

using FitProgress = std::function<void(const FitRecord&)>;

/// Round-robin Adam optimization of every attribute. Throws kDiverged on a
/// non-finite loss; propagates kZeroCoverage.
FitResult fit(GaussianMap map, std::span<const TrainingView> views, const FitConfig& config,
              const FitProgress& progress = {});

}  // namespace gsvo
