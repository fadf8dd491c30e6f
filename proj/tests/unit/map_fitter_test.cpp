// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "checks.hpp"
#include "gsvo/error.hpp"
#include "gsvo/map_fitter.hpp"
#include "oracles.hpp"

namespace gsvo {
namespace {

std::vector<PointSample> random_cloud(std::mt19937_64& rng, size_t n, bool colored) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<PointSample> pts;
  for (size_t i = 0; i < n; ++i) {
    PointSample p;
    p.position = Vec3(u(rng), u(rng), 3.0 + u(rng));
    if (colored) p.color = Vec3(0.5 + 0.5 * u(rng), 0.5, 0.25);
    pts.push_back(p);
  }
  return pts;
}

TEST(InitFromPointcloud, OneGaussianPerPointAtOpacity08) {
  std::mt19937_64 rng(1);
  const auto pts = random_cloud(rng, 1000, false);
  const GaussianMap map = init_from_pointcloud(pts, 5);
  ASSERT_EQ(map.size(), 1000u);
  std::vector<Vec3> pos;
  for (const auto& p : pts) pos.push_back(p.position);
  const double r = mean_nearest_neighbor_distance(pos);
  for (size_t i = 0; i < map.size(); ++i) {
    const Gaussian3D& g = map.gaussians[i];
    EXPECT_EQ(g.opacity, 0.8);
    EXPECT_EQ(g.position, pts[i].position);
    EXPECT_NEAR(g.rotation.norm(), 1.0, 1e-12);
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(g.scale[a], 0.5 * r * (1 - 1e-12));
      EXPECT_LE(g.scale[a], 2.0 * r * (1 + 1e-12));
      EXPECT_GE(g.color[a], 0.0);
      EXPECT_LE(g.color[a], 1.0);
    }
    EXPECT_NO_THROW(g.validate());
  }
}

TEST(InitFromPointcloud, UsesPointColorAndIsSeeded) {
  std::mt19937_64 rng(2);
  const auto pts = random_cloud(rng, 50, true);
  const GaussianMap a = init_from_pointcloud(pts, 9);
  for (size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(a.gaussians[i].color, *pts[i].color);
  const GaussianMap b = init_from_pointcloud(pts, 9);
  const GaussianMap c = init_from_pointcloud(pts, 10);
  bool differs = false;
  for (size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(a.gaussians[i].scale, b.gaussians[i].scale);
    EXPECT_EQ(a.gaussians[i].rotation.coeffs(), b.gaussians[i].rotation.coeffs());
    differs |= a.gaussians[i].scale != c.gaussians[i].scale;
  }
  EXPECT_TRUE(differs);
}

TEST(InitFromPointcloud, EmptyCloud) {
  try {
    init_from_pointcloud({}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyCloud);
  }
}

TEST(MeanNearestNeighbor, Grid) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) pts.push_back(Vec3(0.1 * i, 0.1 * j, 1.0));
  }
  EXPECT_NEAR(mean_nearest_neighbor_distance(pts), 0.1, 1e-12);
  EXPECT_EQ(mean_nearest_neighbor_distance(std::vector<Vec3>{Vec3::Zero()}), 0.0);
}

TEST(ComputeLoss, Examples) {
  std::mt19937_64 rng(3);
  const RgbImage a = oracle::random_rgb(rng, 12, 12);
  EXPECT_NEAR(compute_loss(a, a, 0.2).total, 0.0, 1e-12);

  const RgbImage px(1, 1, Vec3(0.5, 0.5, 0.5));
  const RgbImage zero(1, 1, Vec3::Zero());
  const LossBreakdown l = compute_loss(px, zero, 0.0, 11, false);
  EXPECT_DOUBLE_EQ(l.color_raw, 0.75);
  EXPECT_DOUBLE_EQ(l.total, 0.75);

  // lambda = 1 ignores the color term: scaling the color error leaves it unchanged.
  const RgbImage b = oracle::random_rgb(rng, 12, 12);
  RgbImage shifted = b;
  for (double& v : shifted.data()) v = 0.5 * v;
  const LossBreakdown l1 = compute_loss(a, b, 1.0);
  EXPECT_NEAR(l1.total, l1.ssim_loss, 1e-15);
  const LossBreakdown l2 = compute_loss(a, shifted, 1.0);
  EXPECT_NEAR(l2.total, l2.ssim_loss, 1e-15);
  EXPECT_NE(l1.color_raw, l2.color_raw);

  const LossBreakdown mixed = compute_loss(a, b, 0.3);
  EXPECT_NEAR(mixed.color_normalized, mixed.color_raw / 144.0, 1e-12);
  EXPECT_NEAR(mixed.total, 0.3 * mixed.ssim_loss + 0.7 * mixed.color_normalized, 1e-12);
}

TEST(ComputeLoss, DimensionMismatch) {
  EXPECT_THROW(compute_loss(RgbImage(4, 4), RgbImage(4, 5), 0.2), Error);
}

class FitFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 4; ++i) map_.gaussians.push_back(oracle::random_gaussian(rng, 1.5, 3.0, 0.3));
    map_.background_color = Vec3(0.2, 0.2, 0.2);
    RenderOptions ro;
    view_ = {render(map_, SE3Pose(), cam_, ro).color, SE3Pose(), cam_};
  }
  PinholeCamera cam_{30, 30, 11.5, 11.5, 24, 24};
  GaussianMap map_;
  TrainingView view_;
};

TEST_F(FitFixture, ExactRenderHasZeroGradient) {
  FitConfig cfg;
  const LossGradient lg = loss_gradient(map_, view_, cfg);
  EXPECT_NEAR(lg.loss.total, 0.0, 1e-12);
  for (const auto& g : lg.gradients) {
    EXPECT_LT(g.position.norm(), 1e-8);
    EXPECT_LT(g.log_scale.norm(), 1e-8);
    EXPECT_LT(g.rotation.norm(), 1e-8);
    EXPECT_LT(std::abs(g.logit_opacity), 1e-8);
    EXPECT_LT(g.color.norm(), 1e-8);
  }
}

TEST_F(FitFixture, FixedPointStaysPut) {
  FitConfig cfg;
  cfg.iterations = 20;
  const std::vector<TrainingView> views{view_};
  const FitResult r = fit(map_, views, cfg);
  for (const auto& rec : r.history) EXPECT_NEAR(rec.loss.total, 0.0, 1e-12);
  for (size_t i = 0; i < map_.size(); ++i) {
    EXPECT_LT((r.map.gaussians[i].position - map_.gaussians[i].position).norm(), 1e-6);
    EXPECT_LT((r.map.gaussians[i].color - map_.gaussians[i].color).norm(), 1e-6);
  }
}

TEST(LossGradient, MatchesFiniteDifferences) {
  for (uint64_t seed = 100; seed < 105; ++seed) {
    for (double lambda : {0.0, 0.2}) {
      const auto c = oracle::check_fit_gradient(seed, lambda);
      EXPECT_GT(c.components, 0u);
      EXPECT_EQ(c.failures, 0u) << c.first_failure;
    }
  }
}

TEST(LossGradient, SoleContributorColorGradient) {
  const PinholeCamera cam{40, 40, 15.5, 15.5, 32, 32};
  GaussianMap map;
  Gaussian3D g;
  g.position = Vec3(0.1, 0.0, 2.0);
  g.scale = Vec3(0.2, 0.15, 0.1);
  g.opacity = 0.7;
  g.color = Vec3(0.6, 0.3, 0.9);
  map.gaussians.push_back(g);
  map.background_color = Vec3(0.1, 0.5, 0.2);
  std::mt19937_64 rng(5);
  const TrainingView view{oracle::random_rgb(rng, cam.width, cam.height), SE3Pose(), cam};
  FitConfig cfg;
  cfg.lambda_ssim = 0.0;
  cfg.normalize_color_loss = false;
  const LossGradient lg = loss_gradient(map, view, cfg);

  const RenderedView v = render(map, SE3Pose(), cam, cfg.render);
  Vec3 expected = Vec3::Zero();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      expected += 2.0 * v.alpha(x, y) * (v.color.at(x, y) - view.image.at(x, y));
    }
  }
  EXPECT_LT((lg.gradients[0].color - expected).norm(), 1e-9 * expected.norm());
}

TEST(LossGradient, ZeroCoverage) {
  GaussianMap map;
  Gaussian3D g;
  g.position = Vec3(0, 0, -3);
  map.gaussians.push_back(g);
  const PinholeCamera cam{30, 30, 11.5, 11.5, 24, 24};
  const TrainingView view{RgbImage(24, 24), SE3Pose(), cam};
  try {
    loss_gradient(map, view, FitConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroCoverage);
  }
}

TEST(Fit, ColorOnlyConvergesAndDecreases) {
  const PinholeCamera cam{40, 40, 15.5, 15.5, 32, 32};
  GaussianMap truth;
  Gaussian3D g;
  g.position = Vec3(0.0, 0.0, 2.0);
  g.scale = Vec3(0.3, 0.3, 0.1);
  g.opacity = 0.9;
  g.color = Vec3(0.8, 0.2, 0.5);
  truth.gaussians.push_back(g);
  const TrainingView view{render(truth, SE3Pose(), cam).color, SE3Pose(), cam};
  GaussianMap start = truth;
  start.gaussians[0].color = Vec3(0.1, 0.9, 0.1);

  FitConfig cfg;
  cfg.iterations = 200;
  cfg.lambda_ssim = 0.0;
  cfg.lr.position = 0.0;
  cfg.lr.log_scale = 0.0;
  cfg.lr.rotation = 0.0;
  cfg.lr.logit_opacity = 0.0;
  const std::vector<TrainingView> views{view};
  const FitResult r = fit(start, views, cfg);
  ASSERT_EQ(r.history.size(), 200u);
  const double first = r.history.front().loss.total;
  const double last = evaluate_loss(r.map, view, cfg).total;
  EXPECT_LT(last, 0.01 * first);
  for (size_t i = 0; i + 50 < r.history.size(); ++i) {
    EXPECT_LE(r.history[i + 50].loss.total, r.history[i].loss.total);
  }
  EXPECT_EQ(r.map.gaussians[0].position, truth.gaussians[0].position);
}

TEST(Fit, KeepsInvariantsAndIsReproducible) {
  std::mt19937_64 rng(6);
  const PinholeCamera cam{30, 30, 11.5, 11.5, 24, 24};
  GaussianMap map;
  for (int i = 0; i < 6; ++i) map.gaussians.push_back(oracle::random_gaussian(rng, 1.5, 3.0, 0.3));
  const std::vector<TrainingView> views{
      {oracle::random_rgb(rng, 24, 24), SE3Pose(), cam},
      {oracle::random_rgb(rng, 24, 24), SE3Pose(so3_exp(Vec3(0, 0.05, 0)), Vec3(0.05, 0, 0)), cam}};
  FitConfig cfg;
  cfg.iterations = 60;
  cfg.lr.position = 0.01;
  cfg.lr.logit_opacity = 0.3;
  const FitResult a = fit(map, views, cfg, [&](const FitRecord& rec) {
    EXPECT_EQ(rec.view_index, rec.iteration % 2);
  });
  for (const auto& g : a.map.gaussians) EXPECT_NO_THROW(g.validate());
  const FitResult b = fit(map, views, cfg);
  for (size_t i = 0; i < map.size(); ++i) {
    EXPECT_EQ(a.map.gaussians[i].position, b.map.gaussians[i].position);
    EXPECT_EQ(a.map.gaussians[i].scale, b.map.gaussians[i].scale);
    EXPECT_EQ(a.map.gaussians[i].opacity, b.map.gaussians[i].opacity);
  }
}

TEST(Fit, Validation) {
  FitConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = FitConfig{};
  cfg.lambda_ssim = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = FitConfig{};
  cfg.ssim_window = 4;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(fit(GaussianMap{}, {}, FitConfig{}), Error);
}

TEST(Retract, MovesAlongParameterization) {
  Gaussian3D g;
  g.opacity = 0.5;
  GaussianGradient d;
  d.position = Vec3(0.1, 0, 0);
  d.log_scale = Vec3(std::log(2.0), 0, 0);
  d.logit_opacity = std::log(3.0);
  d.color = Vec3(0.1, 0.1, 0.1);
  d.rotation = Vec3(0, 0, 0.2);
  const Gaussian3D r = retract(g, d);
  EXPECT_TRUE(r.position.isApprox(Vec3(0.1, 0, 0)));
  EXPECT_NEAR(r.scale.x(), 2.0 * g.scale.x(), 1e-15);
  EXPECT_NEAR(r.opacity, 0.75, 1e-12);
  EXPECT_TRUE(r.color.isApprox(Vec3(0.6, 0.6, 0.6)));
  EXPECT_LT((r.rotation.toRotationMatrix() - so3_exp(Vec3(0, 0, 0.2))).norm(), 1e-12);
}

}  // namespace
}  // namespace gsvo
