// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "checks.hpp"
#include "gsvo/error.hpp"
#include "gsvo/odometry.hpp"
#include "gsvo/synthetic.hpp"

namespace gsvo {
namespace {

constexpr double kDeg = M_PI / 180.0;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

GrayImage checkerboard(int w, int h, int cell) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img(x, y) = ((x / cell + y / cell) % 2) ? 0.8 : 0.2;
  }
  return img;
}

TEST(ExtractPoints, ConstantImageIsDegenerate) {
  EXPECT_EQ(code_of([] { extract_high_gradient_points(GrayImage(64, 64, 0.5), OdometryConfig{}); }),
            ErrorCode::kDegenerateImage);
  EXPECT_EQ(code_of([] { extract_high_gradient_points(GrayImage(6, 6, 0.5), OdometryConfig{}); }),
            ErrorCode::kTooSmallImage);
}

TEST(ExtractPoints, StepEdgeSelectsOnlyEdgePixels) {
  GrayImage img(64, 48, 0.2);
  for (int y = 0; y < 48; ++y) {
    for (int x = 32; x < 64; ++x) img(x, y) = 0.8;
  }
  const auto pts = extract_high_gradient_points(img, OdometryConfig{});
  ASSERT_FALSE(pts.empty());
  for (const Vec2& p : pts) {
    EXPECT_GE(p.x(), 30.5);
    EXPECT_LE(p.x(), 32.5);
    EXPECT_GE(p.y(), kPatternMargin);
    EXPECT_LE(p.y(), 48 - 1 - kPatternMargin);
  }
}

TEST(ExtractPoints, CheckerboardCoversBlocksAndRespectsTarget) {
  const GrayImage img = checkerboard(640, 480, 8);
  OdometryConfig cfg;
  cfg.target_points = 2000;
  const auto pts = extract_high_gradient_points(img, cfg);
  EXPECT_LE(pts.size(), 2000u);
  EXPECT_GE(pts.size(), 1800u);
  const int bx = (640 + kExtractionBlock - 1) / kExtractionBlock;
  const int by = (480 + kExtractionBlock - 1) / kExtractionBlock;
  std::vector<bool> hit(static_cast<size_t>(bx * by), false);
  for (const Vec2& p : pts) {
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    hit[static_cast<size_t>((y / kExtractionBlock) * bx + x / kExtractionBlock)] = true;
  }
  const double covered = static_cast<double>(std::count(hit.begin(), hit.end(), true)) / hit.size();
  EXPECT_GE(covered, 0.9);
  EXPECT_EQ(pts, extract_high_gradient_points(img, cfg));
}

TEST(AssociateDepth, InverseDepthFromAlphaWeightedDepth) {
  const GrayImage img = checkerboard(40, 40, 4);
  ScalarImage depth(40, 40, 1.998);
  ScalarImage alpha(40, 40, 0.999);
  alpha(30, 30) = 0.0;
  const std::vector<Vec2> px{Vec2(20, 10), Vec2(30, 30), Vec2(10, 20)};
  const auto pts = associate_depth(px, depth, alpha, img, 3, OdometryConfig{});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].pixel, Vec2(20, 10));
  EXPECT_EQ(pts[1].pixel, Vec2(10, 20));
  for (const auto& p : pts) {
    EXPECT_NEAR(p.inv_depth, 0.5, 1e-12);
    EXPECT_EQ(p.host_frame_id, 3);
  }
  EXPECT_EQ(pts[0].pattern_intensities[4], img(20, 10));
}

TEST(AssociateDepth, RejectsDepthDiscontinuities) {
  const GrayImage img = checkerboard(60, 40, 4);
  ScalarImage depth(60, 40, 2.0);
  const ScalarImage alpha(60, 40, 1.0);
  for (int y = 0; y < 40; ++y) {
    for (int x = 30; x < 60; ++x) depth(x, y) = 3.0;
  }
  const std::vector<Vec2> px{Vec2(10, 20), Vec2(27, 20), Vec2(33, 20), Vec2(50, 20)};
  OdometryConfig cfg;
  const auto kept = associate_depth(px, depth, alpha, img, 0, cfg);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].pixel, Vec2(10, 20));
  EXPECT_EQ(kept[1].pixel, Vec2(50, 20));
  cfg.depth_edge_jump = 0.0;
  EXPECT_EQ(associate_depth(px, depth, alpha, img, 0, cfg).size(), 4u);
}

TEST(AssociateDepth, Errors) {
  const GrayImage img(20, 20, 0.5);
  const std::vector<Vec2> px{Vec2(10, 10)};
  EXPECT_EQ(code_of([&] {
              associate_depth(px, ScalarImage(20, 20, 1.0), ScalarImage(20, 20, 0.1), img, 0,
                              OdometryConfig{});
            }),
            ErrorCode::kNoValidDepth);
  EXPECT_EQ(code_of([&] {
              associate_depth(px, ScalarImage(21, 20, 1.0), ScalarImage(20, 20, 1.0), img, 0,
                              OdometryConfig{});
            }),
            ErrorCode::kDimensionMismatch);
}

class WallFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticOptions opt;
    opt.layout = "textured-wall";
    opt.seed = 3;
    opt.width = 320;
    opt.height = 240;
    opt.frames = 2;
    opt.render_views = false;
    scene_ = new SyntheticScene(make_synthetic_scene(opt));
  }
  static void TearDownTestSuite() {
    delete scene_;
    scene_ = nullptr;
  }

  static GrayImage view(const SE3Pose& camera_to_world) {
    return render(scene_->map, camera_to_world.inverse(), scene_->camera).color.to_gray();
  }

  static Keyframe make_host(const SE3Pose& camera_to_world, const OdometryConfig& cfg) {
    Keyframe kf;
    const RenderedView v = render(scene_->map, camera_to_world.inverse(), scene_->camera);
    const GrayImage gray = v.color.to_gray();
    kf.pyramid = build_pyramid(gray, cfg.pyramid_levels);
    kf.world_pose = camera_to_world;
    kf.points = associate_depth(extract_high_gradient_points(gray, cfg), v.depth, v.alpha, gray, 0, cfg);
    return kf;
  }

  static SyntheticScene* scene_;
};

SyntheticScene* WallFixture::scene_ = nullptr;

TEST_F(WallFixture, ResidualVanishesAtIdentity) {
  OdometryConfig cfg;
  const Keyframe host = make_host(scene_->trajectory[0].pose, cfg);
  ASSERT_GT(host.points.size(), kMinTrackPoints);
  size_t evaluated = 0;
  for (const TrackPoint& p : host.points) {
    for (int level = 0; level < cfg.pyramid_levels; ++level) {
      try {
        const auto r =
            photometric_residual(p, host, host.pyramid, level, SE3Pose(), {}, scene_->camera, cfg);
        EXPECT_LT(r.residuals.cwiseAbs().maxCoeff(), 1e-12) << level;
        ++evaluated;
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kOutOfView);
        EXPECT_GT(level, 0);
      }
    }
  }
  EXPECT_GT(evaluated, host.points.size());
}

TEST_F(WallFixture, ResidualOutOfView) {
  OdometryConfig cfg;
  const Keyframe host = make_host(scene_->trajectory[0].pose, cfg);
  const SE3Pose far_left(Mat3::Identity(), Vec3(50.0, 0.0, 0.0));
  EXPECT_EQ(code_of([&] {
              photometric_residual(host.points[0], host, host.pyramid, 0, far_left, {},
                                   scene_->camera, cfg);
            }),
            ErrorCode::kOutOfView);
  const SE3Pose behind(Mat3::Identity(), Vec3(0.0, 0.0, -100.0));
  EXPECT_EQ(code_of([&] {
              photometric_residual(host.points[0], host, host.pyramid, 0, behind, {},
                                   scene_->camera, cfg);
            }),
            ErrorCode::kOutOfView);
}

TEST(PhotometricJacobian, MatchesFiniteDifferences) {
  oracle::DerivativeCheck all;
  for (uint64_t seed = 0; seed < 30; ++seed) all.merge(oracle::check_photometric_jacobian(seed));
  EXPECT_GT(all.components, 500u);
  EXPECT_EQ(all.failures, 0u) << all.first_failure;
}

TEST_F(WallFixture, TrackIdentityIsFixedPoint) {
  OdometryConfig cfg;
  const Keyframe host = make_host(scene_->trajectory[0].pose, cfg);
  const TrackResult r = track_frame(host, host.pyramid, SE3Pose(), scene_->camera, cfg);
  EXPECT_LT(r.relative_pose.translation().norm(), 1e-7);
  EXPECT_LT(so3_log(r.relative_pose.rotation()).norm(), 1e-7);
  EXPECT_NEAR(r.energy, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.inlier_fraction, 1.0);
}

TEST_F(WallFixture, TracksKnownMotion) {
  OdometryConfig cfg;
  cfg.estimate_affine = false;
  const SE3Pose host_pose = scene_->trajectory[0].pose;
  const Keyframe host = make_host(host_pose, cfg);
  const SE3Pose motion(so3_exp(Vec3(0.3, -1.0, 0.5).normalized() * 2.0 * kDeg),
                       Vec3(0.03, -0.02, 0.034));
  const SE3Pose current_pose = host_pose * motion;
  const ImagePyramid current = build_pyramid(view(current_pose), cfg.pyramid_levels);
  const TrackResult r = track_frame(host, current, SE3Pose(), scene_->camera, cfg);
  const SE3Pose truth = current_pose.inverse() * host_pose;
  const SE3Pose err = r.relative_pose * truth.inverse();
  EXPECT_LT(err.translation().norm(), 1e-3);
  EXPECT_LT(so3_log(err.rotation()).norm(), 0.05 * kDeg);
  EXPECT_TRUE(r.converged);
}

TEST_F(WallFixture, AssociationIsExactAndTrackingLeftInvariant) {
  OdometryConfig cfg;
  cfg.estimate_affine = false;
  const SE3Pose host_pose = scene_->trajectory[0].pose;
  Keyframe host = make_host(host_pose, cfg);
  for (const TrackPoint& p : host.points) {
    const Vec2 back = project(scene_->camera, backproject(scene_->camera, p.pixel, p.inv_depth));
    EXPECT_LT((back - p.pixel).norm(), 1e-9);
  }
  const SE3Pose current_pose = host_pose * SE3Pose(so3_exp(Vec3(0, 0.01, 0)), Vec3(0.02, 0, 0));
  const ImagePyramid current = build_pyramid(view(current_pose), cfg.pyramid_levels);
  const TrackResult a = track_frame(host, current, SE3Pose(), scene_->camera, cfg);
  host.world_pose = SE3Pose(so3_exp(Vec3(0.4, -0.2, 1.0)), Vec3(3, -1, 2)) * host.world_pose;
  const TrackResult b = track_frame(host, current, SE3Pose(), scene_->camera, cfg);
  EXPECT_LT((a.relative_pose.matrix() - b.relative_pose.matrix()).norm(), 1e-6);
}

TEST_F(WallFixture, BlankImageLosesTracking) {
  OdometryConfig cfg;
  const Keyframe host = make_host(scene_->trajectory[0].pose, cfg);
  const ImagePyramid blank =
      build_pyramid(GrayImage(scene_->camera.width, scene_->camera.height, 0.0), cfg.pyramid_levels);
  EXPECT_EQ(code_of([&] { track_frame(host, blank, SE3Pose(), scene_->camera, cfg); }),
            ErrorCode::kTrackingLost);
  Keyframe sparse = host;
  sparse.points.resize(10);
  EXPECT_EQ(code_of([&] { track_frame(sparse, host.pyramid, SE3Pose(), scene_->camera, cfg); }),
            ErrorCode::kInvalidArgument);
}

TEST_F(WallFixture, KeyframeRules) {
  OdometryConfig cfg;
  const Keyframe host = make_host(scene_->trajectory[0].pose, cfg);
  TrackResult still;
  still.inlier_fraction = 1.0;
  EXPECT_NEAR(mean_flow(still, host, scene_->camera), 0.0, 1e-12);
  EXPECT_FALSE(is_keyframe(still, host, 1, scene_->camera, cfg));
  EXPECT_TRUE(is_keyframe(still, host, cfg.max_keyframe_gap, scene_->camera, cfg));
  TrackResult weak = still;
  weak.inlier_fraction = 1.4 * cfg.inlier_floor;
  EXPECT_TRUE(is_keyframe(weak, host, 1, scene_->camera, cfg));
  TrackResult moved = still;
  moved.relative_pose = SE3Pose(Mat3::Identity(), Vec3(0.5, 0.0, 0.0));
  EXPECT_GT(mean_flow(moved, host, scene_->camera), cfg.keyframe_flow);
  EXPECT_TRUE(is_keyframe(moved, host, 1, scene_->camera, cfg));
}

TEST_F(WallFixture, WindowOptimization) {
  OdometryConfig cfg;
  auto make_window = [&](double baseline) {
    std::vector<Keyframe> window;
    for (int i = 0; i < 3; ++i) {
      const SE3Pose pose =
          scene_->trajectory[0].pose * SE3Pose(Mat3::Identity(), Vec3(baseline * i, 0.2 * baseline * i, 0));
      Keyframe kf = make_host(pose, cfg);
      kf.id = i;
      for (auto& p : kf.points) p.host_frame_id = i;
      window.push_back(std::move(kf));
    }
    return window;
  };

  // Coincident keyframes: every pairwise residual is exactly zero.
  const auto still = make_window(0.0);
  const auto exact = window_optimize(still, scene_->camera, cfg);
  ASSERT_EQ(exact.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_LT((exact[i].translation() - still[i].world_pose.translation()).norm(), 1e-8);
    EXPECT_LT((exact[i].rotation() - still[i].world_pose.rotation()).norm(), 1e-8);
  }

  auto window = make_window(0.05);
  const SE3Pose truth = window[1].world_pose;
  window[1].world_pose = truth * SE3Pose(Mat3::Identity(), Vec3(0.012, -0.01, 0.012));
  ASSERT_NEAR((window[1].world_pose.translation() - truth.translation()).norm(), 0.0197, 1e-4);
  const auto refined = window_optimize(window, scene_->camera, cfg);
  EXPECT_TRUE(refined[0].matrix() == window[0].world_pose.matrix());
  EXPECT_LT((refined[1].translation() - truth.translation()).norm(), 1e-3);

  EXPECT_EQ(code_of([&] {
              window_optimize(std::span<const Keyframe>(window.data(), 1), scene_->camera, cfg);
            }),
            ErrorCode::kDegenerateWindow);
}

FrameSequence repeated(const GrayImage& img, size_t n) {
  FrameSequence seq;
  for (size_t i = 0; i < n; ++i) seq.timestamps.push_back(0.1 * static_cast<double>(i));
  seq.load = [img](size_t) { return img; };
  return seq;
}

TEST_F(WallFixture, RunOdometryOnStaticSequence) {
  OdometryConfig cfg;
  const SE3Pose start = scene_->trajectory[0].pose;
  const auto depth = splat_depth_source(scene_->map, scene_->camera);
  const OdometryResult r = run_odometry(repeated(view(start), 5), depth, start, scene_->camera, cfg);
  ASSERT_FALSE(r.error.has_value());
  ASSERT_EQ(r.trajectory.size(), 5u);
  ASSERT_EQ(r.statuses.size(), 5u);
  EXPECT_EQ(r.statuses[0].state, FrameState::kKeyframe);
  EXPECT_EQ(r.keyframes.size(), 1u);
  for (const auto& e : r.trajectory.entries()) {
    EXPECT_LT((e.pose.translation() - start.translation()).norm(), 1e-6);
    EXPECT_LT((e.pose.rotation() - start.rotation()).norm(), 1e-6);
  }

  const OdometryResult single =
      run_odometry(repeated(view(start), 1), depth, start, scene_->camera, cfg);
  EXPECT_FALSE(single.error.has_value());
  EXPECT_EQ(single.trajectory.size(), 1u);
}

TEST_F(WallFixture, RunOdometryIsDeterministicAndStopsWhenLost) {
  OdometryConfig cfg;
  const SE3Pose start = scene_->trajectory[0].pose;
  const auto depth = splat_depth_source(scene_->map, scene_->camera);
  FrameSequence seq;
  seq.timestamps = {0.0, 0.1, 0.2};
  seq.load = [&](size_t i) {
    if (i == 2) return GrayImage(scene_->camera.width, scene_->camera.height, 0.0);
    return view(start * SE3Pose(Mat3::Identity(), Vec3(0.01 * static_cast<double>(i), 0, 0)));
  };
  const OdometryResult a = run_odometry(seq, depth, start, scene_->camera, cfg);
  ASSERT_TRUE(a.error.has_value());
  EXPECT_EQ(a.error->frame, 2u);
  EXPECT_EQ(a.error->code, ErrorCode::kTrackingLost);
  EXPECT_EQ(a.trajectory.size(), 2u);
  EXPECT_EQ(a.statuses.back().state, FrameState::kLost);

  cfg.threads = 3;
  const OdometryResult b = run_odometry(seq, depth, start, scene_->camera, cfg);
  ASSERT_EQ(b.trajectory.size(), a.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_TRUE(a.trajectory[i].pose.matrix() == b.trajectory[i].pose.matrix());
  }
}

}  // namespace
}  // namespace gsvo
