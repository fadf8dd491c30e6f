// SPDX-License-Identifier: Apache-2.0
// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "checks.hpp"
#include "gsvo/cli.hpp"
#include "gsvo/map_fitter.hpp"
#include "gsvo/metrics.hpp"
#include "gsvo/odometry.hpp"
#include "gsvo/render.hpp"
#include "gsvo/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace gsvo;

namespace {

constexpr double kDeg = M_PI / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

double psnr(const RgbImage& a, const RgbImage& b) {
  double se = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  se /= static_cast<double>(a.data().size());
  return 10.0 * std::log10(1.0 / se);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome rasterizer_oracle() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> count(1, 10);
  const PinholeCamera cam{20, 20, 7.5, 7.5, 16, 16};
  RenderOptions opt;
  opt.early_stop_transmittance = 0.0;
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) {
    GaussianMap map;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) map.gaussians.push_back(oracle::random_gaussian(rng, 1.0, 4.0, 0.6));
    map.background_color = Vec3(0.1, 0.2, 0.3);
    const RenderedView a = render(map, SE3Pose(), cam, opt);
    const RenderedView b = oracle::naive_render(map, SE3Pose(), cam);
    for (size_t i = 0; i < a.color.data().size(); ++i) {
      worst = std::max(worst, std::abs(a.color.data()[i] - b.color.data()[i]));
    }
    for (size_t i = 0; i < a.depth.data.size(); ++i) {
      worst = std::max(worst, std::abs(a.depth.data[i] - b.depth.data[i]));
      worst = std::max(worst, std::abs(a.alpha.data[i] - b.alpha.data[i]));
    }
  }
  return {worst <= 1e-6, fmt::format("max deviation {:.3g} over 200 scenes", worst)};
}

Outcome single_gaussian_depth() {
  GaussianMap map;
  Gaussian3D g;
  g.position = Vec3(0, 0, 2);
  g.scale = Vec3(0.1, 0.1, 0.1);
  g.opacity = 0.999;
  map.gaussians.push_back(g);
  const PinholeCamera cam{40, 40, 15, 15, 31, 31};
  const RenderedView v = render(map, SE3Pose(), cam);
  const double d = v.depth(15, 15) / v.alpha(15, 15);
  return {std::abs(d - 2.0) <= 1e-3, fmt::format("d/alpha = {:.9f} (alpha {:.6f})", d, v.alpha(15, 15))};
}

Outcome fit_gradients() {
  oracle::DerivativeCheck all;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    for (double lambda : {0.0, 0.2}) all.merge(oracle::check_fit_gradient(seed, lambda));
  }
  return {all.failures == 0 && all.components > 0,
          fmt::format("{}/{} components outside tolerance, worst {:.3f} of tolerance{}",
                      all.failures, all.components, all.worst,
                      all.first_failure.empty() ? "" : "; first: " + all.first_failure)};
}

Outcome tracking_jacobians() {
  oracle::DerivativeCheck all;
  int configs = 0;
  for (uint64_t seed = 0; configs < 100 && seed < 1000; ++seed) {
    const auto c = oracle::check_photometric_jacobian(seed);
    if (c.components == 0) continue;
    all.merge(c);
    ++configs;
  }
  return {configs == 100 && all.failures == 0,
          fmt::format("{} configurations, {}/{} components outside tolerance, worst {:.3f}",
                      configs, all.failures, all.components, all.worst)};
}

FrameSequence scene_frames(const SyntheticScene& scene) {
  FrameSequence frames;
  for (const auto& e : scene.trajectory.entries()) frames.timestamps.push_back(e.timestamp);
  frames.load = [&scene](size_t i) { return scene.views[i].color.to_gray(); };
  return frames;
}

SyntheticScene two_planes() {
  SyntheticOptions opt;
  opt.layout = "two-planes";
  opt.seed = 7;
  opt.frames = 50;
  return make_synthetic_scene(opt);
}

Outcome closed_loop_tracking() {
  const SyntheticScene scene = two_planes();
  const OdometryResult r = run_odometry(scene_frames(scene), splat_depth_source(scene.map, scene.camera),
                                        scene.trajectory[0].pose, scene.camera, OdometryConfig{});
  if (r.error) return {false, "odometry failed: " + r.error->message};
  const double path = scene.trajectory.path_length();
  const double ate = ate_rmse(r.trajectory, scene.trajectory, Alignment::kNone);
  const RteRre rel = rte_rre_rmse(r.trajectory, scene.trajectory, 1.0);
  const bool pass = ate < 0.01 * path && rel.rte < 0.005 && rel.rre_deg < 0.1;
  return {pass, fmt::format("path {:.3f} m, ATE {:.5f} m ({:.3f}% of path), RTE {:.5f} m, RRE {:.4f} deg",
                            path, ate, 100.0 * ate / path, rel.rte, rel.rre_deg)};
}

Outcome ablation_direction() {
  const SyntheticScene scene = two_planes();
  OdometryConfig cfg;
  cfg.record_keyframe_depth = true;
  struct Arm {
    double void_rmse = 0.0;
    size_t void_pixels = 0;
    size_t valid_pixels = 0;
    double ate = 0.0;
    std::string error;
  };
  auto run_arm = [&](const DepthSource& source) {
    Arm arm;
    const OdometryResult r =
        run_odometry(scene_frames(scene), source, scene.trajectory[0].pose, scene.camera, cfg);
    if (r.error) arm.error = r.error->message;
    double se = 0.0;
    for (const KeyframeRecord& kf : r.keyframes) {
      const SE3Pose w2c = kf.render_pose.inverse();
      const ScalarImage truth = analytic_depth(scene.surfaces, w2c, scene.camera);
      const auto mask = region_mask(scene.surfaces, scene.cloud_voids, w2c, scene.camera);
      for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++arm.void_pixels;
        if (kf.alpha.data[i] < cfg.alpha_valid) continue;
        const double d = kf.depth.data[i] / kf.alpha.data[i];
        se += (d - truth.data[i]) * (d - truth.data[i]);
        ++arm.valid_pixels;
      }
    }
    arm.void_rmse = arm.valid_pixels ? std::sqrt(se / static_cast<double>(arm.valid_pixels)) : 0.0;
    arm.ate = ate_rmse(r.trajectory, scene.trajectory, Alignment::kNone);
    return arm;
  };
  const Arm splat = run_arm(splat_depth_source(scene.map, scene.camera));
  const Arm interp = run_arm(nn_depth_source(scene.cloud, scene.camera));
  const bool pass = splat.error.empty() && splat.valid_pixels > 0 && interp.valid_pixels > 0 &&
                    splat.void_rmse < interp.void_rmse &&
                    (!interp.error.empty() || splat.ate <= interp.ate);
  auto coverage = [](const Arm& a) {
    return a.void_pixels ? 100.0 * static_cast<double>(a.valid_pixels) / static_cast<double>(a.void_pixels) : 0.0;
  };
  return {pass, fmt::format("void depth RMSE splat {:.4f} m ({:.0f}% valid) vs interp {:.4f} m ({:.0f}% "
                            "valid); ATE splat {:.5f} m vs interp {:.5f} m{}{}",
                            splat.void_rmse, coverage(splat), interp.void_rmse, coverage(interp),
                            splat.ate, interp.ate,
                            splat.error.empty() ? "" : "; splat: " + splat.error,
                            interp.error.empty() ? "" : "; interp: " + interp.error)};
}

Outcome metric_fixtures() {
  Trajectory ref;
  Trajectory offset;
  Trajectory rotated;
  SE3Pose est_pose;
  for (int i = 0; i < 20; ++i) {
    const SE3Pose p(so3_exp(Vec3(0.02 * i, -0.01 * i, 0.03 * i)), Vec3(0.1 * i, 0.05 * i * i, 0.0));
    ref.push_back(i, p);
    offset.push_back(i, SE3Pose(p.rotation(), p.translation() + Vec3(0.3, 0.4, 0.0)));
    if (i == 0) {
      est_pose = p;
    } else {
      est_pose = est_pose * (ref[static_cast<size_t>(i - 1)].pose.inverse() * p) *
                 SE3Pose(so3_exp(Vec3(0, 0, kDeg)), Vec3::Zero());
    }
    rotated.push_back(i, est_pose);
  }
  const double ate = ate_rmse(offset, ref, Alignment::kNone);
  const RteRre rel = rte_rre_rmse(rotated, ref, 1.0);
  const bool pass = std::abs(ate - 0.5) <= 1e-9 && std::abs(rel.rre_deg - 1.0) <= 1e-9;
  return {pass, fmt::format("ATE {:.12f} m, RRE {:.12f} deg", ate, rel.rre_deg)};
}

Outcome convergent_fit() {
  SyntheticOptions opt;
  opt.layout = "two-planes";
  opt.seed = 7;
  opt.width = 160;
  opt.height = 120;
  opt.frames = 50;
  opt.target_gaussians = 200;
  opt.footprint = 0.6;
  const SyntheticScene scene = make_synthetic_scene(opt);
  const size_t held_out = 25;
  std::vector<TrainingView> views;
  for (size_t i = 0; i < scene.views.size(); i += 2) {
    if (i != held_out) views.push_back({scene.views[i].color, scene.trajectory[i].pose.inverse(), scene.camera});
  }
  GaussianMap init = scene.map;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& g : init.gaussians) {
    g.position += Vec3(jitter(rng), jitter(rng), jitter(rng));
    g.color = Vec3(unit(rng), unit(rng), unit(rng));
  }
  FitConfig cfg;
  cfg.iterations = 2000;
  const FitResult r = fit(init, views, cfg);
  double before = 0.0;
  double after = 0.0;
  for (const auto& v : views) {
    before += evaluate_loss(init, v, cfg).total;
    after += evaluate_loss(r.map, v, cfg).total;
  }
  const double reduction = 1.0 - after / before;
  const double p = psnr(render(r.map, scene.trajectory[held_out].pose.inverse(), scene.camera).color,
                        scene.views[held_out].color);
  return {reduction >= 0.9 && p > 30.0,
          fmt::format("{} Gaussians, loss {:.5f} -> {:.5f} ({:.2f}% reduction), held-out PSNR {:.2f} dB",
                      scene.map.size(), before, after, 100.0 * reduction, p)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "gsvo_acceptance_determinism";
  fs::remove_all(root);
  const std::string data = (root / "data").string();
  if (run_cli({"synth", "--layout", "two-planes", "--seed", "7", "--out", data, "--frames", "12",
               "--width", "160", "--height", "120"}) != kExitOk) {
    return {false, "synth failed"};
  }
  std::vector<std::string> mismatches;
  const std::vector<std::pair<std::string, std::string>> runs = {{"a", "1"}, {"b", "1"}, {"c", "4"}};
  for (const auto& [tag, threads] : runs) {
    const fs::path dir = root / tag;
    fs::create_directories(dir);
    if (run_cli({"fit-map", "--dataset", data, "--out", (dir / "map.ply").string(), "--iters", "40",
                 "--seed", "3", "--threads", threads}) != kExitOk ||
        run_cli({"track", "--dataset", data, "--map", data + "/map.ply", "--out",
                 (dir / "traj.txt").string(), "--threads", threads}) != kExitOk) {
      return {false, "run " + tag + " failed"};
    }
  }
  size_t compared = 0;
  for (const char* file : {"map.ply", "map_loss.csv", "traj.txt", "traj_status.csv"}) {
    const std::string first = slurp(root / "a" / file);
    for (const char* other : {"b", "c"}) {
      ++compared;
      if (first.empty() || slurp(root / other / file) != first) {
        mismatches.push_back(std::string(other) + "/" + file);
      }
    }
  }
  fs::remove_all(root);
  return {mismatches.empty(),
          fmt::format("{} file pairs compared across runs with 1 and 4 threads{}", compared,
                      mismatches.empty() ? "" : fmt::format(", differing: {}", fmt::join(mismatches, " ")))};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "rasterizer matches naive evaluator", 10, rasterizer_oracle},
      {2, "single-Gaussian depth fidelity", 1, single_gaussian_depth},
      {3, "map-fitting gradients", 120, fit_gradients},
      {4, "photometric jacobians", 10, tracking_jacobians},
      {5, "closed-loop tracking on two-planes", 300, closed_loop_tracking},
      {6, "ablation direction", 600, ablation_direction},
      {7, "metric fixtures", 1, metric_fixtures},
      {8, "convergent map fit", 900, convergent_fit},
      {9, "determinism across runs and thread counts", 300, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    fmt::print("{} criterion {}: {}: {} [{:.2f} s, limit {:.0f} s{}]\n", pass ? "PASS" : "FAIL", c.id,
               c.name, o.detail, secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
