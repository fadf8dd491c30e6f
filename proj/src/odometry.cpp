// SPDX-License-Identifier: Apache-2.0
#include "gsvo/odometry.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gsvo/depth_nn.hpp"
#include "gsvo/parallel.hpp"

namespace gsvo {

void OdometryConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "odometry config: " + what);
  };
  if (!(gradient_threshold > 0.0)) fail("gradient_threshold must be positive");
  if (target_points < static_cast<int>(kMinTrackPoints)) fail("target_points must be >= 50");
  if (pyramid_levels < 1) fail("pyramid_levels must be >= 1");
  if (!(huber_delta > 0.0)) fail("huber_delta must be positive");
  if (!(gradient_weight_c > 0.0)) fail("gradient_weight_c must be positive");
  if (!(alpha_valid > 0.0 && alpha_valid <= 1.0)) fail("alpha_valid must be in (0,1]");
  if (!(depth_edge_jump >= 0.0)) fail("depth_edge_jump must be non-negative");
  if (!(keyframe_flow > 0.0)) fail("keyframe_flow must be positive");
  if (!(inlier_floor > 0.0 && inlier_floor < 1.0)) fail("inlier_floor must be in (0,1)");
  if (max_keyframe_gap < 1) fail("max_keyframe_gap must be positive");
  if (window_size < 2) fail("window_size must be >= 2");
  if (max_iterations < 1) fail("max_iterations must be positive");
  if (window_iterations < 0) fail("window_iterations must be >= 0");
  if (!(convergence_step > 0.0)) fail("convergence_step must be positive");
  if (!(affine_prior >= 0.0)) fail("affine_prior must be non-negative");
}

std::string to_string(FrameState s) {
  switch (s) {
    case FrameState::kTracked: return "tracked";
    case FrameState::kKeyframe: return "keyframe";
    case FrameState::kLost: return "lost";
  }
  return "tracked";
}

// ---------------------------------------------------------------------------
// Point selection and depth association

std::vector<Vec2> extract_high_gradient_points(const GrayImage& image,
                                               const OdometryConfig& config) {
  const int w = image.width();
  const int h = image.height();
  if (w <= 2 * kPatternMargin + 1 || h <= 2 * kPatternMargin + 1) {
    throw Error(ErrorCode::kTooSmallImage,
                fmt::format("{}x{} image is inside the pattern margin", w, h));
  }
  const int nbx = (w + kExtractionBlock - 1) / kExtractionBlock;
  const int nby = (h + kExtractionBlock - 1) / kExtractionBlock;

  struct Candidate {
    double strength;
    int index;
  };
  std::vector<std::vector<Candidate>> blocks(static_cast<size_t>(nbx) * nby);
  std::vector<double> mags;
  for (int by = 0; by < nby; ++by) {
    for (int bx = 0; bx < nbx; ++bx) {
      const int x0 = std::max(bx * kExtractionBlock, kPatternMargin);
      const int x1 = std::min((bx + 1) * kExtractionBlock, w - kPatternMargin);
      const int y0 = std::max(by * kExtractionBlock, kPatternMargin);
      const int y1 = std::min((by + 1) * kExtractionBlock, h - kPatternMargin);
      if (x0 >= x1 || y0 >= y1) continue;
      mags.clear();
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) mags.push_back(central_gradient(image, x, y).norm());
      }
      std::vector<double> sorted = mags;
      auto mid = sorted.begin() + static_cast<long>(sorted.size() / 2);
      std::nth_element(sorted.begin(), mid, sorted.end());
      const double threshold = *mid + config.gradient_threshold;
      auto& cands = blocks[static_cast<size_t>(by) * nbx + bx];
      size_t k = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x, ++k) {
          if (mags[k] > threshold) cands.push_back({mags[k], y * w + x});
        }
      }
      std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.strength > b.strength;
      });
    }
  }

  std::vector<Vec2> out;
  const size_t target = static_cast<size_t>(config.target_points);
  for (size_t rank = 0; out.size() < target; ++rank) {
    bool any = false;
    for (const auto& cands : blocks) {
      if (rank >= cands.size()) continue;
      any = true;
      out.emplace_back(cands[rank].index % w, cands[rank].index / w);
      if (out.size() == target) break;
    }
    if (!any) break;
  }
  if (out.size() < kMinTrackPoints) {
    throw Error(ErrorCode::kDegenerateImage,
                fmt::format("only {} high-gradient points found", out.size()));
  }
  return out;
}

std::vector<TrackPoint> associate_depth(std::span<const Vec2> pixels, const ScalarImage& depth_map,
                                        const ScalarImage& alpha_map, const GrayImage& image,
                                        int host_frame_id, const OdometryConfig& config) {
  if (depth_map.width != image.width() || depth_map.height != image.height() ||
      alpha_map.width != image.width() || alpha_map.height != image.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "depth/alpha maps do not match the image");
  }
  // Normalized depth, 0 where the map does not cover the pixel.
  auto surface_depth = [&](int x, int y) {
    x = std::clamp(x, 0, image.width() - 1);
    y = std::clamp(y, 0, image.height() - 1);
    const double a = alpha_map(x, y);
    return a >= config.alpha_valid ? depth_map(x, y) / a : 0.0;
  };
  auto near_depth_edge = [&](int x, int y) {
    if (!(config.depth_edge_jump > 0.0)) return false;
    const int r = kDepthEdgeRadius;
    for (int v = y - r; v <= y + r; ++v) {
      for (int u = x - r; u <= x + r; ++u) {
        const double d = surface_depth(u, v);
        for (const double e : {surface_depth(u + 1, v), surface_depth(u, v + 1)}) {
          if (!(d > 0.0 && e > 0.0)) return true;
          if (std::abs(d - e) > config.depth_edge_jump * std::min(d, e)) return true;
        }
      }
    }
    return false;
  };

  std::vector<TrackPoint> out;
  out.reserve(pixels.size());
  for (const Vec2& px : pixels) {
    const int x = static_cast<int>(std::lround(px.x()));
    const int y = static_cast<int>(std::lround(px.y()));
    if (x < 0 || y < 0 || x >= image.width() || y >= image.height()) continue;
    const double alpha = alpha_map(x, y);
    const double depth = depth_map(x, y);
    if (!(alpha >= config.alpha_valid) || !(depth > 0.0)) continue;
    const double inv_depth = alpha / depth;
    if (!std::isfinite(inv_depth) || !(inv_depth > 0.0)) continue;
    if (near_depth_edge(x, y)) continue;
    TrackPoint p;
    p.pixel = px;
    p.inv_depth = inv_depth;
    p.host_frame_id = host_frame_id;
    for (int j = 0; j < kPatternSize; ++j) {
      const int sx = std::clamp(x + kResidualPattern[j][0], 0, image.width() - 1);
      const int sy = std::clamp(y + kResidualPattern[j][1], 0, image.height() - 1);
      p.pattern_intensities[j] = image(sx, sy);
    }
    out.push_back(p);
  }
  if (out.empty()) throw Error(ErrorCode::kNoValidDepth, "no selected pixel has valid depth");
  return out;
}

// ---------------------------------------------------------------------------
// Residual evaluation

namespace {

bool inside_interp(const GrayImage& img, const Vec2& q) {
  return q.x() >= 0.0 && q.y() >= 0.0 && q.x() < img.width() - 1 && q.y() < img.height() - 1;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

struct HostPattern {
  std::array<Vec3, kPatternSize> points;  // host camera frame
  std::array<double, kPatternSize> values;
  double gradient_weight = 1.0;
};

bool sample_host(const TrackPoint& pt, const GrayImage& host, const PinholeCamera& cam, int level,
                 double c, HostPattern& out) {
  const double s = std::ldexp(1.0, -level);
  const Vec2 ul = (pt.pixel.array() + 0.5) * s - 0.5;
  for (int j = 0; j < kPatternSize; ++j) {
    const Vec2 q = ul + Vec2(kResidualPattern[j][0], kResidualPattern[j][1]);
    if (!inside_interp(host, q)) return false;
    const auto smp = bilinear_sample_with_gradient(host, q.x(), q.y());
    out.values[j] = smp.value;
    if (kResidualPattern[j][0] == 0 && kResidualPattern[j][1] == 0) {
      out.gradient_weight = c * c / (c * c + smp.gradient.squaredNorm());
    }
    out.points[j] =
        Vec3((q.x() - cam.cx) / cam.fx, (q.y() - cam.cy) / cam.fy, 1.0) / pt.inv_depth;
  }
  return true;
}

struct PatternEval {
  std::array<double, kPatternSize> r{};
  std::array<double, kPatternSize> w{};
  double energy = 0.0;
  int inliers = 0;
  Eigen::Matrix<double, kPatternSize, 6> jac;
  Eigen::Matrix<double, kPatternSize, 2> jac_ab;
};

bool eval_pattern(const HostPattern& hp, const GrayImage& cur, const PinholeCamera& cam,
                  const SE3Pose& t_ck, const AffineBrightness& ab, double delta, bool want_jac,
                  PatternEval& out) {
  const double ea = std::exp(ab.a);
  out.energy = 0.0;
  out.inliers = 0;
  for (int j = 0; j < kPatternSize; ++j) {
    const Vec3 pc = t_ck * hp.points[j];
    if (!(pc.z() > kMinProjectionDepth)) return false;
    const Vec2 u = project_unchecked(cam, pc);
    if (!inside_interp(cur, u)) return false;
    const auto smp = bilinear_sample_with_gradient(cur, u.x(), u.y());
    const double r = smp.value - ea * hp.values[j] - ab.b;
    const double a = std::abs(r);
    out.r[j] = r;
    out.w[j] = hp.gradient_weight * (a <= delta ? 1.0 : delta / a);
    out.energy += hp.gradient_weight * huber(r, delta);
    if (a < 3.0 * delta) ++out.inliers;
    if (want_jac) {
      const double iz = 1.0 / pc.z();
      const double gx = smp.gradient.x() * cam.fx;
      const double gy = smp.gradient.y() * cam.fy;
      const Eigen::RowVector3d dp(gx * iz, gy * iz, -(gx * pc.x() + gy * pc.y()) * iz * iz);
      out.jac.row(j).head<3>() = dp;
      out.jac.row(j).tail<3>() = -dp * skew(pc);
      out.jac_ab(j, 0) = -ea * hp.values[j];
      out.jac_ab(j, 1) = -1.0;
    }
  }
  return true;
}

constexpr size_t kReductionChunks = 64;

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

struct TrackSystem {
  Mat8 H = Mat8::Zero();
  Vec8 g = Vec8::Zero();
  double energy = 0.0;
  size_t residuals = 0;  // including points that left the current image
  size_t visible = 0;
  size_t inliers = 0;

  void add(const TrackSystem& o) {
    H += o.H;
    g += o.g;
    energy += o.energy;
    residuals += o.residuals;
    visible += o.visible;
    inliers += o.inliers;
  }

  double mean_energy() const {
    return visible > 0 ? energy / static_cast<double>(visible)
                       : std::numeric_limits<double>::infinity();
  }
};

TrackSystem accumulate_tracking(const Keyframe& host, const GrayImage& cur, int level,
                                const PinholeCamera& cam, const SE3Pose& t_ck,
                                const AffineBrightness& ab, const OdometryConfig& config,
                                bool want_jac) {
  const GrayImage& host_img = host.pyramid.level(level);
  const size_t n = host.points.size();
  std::vector<TrackSystem> parts(kReductionChunks);
  parallel_for(kReductionChunks, config.threads, [&](size_t c) {
    TrackSystem& s = parts[c];
    HostPattern hp;
    PatternEval pe;
    Eigen::Matrix<double, kPatternSize, 8> jf;
    for (size_t i = c * n / kReductionChunks; i < (c + 1) * n / kReductionChunks; ++i) {
      if (!sample_host(host.points[i], host_img, cam, level, config.gradient_weight_c, hp)) {
        continue;
      }
      s.residuals += kPatternSize;
      if (!eval_pattern(hp, cur, cam, t_ck, ab, config.huber_delta, want_jac, pe)) continue;
      s.visible += kPatternSize;
      s.energy += pe.energy;
      s.inliers += static_cast<size_t>(pe.inliers);
      if (want_jac) {
        jf.leftCols<6>() = pe.jac;
        jf.rightCols<2>() = pe.jac_ab;
        for (int j = 0; j < kPatternSize; ++j) {
          s.H.noalias() += pe.w[j] * jf.row(j).transpose() * jf.row(j);
          s.g.noalias() += pe.w[j] * pe.r[j] * jf.row(j).transpose();
        }
      }
    }
  });
  TrackSystem total;
  for (const auto& p : parts) total.add(p);
  return total;
}

bool degenerate(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
  return !(hi > 0.0) || !std::isfinite(hi) || lo <= 1e-12 * hi;
}

struct TrackOutcome {
  TrackResult result;
  bool lost = false;
  std::string reason;
};

TrackOutcome track_internal(const Keyframe& host, const ImagePyramid& current,
                            const SE3Pose& initial, const AffineBrightness& initial_affine,
                            const PinholeCamera& camera, const OdometryConfig& config) {
  TrackOutcome out;
  SE3Pose t_ck = initial;
  AffineBrightness ab = config.estimate_affine ? initial_affine : AffineBrightness{};
  const int dim = config.estimate_affine ? 8 : 6;
  const int levels = std::min(host.pyramid.num_levels(), current.num_levels());

  // Steps are accepted on the mean energy of the residuals still in view.
  auto objective = [&](const TrackSystem& s, const AffineBrightness& x) {
    double e = s.mean_energy();
    if (config.estimate_affine) e += 0.5 * config.affine_prior * (x.a * x.a + x.b * x.b);
    return e;
  };

  bool converged = false;
  for (int level = levels - 1; level >= 0; --level) {
    const PinholeCamera cam = camera.scaled_to_level(level);
    const GrayImage& cur = current.level(level);
    TrackSystem sys = accumulate_tracking(host, cur, level, cam, t_ck, ab, config, true);
    bool level_converged = false;
    for (int it = 0; it < config.max_iterations; ++it) {
      if (sys.visible == 0 || degenerate(sys.H.topLeftCorner<6, 6>())) {
        if (level == 0) {
          out.lost = true;
          out.reason = "degenerate pose Hessian";
          out.result.relative_pose = t_ck;
          out.result.energy = std::numeric_limits<double>::infinity();
          return out;
        }
        break;
      }
      Eigen::MatrixXd h = sys.H.topLeftCorner(dim, dim);
      Eigen::VectorXd g = sys.g.head(dim);
      if (config.estimate_affine) {
        const double p = config.affine_prior * static_cast<double>(sys.visible);
        h(6, 6) += p;
        h(7, 7) += p;
        g(6) += p * ab.a;
        g(7) += p * ab.b;
      }
      const Eigen::VectorXd step = -h.ldlt().solve(g);
      if (!step.allFinite()) break;
      const double e0 = objective(sys, ab);
      bool accepted = false;
      double scale = 1.0;
      for (int k = 0; k < 10; ++k, scale *= 0.5) {
        const SE3Pose t_try = se3_exp(scale * step.head<6>()) * t_ck;
        AffineBrightness ab_try = ab;
        if (config.estimate_affine) {
          ab_try.a += scale * step(6);
          ab_try.b += scale * step(7);
        }
        TrackSystem trial = accumulate_tracking(host, cur, level, cam, t_try, ab_try, config, true);
        const double e1 = objective(trial, ab_try);
        if (e1 <= e0) {
          t_ck = t_try;
          ab = ab_try;
          sys = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (!accepted || scale * step.norm() < config.convergence_step) {
        level_converged = true;
        break;
      }
    }
    if (level == 0) converged = level_converged;
  }

  const TrackSystem fin =
      accumulate_tracking(host, current.level(0), 0, camera, t_ck, ab, config, false);
  out.result.relative_pose = t_ck.normalized();
  out.result.affine = ab;
  out.result.converged = converged;
  out.result.energy = fin.mean_energy();
  out.result.inlier_fraction =
      fin.residuals > 0 ? static_cast<double>(fin.inliers) / static_cast<double>(fin.residuals)
                        : 0.0;
  if (!std::isfinite(out.result.energy)) {
    out.lost = true;
    out.reason = "non-finite tracking energy";
  } else if (out.result.inlier_fraction < config.inlier_floor) {
    out.lost = true;
    out.reason = fmt::format("inlier fraction {:.3f} below {:.3f}", out.result.inlier_fraction,
                             config.inlier_floor);
  }
  return out;
}

}  // namespace

PhotometricResidual photometric_residual(const TrackPoint& point, const Keyframe& host,
                                         const ImagePyramid& current, int level,
                                         const SE3Pose& relative_pose,
                                         const AffineBrightness& affine,
                                         const PinholeCamera& camera,
                                         const OdometryConfig& config) {
  const PinholeCamera cam = camera.scaled_to_level(level);
  HostPattern hp;
  if (!sample_host(point, host.pyramid.level(level), cam, level, config.gradient_weight_c, hp)) {
    throw Error(ErrorCode::kOutOfView, "pattern leaves the host image");
  }
  PatternEval pe;
  if (!eval_pattern(hp, current.level(level), cam, relative_pose, affine, config.huber_delta, true,
                    pe)) {
    throw Error(ErrorCode::kOutOfView, "pattern leaves the current image");
  }
  PhotometricResidual out;
  for (int j = 0; j < kPatternSize; ++j) {
    out.residuals(j) = pe.r[j];
    out.weights(j) = pe.w[j];
  }
  out.gradient_weight = hp.gradient_weight;
  out.jacobian = pe.jac;
  out.affine_jacobian = pe.jac_ab;
  return out;
}

TrackResult track_frame(const Keyframe& host, const ImagePyramid& current,
                        const SE3Pose& initial_relative_pose, const PinholeCamera& camera,
                        const OdometryConfig& config, const AffineBrightness& initial_affine) {
  if (host.points.size() < kMinTrackPoints) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("host keyframe has {} points, need {}", host.points.size(),
                            kMinTrackPoints));
  }
  TrackOutcome out =
      track_internal(host, current, initial_relative_pose, initial_affine, camera, config);
  if (out.lost) throw Error(ErrorCode::kTrackingLost, out.reason);
  return out.result;
}

double mean_flow(const TrackResult& result, const Keyframe& host, const PinholeCamera& camera) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& p : host.points) {
    const Vec3 ph = Vec3((p.pixel.x() - camera.cx) / camera.fx,
                         (p.pixel.y() - camera.cy) / camera.fy, 1.0) /
                    p.inv_depth;
    const Vec3 pc = result.relative_pose * ph;
    if (!(pc.z() > kMinProjectionDepth)) continue;
    sum += (project_unchecked(camera, pc) - p.pixel).norm();
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

bool is_keyframe(const TrackResult& result, const Keyframe& host, int frames_since_keyframe,
                 const PinholeCamera& camera, const OdometryConfig& config) {
  if (frames_since_keyframe >= config.max_keyframe_gap) return true;
  if (result.inlier_fraction < 1.5 * config.inlier_floor) return true;
  return mean_flow(result, host, camera) > config.keyframe_flow;
}

// ---------------------------------------------------------------------------
// Sliding window

namespace {

struct WindowTask {
  size_t host;
  size_t target;
  size_t begin;
  size_t end;
};

struct WindowPart {
  Eigen::Matrix<double, 12, 12> H = Eigen::Matrix<double, 12, 12>::Zero();
  Eigen::Matrix<double, 12, 1> g = Eigen::Matrix<double, 12, 1>::Zero();
  double energy = 0.0;
  size_t visible = 0;
};

struct WindowSystem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double energy = 0.0;
  size_t visible = 0;

  double mean_energy() const {
    return visible > 0 ? energy / static_cast<double>(visible)
                       : std::numeric_limits<double>::infinity();
  }
};

std::vector<WindowTask> window_tasks(std::span<const Keyframe> window) {
  constexpr size_t kChunk = 256;
  std::vector<WindowTask> tasks;
  for (size_t i = 0; i < window.size(); ++i) {
    const size_t n = window[i].points.size();
    for (size_t j = 0; j < window.size(); ++j) {
      if (i == j) continue;
      for (size_t b = 0; b < n; b += kChunk) tasks.push_back({i, j, b, std::min(n, b + kChunk)});
    }
  }
  return tasks;
}

WindowSystem accumulate_window(std::span<const Keyframe> window, std::span<const SE3Pose> poses,
                               const std::vector<WindowTask>& tasks, int level,
                               const PinholeCamera& camera, const OdometryConfig& config,
                               bool want_jac) {
  const PinholeCamera cam = camera.scaled_to_level(level);
  std::vector<WindowPart> parts(tasks.size());
  parallel_for(tasks.size(), config.threads, [&](size_t t) {
    const WindowTask& task = tasks[t];
    const Keyframe& host = window[task.host];
    const Keyframe& target = window[task.target];
    const SE3Pose target_inv = poses[task.target].inverse();
    const SE3Pose t_ji = target_inv * poses[task.host];
    const Mat6 adj = target_inv.adjoint();
    AffineBrightness ab;
    ab.a = target.affine.a - host.affine.a;
    ab.b = target.affine.b - std::exp(ab.a) * host.affine.b;
    const GrayImage& host_img = host.pyramid.level(level);
    const GrayImage& cur = target.pyramid.level(level);

    WindowPart& part = parts[t];
    HostPattern hp;
    PatternEval pe;
    Eigen::Matrix<double, kPatternSize, 12> jf;
    for (size_t i = task.begin; i < task.end; ++i) {
      if (!sample_host(host.points[i], host_img, cam, level, config.gradient_weight_c, hp)) {
        continue;
      }
      if (!eval_pattern(hp, cur, cam, t_ji, ab, config.huber_delta, want_jac, pe)) continue;
      part.visible += kPatternSize;
      part.energy += pe.energy;
      if (!want_jac) continue;
      // T_ji = T_wj^-1 T_wi with world poses perturbed on the left.
      const Eigen::Matrix<double, kPatternSize, 6> jh = pe.jac * adj;
      jf.leftCols<6>() = jh;
      jf.rightCols<6>() = -jh;
      for (int j = 0; j < kPatternSize; ++j) {
        part.H.noalias() += pe.w[j] * jf.row(j).transpose() * jf.row(j);
        part.g.noalias() += pe.w[j] * pe.r[j] * jf.row(j).transpose();
      }
    }
  });

  const Eigen::Index n = static_cast<Eigen::Index>(window.size());
  WindowSystem sys;
  sys.H = Eigen::MatrixXd::Zero(6 * n, 6 * n);
  sys.g = Eigen::VectorXd::Zero(6 * n);
  for (size_t t = 0; t < tasks.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(tasks[t].host);
    const auto j = static_cast<Eigen::Index>(tasks[t].target);
    const WindowPart& p = parts[t];
    sys.energy += p.energy;
    sys.visible += p.visible;
    if (!want_jac) continue;
    sys.H.block<6, 6>(6 * i, 6 * i) += p.H.topLeftCorner<6, 6>();
    sys.H.block<6, 6>(6 * i, 6 * j) += p.H.topRightCorner<6, 6>();
    sys.H.block<6, 6>(6 * j, 6 * i) += p.H.bottomLeftCorner<6, 6>();
    sys.H.block<6, 6>(6 * j, 6 * j) += p.H.bottomRightCorner<6, 6>();
    sys.g.segment<6>(6 * i) += p.g.head<6>();
    sys.g.segment<6>(6 * j) += p.g.tail<6>();
  }
  return sys;
}

}  // namespace

std::vector<SE3Pose> window_optimize(std::span<const Keyframe> window,
                                     const PinholeCamera& camera, const OdometryConfig& config) {
  if (window.size() < 2) {
    throw Error(ErrorCode::kDegenerateWindow,
                fmt::format("window holds {} keyframe(s), need 2", window.size()));
  }
  std::vector<SE3Pose> poses;
  int levels = std::numeric_limits<int>::max();
  for (const auto& kf : window) {
    poses.push_back(kf.world_pose);
    levels = std::min(levels, kf.pyramid.num_levels());
  }
  const auto tasks = window_tasks(window);
  const Eigen::Index free = 6 * static_cast<Eigen::Index>(window.size() - 1);

  for (int level = levels - 1; level >= 0; --level) {
    for (int it = 0; it < config.window_iterations; ++it) {
      const WindowSystem sys = accumulate_window(window, poses, tasks, level, camera, config, true);
      const Eigen::MatrixXd h = sys.H.bottomRightCorner(free, free);
      if (degenerate(h)) {
        if (level > 0) break;
        throw Error(ErrorCode::kDegenerateWindow, "window normal equations are rank-deficient");
      }
      const Eigen::VectorXd step = -h.ldlt().solve(sys.g.tail(free));
      if (!step.allFinite()) break;
      bool accepted = false;
      double scale = 1.0;
      for (int k = 0; k < 10; ++k, scale *= 0.5) {
        std::vector<SE3Pose> trial = poses;
        for (size_t f = 1; f < trial.size(); ++f) {
          trial[f] = se3_exp(scale * step.segment<6>(6 * static_cast<Eigen::Index>(f - 1))) *
                     trial[f];
        }
        const double e1 =
            accumulate_window(window, trial, tasks, level, camera, config, false).mean_energy();
        if (e1 <= sys.mean_energy()) {
          poses = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (!accepted || scale * step.norm() < config.convergence_step) break;
    }
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Depth sources

DepthSource splat_depth_source(const GaussianMap& map, const PinholeCamera& camera,
                               const RenderOptions& options) {
  return [map = &map, camera, options](const SE3Pose& world_to_camera) {
    RenderedView v = render(*map, world_to_camera, camera, options);
    return DepthMaps{std::move(v.depth), std::move(v.alpha)};
  };
}

DepthSource nn_depth_source(std::vector<Vec3> cloud, const PinholeCamera& camera, double radius) {
  return [cloud = std::move(cloud), camera, radius](const SE3Pose& world_to_camera) {
    DepthMaps dm;
    dm.depth = interpolate_depth_nn(cloud, world_to_camera, camera, radius);
    dm.alpha = ScalarImage(dm.depth.width, dm.depth.height, 0.0);
    for (size_t i = 0; i < dm.depth.data.size(); ++i) {
      if (dm.depth.data[i] > 0.0) dm.alpha.data[i] = 1.0;
    }
    return dm;
  };
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

// Renders depth at the keyframe's pose and attaches its track points.
KeyframeRecord populate_keyframe(Keyframe& kf, const DepthSource& depth,
                                 const OdometryConfig& config) {
  DepthMaps dm = depth(kf.world_pose.inverse());
  const GrayImage& img = kf.pyramid.level(0);
  const auto pixels = extract_high_gradient_points(img, config);
  kf.points = associate_depth(pixels, dm.depth, dm.alpha, img, kf.id, config);
  if (kf.points.size() < kMinTrackPoints) {
    throw Error(ErrorCode::kNoValidDepth,
                fmt::format("keyframe has {} points with valid depth, need {}", kf.points.size(),
                            kMinTrackPoints));
  }
  KeyframeRecord rec;
  rec.frame = kf.frame_index;
  rec.render_pose = kf.world_pose;
  rec.num_points = kf.points.size();
  if (config.record_keyframe_depth) {
    rec.depth = dm.depth;
    rec.alpha = dm.alpha;
  }
  kf.depth_map = std::move(dm.depth);
  kf.alpha_map = std::move(dm.alpha);
  return rec;
}

GrayImage load_checked(const FrameSequence& frames, size_t i, const PinholeCamera& camera) {
  GrayImage img = frames.load(i);
  if (img.width() != camera.width || img.height() != camera.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("frame {} is {}x{}, camera expects {}x{}", i, img.width(),
                            img.height(), camera.width, camera.height));
  }
  return img;
}

}  // namespace

OdometryResult run_odometry(const FrameSequence& frames, const DepthSource& depth,
                            const SE3Pose& first_pose, const PinholeCamera& camera,
                            const OdometryConfig& config) {
  config.validate();
  camera.validate();
  if (frames.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty frame sequence");
  for (size_t i = 1; i < frames.size(); ++i) {
    if (!(frames.timestamps[i] > frames.timestamps[i - 1])) {
      throw Error(ErrorCode::kTimestampDisorder, fmt::format("frame {} timestamp", i));
    }
  }

  // Every frame pose is stored relative to its host keyframe and recomposed
  // from the (possibly refined) keyframe pose.
  struct FramePose {
    size_t host;
    SE3Pose host_from_frame;
  };
  std::vector<SE3Pose> kf_world;
  std::vector<FramePose> poses;
  std::vector<Keyframe> window;
  OdometryResult res;

  auto world_of = [&](size_t f) { return kf_world[poses[f].host] * poses[f].host_from_frame; };
  auto finish = [&]() {
    for (size_t f = 0; f < poses.size(); ++f) res.trajectory.push_back(frames.timestamps[f], world_of(f));
    return std::move(res);
  };
  auto fail = [&](size_t f, const Error& e) {
    res.statuses.push_back({f, FrameState::kLost, std::numeric_limits<double>::quiet_NaN(),
                            std::numeric_limits<double>::quiet_NaN()});
    res.error = OdometryError{f, e.code(), e.what()};
  };

  kf_world.push_back(first_pose);
  poses.push_back({0, SE3Pose()});
  try {
    Keyframe kf;
    kf.id = 0;
    kf.frame_index = 0;
    kf.pyramid = build_pyramid(load_checked(frames, 0, camera), config.pyramid_levels);
    kf.world_pose = first_pose;
    res.keyframes.push_back(populate_keyframe(kf, depth, config));
    window.push_back(std::move(kf));
    res.statuses.push_back({0, FrameState::kKeyframe, 0.0, 1.0});
  } catch (const Error& e) {
    fail(0, e);
    return finish();
  }

  AffineBrightness last_affine;
  for (size_t i = 1; i < frames.size(); ++i) {
    try {
      ImagePyramid pyr = build_pyramid(load_checked(frames, i, camera), config.pyramid_levels);
      const Keyframe& host = window.back();
      const SE3Pose prev = world_of(i - 1);
      SE3Pose predicted = prev;
      if (i >= 2) predicted = (prev * (world_of(i - 2).inverse() * prev)).normalized();
      const SE3Pose init = predicted.inverse() * host.world_pose;

      TrackOutcome out = track_internal(host, pyr, init, last_affine, camera, config);
      if (out.lost) {
        fail(i, Error(ErrorCode::kTrackingLost, fmt::format("frame {}: {}", i, out.reason)));
        break;
      }
      const TrackResult& tr = out.result;
      const SE3Pose world = host.world_pose * tr.relative_pose.inverse();
      poses.push_back({static_cast<size_t>(host.id), tr.relative_pose.inverse().normalized()});
      last_affine = tr.affine;
      FrameStatus status{i, FrameState::kTracked, tr.energy, tr.inlier_fraction};

      const int gap = static_cast<int>(i - host.frame_index);
      if (is_keyframe(tr, host, gap, camera, config)) {
        Keyframe kf;
        kf.id = static_cast<int>(kf_world.size());
        kf.frame_index = i;
        kf.pyramid = std::move(pyr);
        kf.world_pose = world;
        kf.affine.a = tr.affine.a + host.affine.a;
        kf.affine.b = std::exp(tr.affine.a) * host.affine.b + tr.affine.b;
        const size_t previous_host = static_cast<size_t>(host.id);
        kf_world.push_back(world);
        poses.back() = {static_cast<size_t>(kf.id), SE3Pose()};
        window.push_back(std::move(kf));
        if (window.size() > static_cast<size_t>(config.window_size)) window.erase(window.begin());

        try {
          const auto refined = window_optimize(window, camera, config);
          for (size_t k = 0; k < window.size(); ++k) {
            window[k].world_pose = refined[k].normalized();
            kf_world[static_cast<size_t>(window[k].id)] = window[k].world_pose;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerateWindow) throw;
        }

        try {
          res.keyframes.push_back(populate_keyframe(window.back(), depth, config));
          status.state = FrameState::kKeyframe;
          last_affine = {};
        } catch (const Error&) {
          // No usable depth here: keep tracking against the previous host.
          const SE3Pose refined_world = kf_world.back();
          window.pop_back();
          kf_world.pop_back();
          poses.back() = {previous_host, kf_world[previous_host].inverse() * refined_world};
          if (window.empty() || static_cast<size_t>(window.back().id) != previous_host) {
            throw Error(ErrorCode::kTrackingLost,
                        fmt::format("frame {}: previous keyframe left the window", i));
          }
        }
      }
      res.statuses.push_back(status);
    } catch (const Error& e) {
      if (poses.size() > i) poses.resize(i);
      fail(i, e);
      break;
    }
  }
  return finish();
}

}  // namespace gsvo
