// SPDX-License-Identifier: Apache-2.0
#include "gsvo/map_fitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include "gsvo/error.hpp"
#include "gsvo/ssim.hpp"

namespace gsvo {

void FitConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda_ssim must lie in [0,1]");
  }
  if (ssim_window < 1 || ssim_window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "ssim window must be odd");
  }
  for (double v : {lr.position, lr.log_scale, lr.rotation, lr.logit_opacity, lr.color}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "learning rates must be finite and >= 0");
    }
  }
}

double mean_nearest_neighbor_distance(std::span<const Vec3> points) {
  const size_t n = points.size();
  if (n < 2) return 0.0;
  Vec3 lo = points[0];
  Vec3 hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) return 0.0;
  const double cell = std::max(extent / std::cbrt(static_cast<double>(n)), extent * 1e-6);

  struct KeyHash {
    size_t operator()(const std::array<int64_t, 3>& k) const {
      return static_cast<size_t>(k[0] * 73856093 ^ k[1] * 19349663 ^ k[2] * 83492791);
    }
  };
  auto key_of = [&](const Vec3& p) {
    return std::array<int64_t, 3>{static_cast<int64_t>(std::floor((p.x() - lo.x()) / cell)),
                                  static_cast<int64_t>(std::floor((p.y() - lo.y()) / cell)),
                                  static_cast<int64_t>(std::floor((p.z() - lo.z()) / cell))};
  };
  std::unordered_map<std::array<int64_t, 3>, std::vector<uint32_t>, KeyHash> grid;
  for (uint32_t i = 0; i < n; ++i) grid[key_of(points[i])].push_back(i);
  const int64_t max_ring = static_cast<int64_t>(std::ceil(extent / cell)) + 1;

  double total = 0.0;
  for (uint32_t i = 0; i < n; ++i) {
    const auto k = key_of(points[i]);
    double best = std::numeric_limits<double>::infinity();
    for (int64_t ring = 0; ring <= max_ring; ++ring) {
      for (int64_t dz = -ring; dz <= ring; ++dz) {
        for (int64_t dy = -ring; dy <= ring; ++dy) {
          for (int64_t dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            auto it = grid.find({k[0] + dx, k[1] + dy, k[2] + dz});
            if (it == grid.end()) continue;
            for (uint32_t j : it->second) {
              if (j == i) continue;
              best = std::min(best, (points[j] - points[i]).norm());
            }
          }
        }
      }
      // Anything in ring+1 is at least ring * cell away.
      if (best <= static_cast<double>(ring) * cell) break;
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

GaussianMap init_from_pointcloud(std::span<const PointSample> points, uint64_t rng_seed) {
  if (points.empty()) throw Error(ErrorCode::kEmptyCloud, "point cloud has no points");
  std::vector<Vec3> positions;
  positions.reserve(points.size());
  for (const auto& p : points) positions.push_back(p.position);
  double spacing = mean_nearest_neighbor_distance(positions);
  if (!(spacing > 0.0)) spacing = 0.01;

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_lo = std::log(0.5 * spacing);
  const double log_hi = std::log(2.0 * spacing);

  GaussianMap map;
  map.gaussians.reserve(points.size());
  for (const auto& p : points) {
    Gaussian3D g;
    g.position = p.position;
    g.opacity = 0.8;
    for (int a = 0; a < 3; ++a) {
      g.scale[a] = std::clamp(std::exp(log_lo + (log_hi - log_lo) * unit(rng)), kMinScale, kMaxScale);
    }
    // Shoemake's uniform quaternion.
    const double u1 = unit(rng);
    const double u2 = unit(rng) * 2.0 * M_PI;
    const double u3 = unit(rng) * 2.0 * M_PI;
    g.rotation = Eigen::Quaterniond(std::sqrt(u1) * std::cos(u3), std::sqrt(1.0 - u1) * std::sin(u2),
                                    std::sqrt(1.0 - u1) * std::cos(u2), std::sqrt(u1) * std::sin(u3));
    g.rotation.normalize();
    if (p.color) {
      g.color = p.color->cwiseMax(0.0).cwiseMin(1.0);
    } else {
      g.color = Vec3(unit(rng), unit(rng), unit(rng));
    }
    map.gaussians.push_back(g);
  }
  return map;
}

LossBreakdown compute_loss(const RgbImage& rendered, const RgbImage& target, double lambda_ssim,
                           int ssim_window, bool normalize) {
  if (rendered.width() != target.width() || rendered.height() != target.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "rendered and target images differ in size");
  }
  LossBreakdown out;
  const auto r = rendered.data();
  const auto t = target.data();
  for (size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - t[i];
    out.color_raw += d * d;
  }
  out.color_normalized = out.color_raw / static_cast<double>(rendered.pixel_count());
  out.ssim_loss = 1.0 - ssim(rendered, target, ssim_window);
  const double lc = normalize ? out.color_normalized : out.color_raw;
  out.total = lambda_ssim * out.ssim_loss + (1.0 - lambda_ssim) * lc;
  return out;
}

namespace {

void check_view(const TrainingView& view) {
  if (view.image.width() != view.camera.width || view.image.height() != view.camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "training image does not match camera size");
  }
}

bool has_coverage(const RenderedView& rv) {
  return std::any_of(rv.alpha.data.begin(), rv.alpha.data.end(), [](double a) { return a > 0.0; });
}

}  // namespace

LossBreakdown evaluate_loss(const GaussianMap& map, const TrainingView& view,
                            const FitConfig& config) {
  check_view(view);
  const RenderedView rv = render(map, view.world_to_camera, view.camera, config.render);
  return compute_loss(rv.color, view.image, config.lambda_ssim, config.ssim_window,
                      config.normalize_color_loss);
}

LossGradient loss_gradient(const GaussianMap& map, const TrainingView& view,
                           const FitConfig& config) {
  check_view(view);
  const RenderedView rv = render(map, view.world_to_camera, view.camera, config.render);
  if (!has_coverage(rv)) {
    throw Error(ErrorCode::kZeroCoverage, "map does not cover the training view");
  }
  LossGradient out;
  out.loss = compute_loss(rv.color, view.image, config.lambda_ssim, config.ssim_window,
                          config.normalize_color_loss);

  const int w = view.camera.width;
  const int h = view.camera.height;
  const double lambda = config.lambda_ssim;
  const double color_weight =
      (1.0 - lambda) *
      (config.normalize_color_loss ? 1.0 / static_cast<double>(rv.color.pixel_count()) : 1.0);

  RgbImage dloss(w, h);
  auto dl = dloss.data();
  const auto rendered = rv.color.data();
  const auto target = view.image.data();
  for (size_t i = 0; i < dl.size(); ++i) dl[i] = color_weight * 2.0 * (rendered[i] - target[i]);

  if (lambda > 0.0) {
    for (int c = 0; c < 3; ++c) {
      const GrayImage rc = rv.color.channel(c);
      const GrayImage tc = view.image.channel(c);
      const SsimGradient sg = ssim_with_gradient(rc.data(), tc.data(), w, h, config.ssim_window);
      // l_ssim = 1 - mean over channels
      for (size_t i = 0; i < sg.d_first.size(); ++i) {
        dl[3 * i + static_cast<size_t>(c)] -= lambda / 3.0 * sg.d_first[i];
      }
    }
  }
  out.gradients = render_backward(map, view.world_to_camera, view.camera, dloss, config.render);
  return out;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kMaxLogit = 20.0;

}  // namespace

Gaussian3D retract(const Gaussian3D& g, const GaussianGradient& delta) {
  Gaussian3D out = g;
  out.position += delta.position;
  for (int a = 0; a < 3; ++a) {
    out.scale[a] = std::clamp(g.scale[a] * std::exp(delta.log_scale[a]), kMinScale, kMaxScale);
  }
  const double angle = delta.rotation.norm();
  if (angle > 0.0) {
    out.rotation = g.rotation * Eigen::Quaterniond(Eigen::AngleAxisd(angle, delta.rotation / angle));
  }
  out.rotation.normalize();
  out.opacity =
      sigmoid(std::clamp(logit(g.opacity) + delta.logit_opacity, -kMaxLogit, kMaxLogit));
  out.color = (g.color + delta.color).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

namespace {

// First and second Adam moments for the 13 parameters of one Gaussian.
struct AdamState {
  std::array<double, 13> m{};
  std::array<double, 13> v{};
};

std::array<double, 13> flatten(const GaussianGradient& g) {
  return {g.position.x(),  g.position.y(),  g.position.z(),  g.log_scale.x(), g.log_scale.y(),
          g.log_scale.z(), g.rotation.x(),  g.rotation.y(),  g.rotation.z(),  g.logit_opacity,
          g.color.x(),     g.color.y(),     g.color.z()};
}

GaussianGradient unflatten(const std::array<double, 13>& a) {
  GaussianGradient g;
  g.position = Vec3(a[0], a[1], a[2]);
  g.log_scale = Vec3(a[3], a[4], a[5]);
  g.rotation = Vec3(a[6], a[7], a[8]);
  g.logit_opacity = a[9];
  g.color = Vec3(a[10], a[11], a[12]);
  return g;
}

}  // namespace

FitResult fit(GaussianMap map, std::span<const TrainingView> views, const FitConfig& config,
              const FitProgress& progress) {
  config.validate();
  if (views.empty()) throw Error(ErrorCode::kInvalidArgument, "fit needs at least one view");
  map.validate();

  std::vector<AdamState> adam(map.size());
  FitResult result;
  result.history.reserve(static_cast<size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    const int view_index = static_cast<int>(static_cast<size_t>(it) % views.size());
    const LossGradient lg = loss_gradient(map, views[static_cast<size_t>(view_index)], config);
    if (!std::isfinite(lg.loss.total)) {
      throw Error(ErrorCode::kDiverged, "loss became non-finite at iteration " + std::to_string(it));
    }
    FitRecord rec{it, view_index, lg.loss};
    result.history.push_back(rec);
    if (progress) progress(rec);

    const double frac = config.iterations > 1 ? static_cast<double>(it) / (config.iterations - 1) : 0.0;
    const double pos_lr = config.lr.position * std::pow(config.lr.position_final_ratio, frac);
    const std::array<double, 13> lr = {
        pos_lr,           pos_lr,           pos_lr,           config.lr.log_scale,
        config.lr.log_scale, config.lr.log_scale, config.lr.rotation, config.lr.rotation,
        config.lr.rotation, config.lr.logit_opacity, config.lr.color, config.lr.color,
        config.lr.color};
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, it + 1);
    const double corr2 = 1.0 - std::pow(b2, it + 1);

    for (size_t i = 0; i < map.size(); ++i) {
      const auto grad = flatten(lg.gradients[i]);
      AdamState& st = adam[i];
      std::array<double, 13> step{};
      bool moved = false;
      for (size_t k = 0; k < 13; ++k) {
        st.m[k] = b1 * st.m[k] + (1.0 - b1) * grad[k];
        st.v[k] = b2 * st.v[k] + (1.0 - b2) * grad[k] * grad[k];
        const double m_hat = st.m[k] / corr1;
        const double v_hat = st.v[k] / corr2;
        step[k] = -lr[k] * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        moved = moved || step[k] != 0.0;
      }
      if (moved) map.gaussians[i] = retract(map.gaussians[i], unflatten(step));
    }
  }
  result.map = std::move(map);
  return result;
}

}  // namespace gsvo
