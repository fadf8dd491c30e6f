// SPDX-License-Identifier: Apache-2.0
#include "gsvo/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "gsvo/error.hpp"
#include "gsvo/parallel.hpp"

namespace gsvo {

GaussianGradient& GaussianGradient::operator+=(const GaussianGradient& o) {
  position += o.position;
  log_scale += o.log_scale;
  rotation += o.rotation;
  logit_opacity += o.logit_opacity;
  color += o.color;
  return *this;
}

namespace {

struct RasterPlan {
  std::vector<Splat2D> splats;  // depth-sorted
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::vector<uint32_t>> tiles;  // indices into splats, front to back
};

RasterPlan plan_raster(const GaussianMap& map, const SE3Pose& world_to_camera,
                       const PinholeCamera& camera, const RenderOptions& options) {
  if (map.empty()) throw Error(ErrorCode::kEmptyMap, "cannot render an empty map");

  const size_t n = map.size();
  std::vector<std::optional<Splat2D>> projected(n);
  constexpr size_t kChunk = 1024;
  parallel_for((n + kChunk - 1) / kChunk, options.threads, [&](size_t chunk) {
    const size_t end = std::min(n, (chunk + 1) * kChunk);
    for (size_t i = chunk * kChunk; i < end; ++i) {
      projected[i] =
          project_gaussian(map.gaussians[i], world_to_camera, camera, options.cutoff_sigma);
      if (projected[i]) projected[i]->source_index = static_cast<uint32_t>(i);
    }
  });

  RasterPlan plan;
  plan.splats.reserve(n);
  for (auto& p : projected) {
    if (p) plan.splats.push_back(*p);
  }
  plan.splats = sort_splats(std::move(plan.splats));

  plan.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  plan.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
  plan.tiles.resize(static_cast<size_t>(plan.tiles_x) * plan.tiles_y);
  for (uint32_t s = 0; s < plan.splats.size(); ++s) {
    const Splat2D& sp = plan.splats[s];
    for (int ty = sp.min_y / kTileSize; ty <= sp.max_y / kTileSize; ++ty) {
      for (int tx = sp.min_x / kTileSize; tx <= sp.max_x / kTileSize; ++tx) {
        plan.tiles[static_cast<size_t>(ty) * plan.tiles_x + tx].push_back(s);
      }
    }
  }
  return plan;
}

// Alpha of splat `s` at pixel center (px, py); also reports the Mahalanobis
// offset needed by the backward pass.
struct AlphaEval {
  double alpha = 0.0;
  double falloff = 0.0;  // exp(-m2/2)
  double dx = 0.0;
  double dy = 0.0;
  bool clamped = false;
};

inline AlphaEval eval_alpha(const Splat2D& s, double px, double py, double cutoff_sq) {
  AlphaEval e;
  e.dx = px - s.mean2d.x();
  e.dy = py - s.mean2d.y();
  const double m2 = e.dx * (s.conic(0, 0) * e.dx + s.conic(0, 1) * e.dy) +
                    e.dy * (s.conic(1, 0) * e.dx + s.conic(1, 1) * e.dy);
  if (m2 >= cutoff_sq) return e;
  e.falloff = std::exp(-0.5 * m2);
  e.alpha = s.base_opacity * e.falloff;
  if (e.alpha > kAlphaMax) {
    e.alpha = kAlphaMax;
    e.clamped = true;
  }
  return e;
}

template <typename TileFn>
void for_each_tile_pixel(const RasterPlan& plan, const PinholeCamera& camera, size_t tile,
                         TileFn&& fn) {
  const int tx = static_cast<int>(tile % static_cast<size_t>(plan.tiles_x));
  const int ty = static_cast<int>(tile / static_cast<size_t>(plan.tiles_x));
  const int x_end = std::min((tx + 1) * kTileSize, camera.width);
  const int y_end = std::min((ty + 1) * kTileSize, camera.height);
  for (int y = ty * kTileSize; y < y_end; ++y) {
    for (int x = tx * kTileSize; x < x_end; ++x) fn(x, y);
  }
}

}  // namespace

RenderedView render(const GaussianMap& map, const SE3Pose& world_to_camera,
                    const PinholeCamera& camera, const RenderOptions& options) {
  const RasterPlan plan = plan_raster(map, world_to_camera, camera, options);
  RenderedView view{RgbImage(camera.width, camera.height),
                    ScalarImage(camera.width, camera.height),
                    ScalarImage(camera.width, camera.height)};
  const double cutoff_sq = options.cutoff_sigma * options.cutoff_sigma;
  const double t_min = options.early_stop_transmittance;
  const Vec3 bg = map.background_color;

  parallel_for(plan.tiles.size(), options.threads, [&](size_t tile) {
    const auto& list = plan.tiles[tile];
    for_each_tile_pixel(plan, camera, tile, [&](int x, int y) {
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      double depth = 0.0;
      double alpha = 0.0;
      for (uint32_t idx : list) {
        const Splat2D& s = plan.splats[idx];
        if (x < s.min_x || x > s.max_x || y < s.min_y || y > s.max_y) continue;
        const AlphaEval e = eval_alpha(s, x, y, cutoff_sq);
        if (e.alpha <= 0.0) continue;
        const double w = e.alpha * transmittance;
        color += w * s.color;
        depth += w * s.depth;
        alpha += w;
        transmittance *= 1.0 - e.alpha;
        if (transmittance < t_min) break;
      }
      view.color.set(x, y, color + transmittance * bg);
      view.depth(x, y) = depth;
      view.alpha(x, y) = alpha;
    });
  });
  return view;
}

namespace {

// Screen-space gradient of one splat.
struct SplatGradient {
  double mean_x = 0.0;
  double mean_y = 0.0;
  Mat2 conic = Mat2::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();

  void add(const SplatGradient& o) {
    mean_x += o.mean_x;
    mean_y += o.mean_y;
    conic += o.conic;
    opacity += o.opacity;
    color += o.color;
  }
};

struct Contribution {
  uint32_t local = 0;
  AlphaEval eval;
  double transmittance = 0.0;  // before this splat
};

GaussianGradient chain_to_gaussian(const Gaussian3D& g, const Splat2D& s,
                                   const SplatGradient& sg, const SE3Pose& world_to_camera,
                                   const PinholeCamera& camera) {
  GaussianGradient out;
  out.color = sg.color;
  out.logit_opacity = sg.opacity * g.opacity * (1.0 - g.opacity);

  // conic = cov^-1  =>  dL/dcov = -conic^T dL/dconic conic^T
  const Mat2 dcov = -s.conic.transpose() * sg.conic * s.conic.transpose();

  const Vec3 t = world_to_camera * g.position;
  const double z = t.z();
  const double iz = 1.0 / z;
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx * iz, 0.0, -camera.fx * t.x() * iz2,  //
      0.0, camera.fy * iz, -camera.fy * t.y() * iz2;
  const Mat3& w = world_to_camera.rotation();
  const Eigen::Matrix<double, 2, 3> a = jac * w;
  const Mat3 sigma = g.covariance();

  const Mat3 dsigma = a.transpose() * dcov * a;
  const Eigen::Matrix<double, 2, 3> da = dcov * a * sigma + dcov.transpose() * a * sigma.transpose();
  const Eigen::Matrix<double, 2, 3> djac = da * w.transpose();

  Vec3 dt;
  dt.x() = djac(0, 2) * (-camera.fx * iz2) + sg.mean_x * camera.fx * iz;
  dt.y() = djac(1, 2) * (-camera.fy * iz2) + sg.mean_y * camera.fy * iz;
  dt.z() = djac(0, 0) * (-camera.fx * iz2) + djac(0, 2) * (2.0 * camera.fx * t.x() * iz2 * iz) +
           djac(1, 1) * (-camera.fy * iz2) + djac(1, 2) * (2.0 * camera.fy * t.y() * iz2 * iz) +
           sg.mean_x * (-camera.fx * t.x() * iz2) + sg.mean_y * (-camera.fy * t.y() * iz2);
  out.position = w.transpose() * dt;

  const Mat3 r = g.rotation.normalized().toRotationMatrix();
  const Vec3 s2 = g.scale.cwiseAbs2();
  for (int i = 0; i < 3; ++i) {
    out.log_scale[i] = 2.0 * s2[i] * r.col(i).dot(dsigma * r.col(i));
  }
  // Sigma(delta) = R Exp(delta) S^2 Exp(delta)^T R^T
  const Mat3 m = r.transpose() * dsigma * r;
  const Mat3 s2d = s2.asDiagonal();
  for (int j = 0; j < 3; ++j) {
    const Mat3 e = skew(Vec3::Unit(j));
    const Mat3 dir = e * s2d - s2d * e;
    out.rotation[j] = (m.array() * dir.array()).sum();
  }
  return out;
}

}  // namespace

std::vector<GaussianGradient> render_backward(const GaussianMap& map,
                                              const SE3Pose& world_to_camera,
                                              const PinholeCamera& camera,
                                              const RgbImage& dloss_dcolor,
                                              const RenderOptions& options) {
  if (dloss_dcolor.width() != camera.width || dloss_dcolor.height() != camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "color gradient image does not match camera");
  }
  const RasterPlan plan = plan_raster(map, world_to_camera, camera, options);
  const double cutoff_sq = options.cutoff_sigma * options.cutoff_sigma;
  const double t_min = options.early_stop_transmittance;
  const Vec3 bg = map.background_color;

  std::vector<std::vector<SplatGradient>> tile_grads(plan.tiles.size());
  parallel_for(plan.tiles.size(), options.threads, [&](size_t tile) {
    const auto& list = plan.tiles[tile];
    auto& grads = tile_grads[tile];
    grads.assign(list.size(), SplatGradient{});
    std::vector<Contribution> contribs;
    for_each_tile_pixel(plan, camera, tile, [&](int x, int y) {
      const Vec3 dl_dc = dloss_dcolor.at(x, y);
      if (dl_dc.isZero(0.0)) return;
      contribs.clear();
      double transmittance = 1.0;
      for (uint32_t local = 0; local < list.size(); ++local) {
        const Splat2D& s = plan.splats[list[local]];
        if (x < s.min_x || x > s.max_x || y < s.min_y || y > s.max_y) continue;
        const AlphaEval e = eval_alpha(s, x, y, cutoff_sq);
        if (e.alpha <= 0.0) continue;
        contribs.push_back({local, e, transmittance});
        transmittance *= 1.0 - e.alpha;
        if (transmittance < t_min) break;
      }
      // Color contributed by everything behind the current splat.
      Vec3 behind = transmittance * bg;
      for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
        const Splat2D& s = plan.splats[list[it->local]];
        const double a = it->eval.alpha;
        const double tr = it->transmittance;
        SplatGradient& g = grads[it->local];
        g.color += a * tr * dl_dc;
        const double dl_dalpha = dl_dc.dot(tr * s.color - behind / (1.0 - a));
        behind += a * tr * s.color;
        if (it->eval.clamped) continue;
        g.opacity += dl_dalpha * it->eval.falloff;
        const double dl_dm2 = dl_dalpha * (-0.5 * a);
        const double dx = it->eval.dx;
        const double dy = it->eval.dy;
        // m2 = d^T Q d with d = pixel - mean
        g.mean_x += dl_dm2 * -(2.0 * s.conic(0, 0) * dx + (s.conic(0, 1) + s.conic(1, 0)) * dy);
        g.mean_y += dl_dm2 * -(2.0 * s.conic(1, 1) * dy + (s.conic(0, 1) + s.conic(1, 0)) * dx);
        g.conic(0, 0) += dl_dm2 * dx * dx;
        g.conic(0, 1) += dl_dm2 * dx * dy;
        g.conic(1, 0) += dl_dm2 * dx * dy;
        g.conic(1, 1) += dl_dm2 * dy * dy;
      }
    });
  });

  std::vector<SplatGradient> splat_grads(plan.splats.size());
  for (size_t tile = 0; tile < plan.tiles.size(); ++tile) {
    const auto& list = plan.tiles[tile];
    for (size_t local = 0; local < list.size(); ++local) {
      splat_grads[list[local]].add(tile_grads[tile][local]);
    }
  }

  std::vector<GaussianGradient> out(map.size());
  for (size_t s = 0; s < plan.splats.size(); ++s) {
    const Splat2D& sp = plan.splats[s];
    out[sp.source_index] =
        chain_to_gaussian(map.gaussians[sp.source_index], sp, splat_grads[s], world_to_camera,
                          camera);
  }
  return out;
}

}  // namespace gsvo
