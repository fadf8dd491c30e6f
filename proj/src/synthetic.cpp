// SPDX-License-Identifier: Apache-2.0
#include "gsvo/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gsvo/error.hpp"

namespace gsvo {

bool SceneRect::contains(const Vec3& p, double margin) const {
  const Vec3 d = p - center;
  return std::abs(d.dot(u)) <= half_u + margin && std::abs(d.dot(v)) <= half_v + margin &&
         std::abs(d.dot(normal())) <= 1e-9 + margin;
}

bool is_known_layout(const std::string& layout) {
  return layout == "two-planes" || layout == "room-box" || layout == "textured-wall";
}

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(int64_t i, int64_t j, uint64_t key) {
  const uint64_t h = mix(key ^ mix(static_cast<uint64_t>(i) ^ mix(static_cast<uint64_t>(j))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(double x, double y, double cell, uint64_t key) {
  const double fx = x / cell;
  const double fy = y / cell;
  const double x0 = std::floor(fx);
  const double y0 = std::floor(fy);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = smooth(fx - x0);
  const double ty = smooth(fy - y0);
  const auto i = static_cast<int64_t>(x0);
  const auto j = static_cast<int64_t>(y0);
  const double a = lattice(i, j, key) * (1 - tx) + lattice(i + 1, j, key) * tx;
  const double b = lattice(i, j + 1, key) * (1 - tx) + lattice(i + 1, j + 1, key) * tx;
  return a * (1 - ty) + b * ty;
}

Vec3 texture(double a, double b, uint64_t seed, size_t surface) {
  static constexpr double kCells[] = {0.05, 0.1, 0.2, 0.4};
  static constexpr double kAmps[] = {0.35, 0.3, 0.25, 0.2};
  Vec3 c;
  for (int ch = 0; ch < 3; ++ch) {
    double v = 0.5;
    for (int o = 0; o < 4; ++o) {
      const uint64_t key = mix(seed * 131 + surface * 17 + static_cast<uint64_t>(o * 3 + ch));
      v += kAmps[o] * (value_noise(a, b, kCells[o], key) - 0.5);
    }
    c[ch] = std::clamp(v, 0.05, 0.95);
  }
  return c;
}

SceneRect rect(const Vec3& center, const Vec3& u, const Vec3& v, double hu, double hv) {
  return {center, u.normalized(), v.normalized(), hu, hv};
}

struct Layout {
  std::vector<SceneRect> surfaces;
  std::vector<SceneRect> voids;
  double default_spacing = 0.025;
};

// Splats composite in center-depth order, so a surface seen exactly
// head-on (as at the identity start pose) would fall back to index order and
// look different from every other view. Tilting all surfaces keeps the depth
// order of neighbouring splats the same along the whole trajectory.
const Mat3& surface_tilt() {
  static const Mat3 r = (Eigen::AngleAxisd(0.2, Vec3::UnitY()) *
                         Eigen::AngleAxisd(-0.1, Vec3::UnitX())).toRotationMatrix();
  return r;
}

// Camera looks along +z with y pointing down.
Layout build_layout(const std::string& name) {
  Layout l;
  const Vec3 x = Vec3::UnitX();
  const Vec3 y = Vec3::UnitY();
  const Vec3 z = Vec3::UnitZ();
  if (name == "two-planes") {
    l.surfaces.push_back(rect({0.5, 0.0, 4.0}, x, y, 3.5, 2.4));
    l.surfaces.push_back(rect({-0.3, 0.1, 2.5}, x, y, 0.6, 0.7));
  } else if (name == "room-box") {
    l.default_spacing = 0.04;
    // Open towards the camera; the sides start 1 m ahead so that no splat
    // sits next to the near clip.
    l.surfaces.push_back(rect({1.0, 0.0, 5.0}, x, y, 3.0, 1.6));   // back
    l.surfaces.push_back(rect({-2.0, 0.0, 3.0}, z, y, 2.0, 1.6));  // left
    l.surfaces.push_back(rect({4.0, 0.0, 3.0}, z, y, 2.0, 1.6));   // right
    l.surfaces.push_back(rect({1.0, 1.6, 3.0}, x, z, 3.0, 2.0));   // floor
    l.surfaces.push_back(rect({1.0, -1.6, 3.0}, x, z, 3.0, 2.0));  // ceiling
  } else if (name == "textured-wall") {
    l.surfaces.push_back(rect({0.5, 0.0, 3.5}, x, y, 3.2, 2.2));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown layout '" + name + "'");
  }
  // Only the box's back wall faces the start pose head-on.
  const size_t tilted = name == "room-box" ? 1 : l.surfaces.size();
  for (size_t i = 0; i < tilted; ++i) {
    l.surfaces[i].u = surface_tilt() * l.surfaces[i].u;
    l.surfaces[i].v = surface_tilt() * l.surfaces[i].v;
  }
  if (name == "two-planes") {
    // Wall patch straddling the panel edge, partly occluded by it along the orbit.
    const SceneRect& wall = l.surfaces[0];
    l.voids.push_back({wall.center + 0.1 * wall.v, wall.u, wall.v, 0.5, 0.6});
  }
  return l;
}

// Smooth sideways dolly with a slight forward drift, bob and re-aiming yaw.
Trajectory build_trajectory(int frames, double rate) {
  Trajectory traj;
  for (int k = 0; k < frames; ++k) {
    const double s = frames > 1 ? static_cast<double>(k) / (frames - 1) : 0.0;
    const double pi = std::numbers::pi;
    const Vec3 t(1.8 * s, 0.12 * std::sin(2.0 * pi * s), 0.5 * s);
    const double yaw = -0.15 * s;
    const double pitch = 0.04 * std::sin(pi * s);
    const double roll = 0.02 * std::sin(2.0 * pi * s);
    const Mat3 r = (Eigen::AngleAxisd(yaw, Vec3::UnitY()) * Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                    Eigen::AngleAxisd(roll, Vec3::UnitZ()))
                       .toRotationMatrix();
    traj.push_back(static_cast<double>(k) / rate, SE3Pose(r, t));
  }
  return traj;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SyntheticOptions& options) {
  if (!is_known_layout(options.layout)) {
    throw Error(ErrorCode::kInvalidArgument, "unknown layout '" + options.layout + "'");
  }
  if (options.width < 16 || options.height < 16 || options.frames < 1 ||
      !(options.frame_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic scene needs >= 16x16 pixels and >= 1 frame");
  }
  if (!(options.footprint > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic footprint must be positive");
  }
  const Layout layout = build_layout(options.layout);
  SyntheticScene scene;
  scene.layout = options.layout;
  scene.seed = options.seed;
  scene.surfaces = layout.surfaces;
  scene.cloud_voids = layout.voids;

  // Focal length keeps a ~65 degree horizontal field of view at any resolution.
  const double f = 250.0 * options.width / 320.0;
  scene.camera = {f, f, (options.width - 1) / 2.0, (options.height - 1) / 2.0, options.width,
                  options.height};

  double spacing = options.spacing > 0.0 ? options.spacing : layout.default_spacing;
  if (options.target_gaussians > 0) {
    double area = 0.0;
    for (const auto& s : layout.surfaces) area += 4.0 * s.half_u * s.half_v;
    spacing = std::sqrt(area / options.target_gaussians);
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (size_t si = 0; si < layout.surfaces.size(); ++si) {
    const SceneRect& s = layout.surfaces[si];
    const int nu = std::max(1, static_cast<int>(std::lround(2.0 * s.half_u / spacing)));
    const int nv = std::max(1, static_cast<int>(std::lround(2.0 * s.half_v / spacing)));
    const double du = 2.0 * s.half_u / nu;
    const double dv = 2.0 * s.half_v / nv;
    Mat3 frame;
    frame << s.u, s.v, s.normal();
    const Eigen::Quaterniond q(frame);
    for (int j = 0; j < nv; ++j) {
      for (int i = 0; i < nu; ++i) {
        const double a = -s.half_u + (i + 0.5 + jitter(rng)) * du;
        const double b = -s.half_v + (j + 0.5 + jitter(rng)) * dv;
        Gaussian3D g;
        g.position = s.center + a * s.u + b * s.v;
        g.scale = Vec3(options.footprint * du, options.footprint * dv,
                       std::max(0.05 * std::min(du, dv), 1e-4));
        g.rotation = q.normalized();
        g.opacity = 0.85;
        const Vec3 w = g.position;
        g.color = texture(w.dot(s.u), w.dot(s.v), options.seed, si);
        scene.map.gaussians.push_back(g);
        const bool in_void = std::any_of(layout.voids.begin(), layout.voids.end(),
                                         [&](const SceneRect& r) { return r.contains(w, 1e-6); });
        if (!in_void) scene.cloud.push_back(w);
      }
    }
  }

  scene.trajectory = build_trajectory(options.frames, options.frame_rate);
  if (options.render_views) {
    for (size_t k = 0; k < scene.trajectory.size(); ++k) {
      RenderedView v = render(scene.map, scene.trajectory[k].pose.inverse(), scene.camera,
                              options.render);
      double coverage = 0.0;
      for (double a : v.alpha.data) coverage += a;
      coverage /= static_cast<double>(v.alpha.data.size());
      if (!(coverage > 0.8)) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("synthetic pose {} has alpha coverage {:.3f}", k, coverage));
      }
      scene.views.push_back(std::move(v));
    }
  }
  return scene;
}

namespace {

// Nearest ray hit: (t, surface index) with t the camera z-depth, or t = 0.
std::pair<double, int> cast(const std::vector<SceneRect>& surfaces, const Vec3& origin,
                            const Vec3& dir) {
  double best = 0.0;
  int hit = -1;
  for (size_t i = 0; i < surfaces.size(); ++i) {
    const SceneRect& s = surfaces[i];
    const Vec3 n = s.normal();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = n.dot(s.center - origin) / denom;
    if (!(t > 0.0) || (hit >= 0 && t >= best)) continue;
    const Vec3 p = origin + t * dir;
    const Vec3 d = p - s.center;
    if (std::abs(d.dot(s.u)) > s.half_u || std::abs(d.dot(s.v)) > s.half_v) continue;
    best = t;
    hit = static_cast<int>(i);
  }
  return {best, hit};
}

}  // namespace

ScalarImage analytic_depth(const std::vector<SceneRect>& surfaces, const SE3Pose& world_to_camera,
                           const PinholeCamera& camera) {
  const SE3Pose c2w = world_to_camera.inverse();
  ScalarImage depth(camera.width, camera.height, 0.0);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      // Ray with unit camera z so the hit parameter is the z-depth.
      const Vec3 d((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
      depth(x, y) = cast(surfaces, c2w.translation(), c2w.rotation() * d).first;
    }
  }
  return depth;
}

std::vector<bool> region_mask(const std::vector<SceneRect>& surfaces,
                              const std::vector<SceneRect>& regions,
                              const SE3Pose& world_to_camera, const PinholeCamera& camera) {
  const SE3Pose c2w = world_to_camera.inverse();
  std::vector<bool> mask(static_cast<size_t>(camera.width) * camera.height, false);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Vec3 d((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
      const Vec3 dir = c2w.rotation() * d;
      const auto [t, hit] = cast(surfaces, c2w.translation(), dir);
      if (hit < 0) continue;
      const Vec3 p = c2w.translation() + t * dir;
      mask[static_cast<size_t>(y) * camera.width + x] =
          std::any_of(regions.begin(), regions.end(),
                      [&](const SceneRect& r) { return r.contains(p, 1e-6); });
    }
  }
  return mask;
}

}  // namespace gsvo
