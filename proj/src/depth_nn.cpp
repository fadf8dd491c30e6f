// SPDX-License-Identifier: Apache-2.0
#include "gsvo/depth_nn.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "gsvo/error.hpp"

namespace gsvo {

ScalarImage zbuffer_depth(std::span<const Vec3> cloud, const SE3Pose& world_to_camera,
                          const PinholeCamera& camera) {
  ScalarImage depth(camera.width, camera.height, 0.0);
  for (const Vec3& pw : cloud) {
    const Vec3 pc = world_to_camera * pw;
    if (!(pc.z() > kMinProjectionDepth)) continue;
    const Vec2 uv = project_unchecked(camera, pc);
    const long x = std::lround(uv.x());
    const long y = std::lround(uv.y());
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) continue;
    double& d = depth(static_cast<int>(x), static_cast<int>(y));
    if (d == 0.0 || pc.z() < d) d = pc.z();
  }
  return depth;
}

ScalarImage interpolate_depth_nn(std::span<const Vec3> cloud, const SE3Pose& world_to_camera,
                                 const PinholeCamera& camera, double radius) {
  if (cloud.empty()) throw Error(ErrorCode::kEmptyCloud, "interpolate_depth_nn: empty cloud");
  const ScalarImage hits = zbuffer_depth(cloud, world_to_camera, camera);
  if (std::all_of(hits.data.begin(), hits.data.end(), [](double d) { return d == 0.0; })) {
    throw Error(ErrorCode::kEmptyProjection, "no cloud point projects into the image");
  }

  const int r = static_cast<int>(std::floor(radius));
  std::vector<std::tuple<int, int, int>> offsets;  // (squared distance, dy, dx)
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int d2 = dx * dx + dy * dy;
      if (d2 > 0 && d2 <= radius * radius) offsets.emplace_back(d2, dy, dx);
    }
  }
  std::sort(offsets.begin(), offsets.end());

  ScalarImage out = hits;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      if (hits(x, y) != 0.0) continue;
      for (const auto& [d2, dy, dx] : offsets) {
        const int sx = x + dx;
        const int sy = y + dy;
        if (sx < 0 || sy < 0 || sx >= camera.width || sy >= camera.height) continue;
        if (hits(sx, sy) != 0.0) {
          out(x, y) = hits(sx, sy);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace gsvo
