// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <variant>
#include <vector>

#include "gsvo/gaussian.hpp"
#include "gsvo/map_fitter.hpp"

namespace gsvo {

using PointCloud = std::vector<PointSample>;
using PlyContent = std::variant<PointCloud, GaussianMap>;

/// Reads binary little-endian or ASCII PLY. Vertices with the full Gaussian
/// property set load as a GaussianMap, plain x/y/z (+red/green/blue) as a
/// point cloud. Throws kMissingFile, kMalformedHeader, kTruncatedBody,
/// kUnknownSchema.
PlyContent load_ply(const std::filesystem::path& path);

/// Like load_ply but requires the given schema (kUnknownSchema otherwise).
GaussianMap load_gaussian_map(const std::filesystem::path& path);
PointCloud load_point_cloud(const std::filesystem::path& path);

/// Binary little-endian float32 Gaussian schema.
void write_gaussian_ply(const std::filesystem::path& path, const GaussianMap& map);

/// x/y/z float32 plus uchar red/green/blue when every point has a color.
void write_point_cloud_ply(const std::filesystem::path& path, const PointCloud& cloud,
                           bool binary = true);

}  // namespace gsvo
