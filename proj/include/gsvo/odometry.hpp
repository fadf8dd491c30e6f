// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsvo/error.hpp"
#include "gsvo/gaussian.hpp"
#include "gsvo/image.hpp"
#include "gsvo/render.hpp"
#include "gsvo/trajectory.hpp"

namespace gsvo {

inline constexpr int kPatternSize = 8;
/// Residual pattern offsets around each point, in pixels of the sampled level.
inline constexpr std::array<std::array<int, 2>, kPatternSize> kResidualPattern = {
    {{0, -2}, {-1, -1}, {1, -1}, {-2, 0}, {0, 0}, {2, 0}, {-1, 1}, {0, 2}}};
/// Points keep this distance from the image border at full resolution.
inline constexpr int kPatternMargin = 4;
inline constexpr int kExtractionBlock = 32;
/// Half-width of the window checked for depth discontinuities around a point.
inline constexpr int kDepthEdgeRadius = 6;
inline constexpr size_t kMinTrackPoints = 50;

struct OdometryConfig {
  /// Added to the per-block median gradient magnitude (intensities in [0,1]).
  double gradient_threshold = 7.0 / 255.0;
  int target_points = 2000;
  int pyramid_levels = 4;
  double huber_delta = 9.0 / 255.0;
  /// Gradient normalization constant c in 1 / (1 + |grad I|^2 / c^2).
  double gradient_weight_c = 50.0 / 255.0;
  double alpha_valid = 0.5;
  /// Points whose depth neighbourhood has an adjacent-pixel step larger than
  /// this fraction, or uncovered pixels, are dropped. Zero disables the test.
  double depth_edge_jump = 0.02;
  double keyframe_flow = 12.0;  // mean optical flow in pixels
  double inlier_floor = 0.6;
  int max_keyframe_gap = 60;
  int window_size = 7;
  int max_iterations = 20;
  double convergence_step = 1e-6;
  int window_iterations = 10;
  /// Estimate per-frame affine brightness I -> e^a I + b while tracking.
  bool estimate_affine = true;
  /// Weight of the zero prior on (a, b), per residual.
  double affine_prior = 0.1;
  /// Keep rendered keyframe depth/alpha maps in the result.
  bool record_keyframe_depth = false;
  int threads = 0;

  void validate() const;
};

/// Brightness transfer I_target ~ e^a I_source + b.
struct AffineBrightness {
  double a = 0.0;
  double b = 0.0;
};

struct TrackPoint {
  Vec2 pixel = Vec2::Zero();  // full-resolution host pixel
  double inv_depth = 1.0;
  int host_frame_id = 0;
  std::array<double, kPatternSize> pattern_intensities{};
};

/// `world_pose` maps camera to world coordinates.
struct Keyframe {
  int id = 0;
  size_t frame_index = 0;
  ImagePyramid pyramid;
  SE3Pose world_pose;
  /// Absolute brightness parameters relative to the first keyframe.
  AffineBrightness affine;
  std::vector<TrackPoint> points;
  ScalarImage depth_map;
  ScalarImage alpha_map;
};

struct TrackResult {
  SE3Pose relative_pose;  // T_ck: host camera -> current camera
  AffineBrightness affine;
  double energy = 0.0;
  double inlier_fraction = 0.0;
  bool converged = false;
};

/// Pixels selected over 32x32 blocks whose gradient magnitude exceeds the
/// block median plus `gradient_threshold`, strongest first, round-robin across
/// blocks up to the target count. Throws kTooSmallImage, kDegenerateImage.
std::vector<Vec2> extract_high_gradient_points(const GrayImage& image,
                                               const OdometryConfig& config);

/// inv_depth = alpha / depth at each pixel with alpha >= alpha_valid; others,
/// and pixels next to depth discontinuities, are dropped. Order is preserved.
/// Throws kDimensionMismatch, kNoValidDepth.
std::vector<TrackPoint> associate_depth(std::span<const Vec2> pixels, const ScalarImage& depth_map,
                                        const ScalarImage& alpha_map, const GrayImage& image,
                                        int host_frame_id, const OdometryConfig& config);

struct PhotometricResidual {
  Eigen::Matrix<double, kPatternSize, 1> residuals;
  /// Huber weight per residual times the point's gradient weight.
  Eigen::Matrix<double, kPatternSize, 1> weights;
  double gradient_weight = 1.0;
  /// d residual / d twist for T_ck <- exp(twist) T_ck.
  Eigen::Matrix<double, kPatternSize, 6> jacobian;
  /// d residual / d (a, b).
  Eigen::Matrix<double, kPatternSize, 2> affine_jacobian;
};

/// r_j = I_c(u'_j) - (e^a I_k(u_j) + b) over the residual pattern at `level`.
/// Throws kOutOfView when the pattern leaves either image or z <= 0.
PhotometricResidual photometric_residual(const TrackPoint& point, const Keyframe& host,
                                         const ImagePyramid& current, int level,
                                         const SE3Pose& relative_pose,
                                         const AffineBrightness& affine,
                                         const PinholeCamera& camera,
                                         const OdometryConfig& config);

/// Coarse-to-fine Gauss-Newton with step halving. Throws kTrackingLost when
/// the inlier fraction falls below the floor, the energy is non-finite or the
/// finest-level pose Hessian is degenerate; kInvalidArgument with < 50 points.
TrackResult track_frame(const Keyframe& host, const ImagePyramid& current,
                        const SE3Pose& initial_relative_pose, const PinholeCamera& camera,
                        const OdometryConfig& config,
                        const AffineBrightness& initial_affine = {});

/// Mean full-resolution flow of the host points under `result.relative_pose`.
double mean_flow(const TrackResult& result, const Keyframe& host, const PinholeCamera& camera);

bool is_keyframe(const TrackResult& result, const Keyframe& host, int frames_since_keyframe,
                 const PinholeCamera& camera, const OdometryConfig& config);

/// Joint photometric refinement of the window's world poses with the first
/// keyframe fixed; depths and brightness parameters stay fixed. Throws
/// kDegenerateWindow for fewer than 2 keyframes or singular normal equations.
std::vector<SE3Pose> window_optimize(std::span<const Keyframe> window,
                                     const PinholeCamera& camera, const OdometryConfig& config);

struct DepthMaps {
  ScalarImage depth;  // alpha-weighted depth
  ScalarImage alpha;
};

/// Depth provider queried with a world-to-camera pose for each new keyframe.
using DepthSource = std::function<DepthMaps(const SE3Pose& world_to_camera)>;

/// Splatted depth from `map`, which must outlive the returned source.
DepthSource splat_depth_source(const GaussianMap& map, const PinholeCamera& camera,
                               const RenderOptions& options = {});

/// Nearest-neighbour interpolated cloud depth with alpha 1 wherever depth is valid.
DepthSource nn_depth_source(std::vector<Vec3> cloud, const PinholeCamera& camera,
                            double radius = 15.0);

struct FrameSequence {
  std::vector<double> timestamps;
  std::function<GrayImage(size_t)> load;

  size_t size() const { return timestamps.size(); }
};

enum class FrameState { kTracked, kKeyframe, kLost };
std::string to_string(FrameState s);

struct FrameStatus {
  size_t frame = 0;
  FrameState state = FrameState::kTracked;
  double energy = 0.0;
  double inlier_fraction = 1.0;
};

struct KeyframeRecord {
  size_t frame = 0;
  SE3Pose render_pose;  // camera-to-world pose the depth was rendered at
  size_t num_points = 0;
  ScalarImage depth;  // filled when record_keyframe_depth is set
  ScalarImage alpha;
};

struct OdometryError {
  size_t frame = 0;
  ErrorCode code = ErrorCode::kTrackingLost;
  std::string message;
};

struct OdometryResult {
  Trajectory trajectory;  // camera-to-world, one entry per processed frame
  std::vector<FrameStatus> statuses;
  std::vector<KeyframeRecord> keyframes;
  std::optional<OdometryError> error;
};

/// Frame 0 becomes a keyframe at `first_pose` (camera-to-world); every later
/// frame is tracked against the newest keyframe from a constant-velocity
/// guess. Failures end the run with a partial trajectory and `error` set.
OdometryResult run_odometry(const FrameSequence& frames, const DepthSource& depth,
                            const SE3Pose& first_pose, const PinholeCamera& camera,
                            const OdometryConfig& config);

}  // namespace gsvo
