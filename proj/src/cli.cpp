// SPDX-License-Identifier: Apache-2.0
#include "gsvo/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "gsvo/dataset.hpp"
#include "gsvo/depth_nn.hpp"
#include "gsvo/error.hpp"
#include "gsvo/image_io.hpp"
#include "gsvo/map_fitter.hpp"
#include "gsvo/metrics.hpp"
#include "gsvo/odometry.hpp"
#include "gsvo/ply.hpp"
#include "gsvo/render.hpp"
#include "gsvo/synthetic.hpp"
#include "gsvo/trajectory.hpp"

namespace gsvo {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  OdometryConfig odometry;
  FitConfig fit;
  RenderOptions render;
  std::string align = "none";
  double delta = kDefaultRelativeDelta;
  double max_dt = kDefaultAssociationWindow;
  double nn_radius = kDefaultNnRadius;
  int threads = 0;
};

std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }

template <typename T>
void parse_number(const std::string& text, T& out, const std::string& key) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  out = value;
}

void parse_value(const std::string& text, double& out, const std::string& key) {
  parse_number(text, out, key);
}
void parse_value(const std::string& text, int& out, const std::string& key) {
  parse_number(text, out, key);
}
void parse_value(const std::string& text, uint64_t& out, const std::string& key) {
  parse_number(text, out, key);
}
void parse_value(const std::string& text, bool& out, const std::string& key) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw UsageError(fmt::format("{}: expected true or false, got '{}'", key, text));
  }
}
void parse_value(const std::string& text, std::string& out, const std::string&) { out = text; }

struct SettingKey {
  std::string name;
  std::function<std::string(Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

template <typename Access>
SettingKey setting(std::string name, Access access) {
  return {name, [access](Settings& s) { return format_value(access(s)); },
          [access, name](Settings& s, const std::string& v) { parse_value(v, access(s), name); }};
}

#define GSVO_KEY(name, expr) setting(name, [](Settings& s) -> auto& { return expr; })

const std::vector<SettingKey>& setting_keys() {
  static const std::vector<SettingKey> keys = {
      GSVO_KEY("odometry.gradient_threshold", s.odometry.gradient_threshold),
      GSVO_KEY("odometry.target_points", s.odometry.target_points),
      GSVO_KEY("odometry.pyramid_levels", s.odometry.pyramid_levels),
      GSVO_KEY("odometry.huber_delta", s.odometry.huber_delta),
      GSVO_KEY("odometry.gradient_weight_c", s.odometry.gradient_weight_c),
      GSVO_KEY("odometry.alpha_valid", s.odometry.alpha_valid),
      GSVO_KEY("odometry.depth_edge_jump", s.odometry.depth_edge_jump),
      GSVO_KEY("odometry.keyframe_flow", s.odometry.keyframe_flow),
      GSVO_KEY("odometry.inlier_floor", s.odometry.inlier_floor),
      GSVO_KEY("odometry.max_keyframe_gap", s.odometry.max_keyframe_gap),
      GSVO_KEY("odometry.window_size", s.odometry.window_size),
      GSVO_KEY("odometry.max_iterations", s.odometry.max_iterations),
      GSVO_KEY("odometry.convergence_step", s.odometry.convergence_step),
      GSVO_KEY("odometry.window_iterations", s.odometry.window_iterations),
      GSVO_KEY("odometry.estimate_affine", s.odometry.estimate_affine),
      GSVO_KEY("odometry.affine_prior", s.odometry.affine_prior),
      GSVO_KEY("fit.iterations", s.fit.iterations),
      GSVO_KEY("fit.lambda_ssim", s.fit.lambda_ssim),
      GSVO_KEY("fit.ssim_window", s.fit.ssim_window),
      GSVO_KEY("fit.rng_seed", s.fit.rng_seed),
      GSVO_KEY("fit.normalize_color_loss", s.fit.normalize_color_loss),
      GSVO_KEY("fit.lr_position", s.fit.lr.position),
      GSVO_KEY("fit.lr_position_final_ratio", s.fit.lr.position_final_ratio),
      GSVO_KEY("fit.lr_log_scale", s.fit.lr.log_scale),
      GSVO_KEY("fit.lr_rotation", s.fit.lr.rotation),
      GSVO_KEY("fit.lr_logit_opacity", s.fit.lr.logit_opacity),
      GSVO_KEY("fit.lr_color", s.fit.lr.color),
      GSVO_KEY("fit.adam_beta1", s.fit.adam_beta1),
      GSVO_KEY("fit.adam_beta2", s.fit.adam_beta2),
      GSVO_KEY("fit.adam_epsilon", s.fit.adam_epsilon),
      GSVO_KEY("render.early_stop_transmittance", s.render.early_stop_transmittance),
      GSVO_KEY("render.cutoff_sigma", s.render.cutoff_sigma),
      GSVO_KEY("eval.align", s.align),
      GSVO_KEY("eval.delta", s.delta),
      GSVO_KEY("eval.max_dt", s.max_dt),
      GSVO_KEY("ablate.nn_radius", s.nn_radius),
  };
  return keys;
}

#undef GSVO_KEY

void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  for (const auto& k : setting_keys()) {
    if (k.name == key) {
      k.set(s, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> snapshot(Settings s) {
  std::map<std::string, std::string> out;
  for (const auto& k : setting_keys()) out[k.name] = k.get(s);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key = value lines; "[section]" prefixes the keys below it with "section.".
void apply_config_file(Settings& s, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("{}:{}: expected key = value", path.string(), line_no));
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (!section.empty()) key = section + "." + key;
    try {
      apply_setting(s, key, value);
    } catch (const UsageError& e) {
      throw UsageError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
}

void validate_settings(Settings& s) {
  try {
    s.odometry.validate();
    s.fit.validate();
    parse_alignment(s.align);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!(s.render.cutoff_sigma > 0.0)) throw UsageError("render.cutoff_sigma must be positive");
  if (!(s.render.early_stop_transmittance >= 0.0 && s.render.early_stop_transmittance < 1.0)) {
    throw UsageError("render.early_stop_transmittance must be in [0,1)");
  }
  if (!(s.delta > 0.0)) throw UsageError("eval.delta must be positive");
  if (!(s.max_dt > 0.0)) throw UsageError("eval.max_dt must be positive");
  if (!(s.nn_radius > 0.0)) throw UsageError("ablate.nn_radius must be positive");
  if (s.threads < 0) throw UsageError("--threads must be >= 0");
  s.render.threads = s.threads;
  s.odometry.threads = s.threads;
  s.fit.render = s.render;
}

class StageTimer {
 public:
  void start(const std::string& stage) {
    stop();
    stage_ = stage;
    begin_ = std::chrono::steady_clock::now();
  }
  void stop() {
    if (stage_.empty()) return;
    timings_[stage_] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - begin_).count();
    stage_.clear();
  }
  Json json() {
    stop();
    return timings_;
  }

 private:
  std::string stage_;
  std::chrono::steady_clock::time_point begin_;
  Json timings_ = Json::object();
};

struct Invocation {
  std::string command;
  std::vector<std::string> args;  // without --config, which the snapshot replaces
  Settings settings;
};

void write_manifest(const fs::path& path, const Invocation& inv, const Json& inputs,
                    const Json& seeds, StageTimer& timer) {
  Json m;
  m["tool"] = "gsvo";
  m["version"] = std::string(kToolVersion);
  m["command"] = inv.command;
  m["args"] = inv.args;
  m["config"] = snapshot(inv.settings);
  m["threads"] = inv.settings.threads;
  m["inputs"] = inputs;
  m["seeds"] = seeds;
  m["timings"] = timer.json();
  write_file_atomic(path, m.dump(2) + "\n");
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.stem().string() + suffix);
}

SE3Pose parse_pose(const std::string& text) {
  std::istringstream in(text);
  double v[7];
  for (double& x : v) {
    if (!(in >> x)) throw UsageError("pose needs 7 numbers 'tx ty tz qx qy qz qw'");
  }
  std::string extra;
  if (in >> extra) throw UsageError("pose needs exactly 7 numbers");
  const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (!std::isfinite(q.norm()) || q.norm() < 1e-9) throw UsageError("pose quaternion is zero");
  return {q.normalized(), Vec3(v[0], v[1], v[2])};
}

std::vector<Vec3> positions(const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(p.position);
  return out;
}

bool is_data_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::kMissingFile:
    case ErrorCode::kMalformedLine:
    case ErrorCode::kMalformedHeader:
    case ErrorCode::kTruncatedBody:
    case ErrorCode::kUnknownSchema:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kIo:
      return true;
    default:
      return false;
  }
}

int exit_code_for(ErrorCode c) {
  if (c == ErrorCode::kDiverged) return kExitDiverged;
  if (c == ErrorCode::kTrackingLost) return kExitTrackingLost;
  return kExitData;
}

SE3Pose first_pose(const SequenceDataset& ds, const Settings& s,
                   const std::optional<std::string>& init_pose) {
  if (init_pose) return parse_pose(*init_pose);
  if (ds.frames.empty()) throw Error(ErrorCode::kMalformedLine, "rgb.txt lists no frames");
  const long gt = ds.ground_truth.nearest(ds.frames[0].timestamp, s.max_dt);
  if (gt < 0) {
    throw Error(ErrorCode::kNoAssociation,
                fmt::format("no ground-truth pose within {} s of the first frame", s.max_dt));
  }
  return ds.ground_truth[static_cast<size_t>(gt)].pose;
}

FrameSequence frame_sequence(const SequenceDataset& ds) {
  FrameSequence seq;
  for (const auto& f : ds.frames) seq.timestamps.push_back(f.timestamp);
  seq.load = [&ds](size_t i) { return ds.load_image(i).to_gray(); };
  return seq;
}

std::string status_csv(const OdometryResult& res, const FrameSequence& seq) {
  std::string out = "frame,timestamp,state,energy,inlier_fraction\n";
  for (const auto& st : res.statuses) {
    out += fmt::format("{},{:.6f},{},{:.9g},{:.6f}\n", st.frame, seq.timestamps[st.frame],
                       to_string(st.state), st.energy, st.inlier_fraction);
  }
  return out;
}

Json metrics_json(const MetricReport& r) { return Json::parse(report_json(r)); }

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string dataset;
  std::string out;
  std::optional<int> iters;
  std::optional<double> lambda_ssim;
  std::optional<uint64_t> seed;
  int stride = 1;
};

int cmd_fit_map(const Invocation& inv, const FitArgs& a) {
  const Settings& s = inv.settings;
  StageTimer timer;
  timer.start("load");
  const SequenceDataset ds = load_sequence(a.dataset);
  const PointCloud cloud = load_point_cloud(ds.point_cloud_path);
  std::vector<TrainingView> views;
  for (size_t i = 0; i < ds.frames.size(); i += static_cast<size_t>(a.stride)) {
    const long gt = ds.ground_truth.nearest(ds.frames[i].timestamp, s.max_dt);
    if (gt < 0) continue;
    views.push_back({ds.load_image(i), ds.ground_truth[static_cast<size_t>(gt)].pose.inverse(),
                     ds.camera});
  }
  if (views.empty()) {
    throw Error(ErrorCode::kNoAssociation, "no frame has a ground-truth pose to fit against");
  }

  timer.start("fit");
  std::string loss_csv = "iteration,view_index,l_c,l_c_raw,l_ssim,l\n";
  const GaussianMap init = init_from_pointcloud(cloud, s.fit.rng_seed);
  const FitResult result = fit(init, views, s.fit, [&](const FitRecord& r) {
    loss_csv += fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.iteration, r.view_index,
                            r.loss.color_normalized, r.loss.color_raw, r.loss.ssim_loss,
                            r.loss.total);
  });

  timer.start("write");
  const fs::path out(a.out);
  write_gaussian_ply(out, result.map);
  write_file_atomic(sibling(out, "_loss.csv"), loss_csv);
  const double first = result.history.empty() ? 0.0 : result.history.front().loss.total;
  const double last = result.history.empty() ? 0.0 : result.history.back().loss.total;
  fmt::print(stderr, "fit-map: {} gaussians, {} views, loss {:.6g} -> {:.6g}\n",
             result.map.size(), views.size(), first, last);
  write_manifest(sibling(out, ".manifest.json"), inv,
                 {{"dataset", fs::absolute(a.dataset).string()},
                  {"cloud", ds.point_cloud_path.string()}},
                 {{"fit.rng_seed", s.fit.rng_seed}}, timer);
  return kExitOk;
}

struct TrackArgs {
  std::string dataset;
  std::string map;
  std::string out;
  std::optional<std::string> init_pose;
};

int cmd_track(const Invocation& inv, const TrackArgs& a) {
  const Settings& s = inv.settings;
  StageTimer timer;
  timer.start("load");
  const SequenceDataset ds = load_sequence(a.dataset);
  const GaussianMap map = load_gaussian_map(a.map);
  map.validate();
  const SE3Pose start = first_pose(ds, s, a.init_pose);
  const FrameSequence seq = frame_sequence(ds);

  timer.start("track");
  const OdometryResult res =
      run_odometry(seq, splat_depth_source(map, ds.camera, s.render), start, ds.camera, s.odometry);

  timer.start("write");
  const fs::path out(a.out);
  write_tum_trajectory(out, res.trajectory);
  write_file_atomic(sibling(out, "_status.csv"), status_csv(res, seq));
  write_manifest(sibling(out, ".manifest.json"), inv,
                 {{"dataset", fs::absolute(a.dataset).string()},
                  {"map", fs::absolute(a.map).string()}},
                 Json::object(), timer);
  if (res.error) {
    fmt::print(stderr, "track: stopped at frame {}: {}\n", res.error->frame, res.error->message);
    return is_data_error(res.error->code) ? kExitData : kExitTrackingLost;
  }
  fmt::print(stderr, "track: {} frames, {} keyframes\n", res.trajectory.size(),
             res.keyframes.size());
  return kExitOk;
}

struct RenderArgs {
  std::string map;
  std::string camera;
  std::string out;
  std::optional<std::string> pose;
  std::optional<std::string> trajectory;
  size_t index = 0;
};

int cmd_render(const Invocation& inv, const RenderArgs& a) {
  if (a.pose.has_value() == a.trajectory.has_value()) {
    throw UsageError("give exactly one of --pose or --trajectory");
  }
  SE3Pose camera_to_world;
  if (a.pose) camera_to_world = parse_pose(*a.pose);
  StageTimer timer;
  timer.start("load");
  const GaussianMap map = load_gaussian_map(a.map);
  map.validate();
  const PinholeCamera camera = read_camera_file(a.camera);
  if (a.trajectory) {
    const Trajectory traj = read_tum_trajectory(*a.trajectory);
    if (a.index >= traj.size()) {
      throw UsageError(fmt::format("--index {} outside trajectory of {} poses", a.index,
                                   traj.size()));
    }
    camera_to_world = traj[a.index].pose;
  }

  timer.start("render");
  const RenderedView view = render(map, camera_to_world.inverse(), camera, inv.settings.render);

  timer.start("write");
  const std::string prefix = a.out;
  write_png(prefix + "_color.png", view.color);
  write_pfm(prefix + "_depth.pfm", view.depth);
  write_pfm(prefix + "_alpha.pfm", view.alpha);
  Json inputs = {{"map", fs::absolute(a.map).string()}, {"camera", fs::absolute(a.camera).string()}};
  if (a.trajectory) inputs["trajectory"] = fs::absolute(*a.trajectory).string();
  write_manifest(prefix + "_manifest.json", inv, inputs, Json::object(), timer);
  return kExitOk;
}

struct EvalArgs {
  std::string est;
  std::string ref;
  std::optional<std::string> align;
  std::optional<double> delta;
  std::optional<double> max_dt;
  std::optional<std::string> out;
  std::optional<std::string> dump_xyz;
};

std::string xyz_dump(const Trajectory& est, const Trajectory& ref, const AteResult& ate,
                     double max_dt) {
  std::string out = "# timestamp est_x est_y est_z ref_x ref_y ref_z\n";
  for (const auto& p : associate(est, ref, max_dt)) {
    const Vec3 e = (ate.alignment * est[p.estimate].pose.translation().homogeneous()).head<3>();
    const Vec3& r = ref[p.reference].pose.translation();
    out += fmt::format("{:.6f} {:.9f} {:.9f} {:.9f} {:.9f} {:.9f} {:.9f}\n",
                       est[p.estimate].timestamp, e.x(), e.y(), e.z(), r.x(), r.y(), r.z());
  }
  return out;
}

int cmd_eval(const Invocation& inv, const EvalArgs& a) {
  const Settings& s = inv.settings;
  StageTimer timer;
  timer.start("load");
  const Trajectory est = read_tum_trajectory(a.est);
  const Trajectory ref = read_tum_trajectory(a.ref);
  timer.start("evaluate");
  const MetricReport report =
      evaluate_trajectory(est, ref, parse_alignment(s.align), s.delta, s.max_dt);
  const std::string json = report_json(report);
  fmt::print("{}\n", json);
  timer.start("write");
  if (a.dump_xyz) write_file_atomic(*a.dump_xyz, xyz_dump(est, ref, report.ate, s.max_dt));
  if (a.out) {
    write_file_atomic(*a.out + ".json", json + "\n");
    write_file_atomic(*a.out + "_errors.csv", report_csv(report));
    write_manifest(*a.out + ".manifest.json", inv,
                   {{"est", fs::absolute(a.est).string()}, {"ref", fs::absolute(a.ref).string()}},
                   Json::object(), timer);
  }
  return kExitOk;
}

struct AblateArgs {
  std::string dataset;
  std::string map;
  std::string cloud;
  std::string out;
};

ScalarImage normalized_depth(const DepthMaps& d, double alpha_valid) {
  ScalarImage out(d.depth.width, d.depth.height);
  for (size_t i = 0; i < out.data.size(); ++i) {
    if (d.alpha.data[i] >= alpha_valid) out.data[i] = d.depth.data[i] / d.alpha.data[i];
  }
  return out;
}

// Root-mean-square difference over pixels where both maps are valid.
std::optional<double> depth_rmse(const ScalarImage& a, const ScalarImage& b) {
  double se = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] > 0.0 && b.data[i] > 0.0) {
      const double d = a.data[i] - b.data[i];
      se += d * d;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(se / static_cast<double>(n));
}

GrayImage side_by_side(const std::vector<ScalarImage>& panels) {
  double max_depth = 0.0;
  for (const auto& p : panels) {
    for (double d : p.data) {
      if (std::isfinite(d)) max_depth = std::max(max_depth, d);
    }
  }
  if (!(max_depth > 0.0)) max_depth = 1.0;
  const int w = panels.front().width;
  const int h = panels.front().height;
  GrayImage out(w * static_cast<int>(panels.size()), h);
  for (size_t k = 0; k < panels.size(); ++k) {
    const GrayImage g = depth_to_gray(panels[k], max_depth);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(static_cast<int>(k) * w + x, y) = g(x, y);
    }
  }
  return out;
}

int cmd_ablate(const Invocation& inv, const AblateArgs& a) {
  Settings s = inv.settings;
  s.odometry.record_keyframe_depth = true;
  StageTimer timer;
  timer.start("load");
  const SequenceDataset ds = load_sequence(a.dataset);
  const GaussianMap map = load_gaussian_map(a.map);
  map.validate();
  const std::vector<Vec3> cloud = positions(load_point_cloud(a.cloud));
  const SE3Pose start = first_pose(ds, s, std::nullopt);
  const FrameSequence seq = frame_sequence(ds);
  const fs::path out(a.out);
  fs::create_directories(out / "keyframes");

  auto gt_depth = [&](size_t frame) -> std::optional<ScalarImage> {
    const fs::path p = ds.root / "depth" / (ds.frames[frame].image_path.stem().string() + ".pfm");
    if (!fs::is_regular_file(p)) return std::nullopt;
    return read_pfm(p);
  };

  struct Arm {
    std::string name;
    DepthSource source;
    std::optional<OdometryResult> result;
    std::string failure;
  };
  std::vector<Arm> arms = {{"splat", splat_depth_source(map, ds.camera, s.render), {}, {}},
                           {"interp", nn_depth_source(cloud, ds.camera, s.nn_radius), {}, {}}};

  Json summary;
  summary["arms"] = Json::object();
  for (auto& arm : arms) {
    timer.start("track_" + arm.name);
    Json j;
    try {
      arm.result = run_odometry(seq, arm.source, start, ds.camera, s.odometry);
    } catch (const Error& e) {
      arm.failure = e.what();
    }
    if (!arm.result) {
      j["status"] = "failed";
      j["error"] = arm.failure;
      summary["arms"][arm.name] = j;
      continue;
    }
    const OdometryResult& res = *arm.result;
    write_tum_trajectory(out / (arm.name + "_traj.txt"), res.trajectory);
    write_file_atomic(out / (arm.name + "_status.csv"), status_csv(res, seq));
    j["status"] = res.error ? "lost" : "completed";
    j["error"] = res.error ? Json(res.error->message) : Json(nullptr);
    j["frames_tracked"] = res.trajectory.size();
    j["keyframes"] = res.keyframes.size();
    try {
      const MetricReport report = evaluate_trajectory(res.trajectory, ds.ground_truth,
                                                      parse_alignment(s.align), s.delta, s.max_dt);
      write_file_atomic(out / (arm.name + "_metrics.json"), report_json(report) + "\n");
      j["metrics"] = metrics_json(report);
    } catch (const Error& e) {
      j["metrics"] = nullptr;
    }
    double se = 0.0;
    double weight = 0.0;
    for (const auto& kr : res.keyframes) {
      const auto gt = gt_depth(kr.frame);
      if (!gt) continue;
      const auto r = depth_rmse(normalized_depth({kr.depth, kr.alpha}, s.odometry.alpha_valid), *gt);
      if (!r) continue;
      se += *r * *r;
      weight += 1.0;
    }
    j["keyframe_depth_rmse"] = weight > 0.0 ? Json(std::sqrt(se / weight)) : Json(nullptr);
    summary["arms"][arm.name] = j;
  }

  // Depth triplets at the keyframes of whichever arm got further.
  timer.start("depth_maps");
  const OdometryResult* ref_arm = nullptr;
  for (const auto& arm : arms) {
    if (arm.result && (!ref_arm || arm.result->keyframes.size() > ref_arm->keyframes.size())) {
      ref_arm = &*arm.result;
    }
  }
  if (ref_arm) {
    for (const auto& kr : ref_arm->keyframes) {
      const SE3Pose w2c = kr.render_pose.inverse();
      std::vector<ScalarImage> panels;
      for (auto& arm : arms) {
        ScalarImage d(ds.camera.width, ds.camera.height);
        try {
          d = normalized_depth(arm.source(w2c), s.odometry.alpha_valid);
        } catch (const Error&) {
        }
        write_pfm(out / "keyframes" / fmt::format("{:06d}_{}.pfm", kr.frame, arm.name), d);
        panels.push_back(std::move(d));
      }
      std::swap(panels[0], panels[1]);  // interpolated | splatted | ground truth
      if (auto gt = gt_depth(kr.frame)) panels.push_back(std::move(*gt));
      write_png(out / "keyframes" / fmt::format("{:06d}.png", kr.frame), side_by_side(panels));
    }
  }

  write_file_atomic(out / "ablation.json", summary.dump(2) + "\n");
  fmt::print("{}\n", summary.dump());
  write_manifest(out / "manifest.json", inv,
                 {{"dataset", fs::absolute(a.dataset).string()},
                  {"map", fs::absolute(a.map).string()},
                  {"cloud", fs::absolute(a.cloud).string()}},
                 Json::object(), timer);
  return kExitOk;
}

struct SynthArgs {
  std::string layout;
  uint64_t seed = 0;
  std::string out;
  int frames = 50;
  int width = 320;
  int height = 240;
  int gaussians = 0;
  double footprint = SyntheticOptions{}.footprint;
};

int cmd_synth(const Invocation& inv, const SynthArgs& a) {
  if (!is_known_layout(a.layout)) throw UsageError("unknown layout '" + a.layout + "'");
  SyntheticOptions opt;
  opt.layout = a.layout;
  opt.seed = a.seed;
  opt.frames = a.frames;
  opt.width = a.width;
  opt.height = a.height;
  opt.target_gaussians = a.gaussians;
  opt.footprint = a.footprint;
  opt.render = inv.settings.render;
  StageTimer timer;
  timer.start("generate");
  SyntheticScene scene;
  try {
    scene = make_synthetic_scene(opt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw UsageError(e.what());
    throw;
  }

  timer.start("write");
  const fs::path out(a.out);
  fs::create_directories(out / "rgb");
  fs::create_directories(out / "depth");
  std::string rgb_list = "# timestamp filename\n";
  for (size_t i = 0; i < scene.views.size(); ++i) {
    const std::string name = fmt::format("{:06d}", i);
    write_png(out / "rgb" / (name + ".png"), scene.views[i].color);
    write_pfm(out / "depth" / (name + ".pfm"),
              analytic_depth(scene.surfaces, scene.trajectory[i].pose.inverse(), scene.camera));
    rgb_list += fmt::format("{:.6f} rgb/{}.png\n", scene.trajectory[i].timestamp, name);
  }
  write_file_atomic(out / "rgb.txt", rgb_list);
  write_tum_trajectory(out / "groundtruth.txt", scene.trajectory);
  write_file_atomic(out / "camera.txt", format_camera(scene.camera));
  PointCloud cloud;
  for (const Vec3& p : scene.cloud) cloud.push_back({p, std::nullopt});
  write_point_cloud_ply(out / "cloud.ply", cloud);
  write_gaussian_ply(out / "map.ply", scene.map);
  write_manifest(out / "manifest.json", inv, Json::object(), {{"scene_seed", a.seed}}, timer);
  fmt::print(stderr, "synth: {} frames, {} gaussians, {} cloud points -> {}\n",
             scene.views.size(), scene.map.size(), cloud.size(), out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

constexpr const char* kUsage =
    "usage: gsvo <command> [options]\n"
    "\n"
    "commands:\n"
    "  fit-map   fit a Gaussian map to a dataset's images and poses\n"
    "  track     run odometry on a dataset against a prior map\n"
    "  render    render color, depth and alpha from a map\n"
    "  eval      compare an estimated trajectory with a reference\n"
    "  ablate    compare splatted and interpolated keyframe depth\n"
    "  synth     write a synthetic dataset\n"
    "  rerun     repeat a run from its manifest\n"
    "\n"
    "run 'gsvo <command> --help' for the options of a command.\n"
    "exit codes: 0 ok, 2 usage, 3 data error, 4 diverged, 5 tracking lost\n";

std::vector<std::string> strip_config_flag(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      ++i;
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

int run_command(const std::string& command, const std::vector<std::string>& args,
                const std::map<std::string, std::string>& base_config) {
  CLI::App app("gsvo " + command);
  app.name("gsvo " + command);
  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "key = value settings file")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads, 0 = all cores");

  FitArgs fit_args;
  TrackArgs track_args;
  RenderArgs render_args;
  EvalArgs eval_args;
  AblateArgs ablate_args;
  SynthArgs synth_args;

  if (command == "fit-map") {
    app.add_option("--dataset", fit_args.dataset, "dataset directory")->required();
    app.add_option("--out", fit_args.out, "output map PLY")->required();
    app.add_option("--iters", fit_args.iters, "optimizer iterations");
    app.add_option("--lambda-ssim", fit_args.lambda_ssim, "SSIM weight in [0,1]");
    app.add_option("--seed", fit_args.seed, "initialization seed");
    app.add_option("--stride", fit_args.stride, "use every n-th frame")
        ->check(CLI::PositiveNumber);
  } else if (command == "track") {
    app.add_option("--dataset", track_args.dataset, "dataset directory")->required();
    app.add_option("--map", track_args.map, "Gaussian map PLY")->required();
    app.add_option("--out", track_args.out, "output TUM trajectory")->required();
    app.add_option("--init-pose", track_args.init_pose,
                   "first camera-to-world pose 'tx ty tz qx qy qz qw'");
  } else if (command == "render") {
    app.add_option("--map", render_args.map, "Gaussian map PLY")->required();
    app.add_option("--camera", render_args.camera, "camera.txt")->required();
    app.add_option("--out", render_args.out, "output prefix")->required();
    app.add_option("--pose", render_args.pose, "camera-to-world pose 'tx ty tz qx qy qz qw'");
    app.add_option("--trajectory", render_args.trajectory, "TUM trajectory to take the pose from");
    app.add_option("--index", render_args.index, "pose index in --trajectory");
  } else if (command == "eval") {
    app.add_option("--est", eval_args.est, "estimated TUM trajectory")->required();
    app.add_option("--ref", eval_args.ref, "reference TUM trajectory")->required();
    app.add_option("--align", eval_args.align, "none, rigid or similarity");
    app.add_option("--delta", eval_args.delta, "relative error interval in seconds");
    app.add_option("--max-dt", eval_args.max_dt, "timestamp association window in seconds");
    app.add_option("--out", eval_args.out, "output prefix for JSON and per-frame CSV");
    app.add_option("--dump-xyz", eval_args.dump_xyz, "aligned positions for plotting");
  } else if (command == "ablate") {
    app.add_option("--dataset", ablate_args.dataset, "dataset directory")->required();
    app.add_option("--map", ablate_args.map, "Gaussian map PLY")->required();
    app.add_option("--cloud", ablate_args.cloud, "point cloud PLY")->required();
    app.add_option("--out", ablate_args.out, "output directory")->required();
  } else if (command == "synth") {
    app.add_option("--layout", synth_args.layout, "two-planes, room-box or textured-wall")
        ->required();
    app.add_option("--seed", synth_args.seed, "scene seed")->required();
    app.add_option("--out", synth_args.out, "output directory")->required();
    app.add_option("--frames", synth_args.frames, "number of poses");
    app.add_option("--width", synth_args.width, "image width");
    app.add_option("--height", synth_args.height, "image height");
    app.add_option("--gaussians", synth_args.gaussians, "approximate Gaussian count");
    app.add_option("--footprint", synth_args.footprint,
                   "in-plane Gaussian size as a fraction of the grid spacing");
  } else {
    fmt::print(stderr, "unknown command '{}'\n\n{}", command, kUsage);
    return kExitUsage;
  }

  Invocation inv;
  inv.command = command;
  inv.args = strip_config_flag(args);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    Settings& s = inv.settings;
    for (const auto& [k, v] : base_config) apply_setting(s, k, v);
    if (!config_path.empty()) apply_config_file(s, config_path);
    s.threads = threads;
    if (fit_args.iters) s.fit.iterations = *fit_args.iters;
    if (fit_args.lambda_ssim) s.fit.lambda_ssim = *fit_args.lambda_ssim;
    if (fit_args.seed) s.fit.rng_seed = *fit_args.seed;
    if (eval_args.align) s.align = *eval_args.align;
    if (eval_args.delta) s.delta = *eval_args.delta;
    if (eval_args.max_dt) s.max_dt = *eval_args.max_dt;
    validate_settings(s);
  } catch (const CLI::CallForHelp&) {
    fmt::print("{}", app.help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(stderr, "error: {}\n\n{}", e.what(), app.help());
    return kExitUsage;
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }

  try {
    if (command == "fit-map") return cmd_fit_map(inv, fit_args);
    if (command == "track") return cmd_track(inv, track_args);
    if (command == "render") return cmd_render(inv, render_args);
    if (command == "eval") return cmd_eval(inv, eval_args);
    if (command == "ablate") return cmd_ablate(inv, ablate_args);
    return cmd_synth(inv, synth_args);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
}

int cmd_rerun(const std::vector<std::string>& args) {
  CLI::App app("gsvo rerun");
  app.name("gsvo rerun");
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "manifest JSON written by an earlier run")
      ->required()
      ->check(CLI::ExistingFile);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    fmt::print("{}", app.help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(stderr, "error: {}\n\n{}", e.what(), app.help());
    return kExitUsage;
  }

  std::string command;
  std::vector<std::string> run_args;
  std::map<std::string, std::string> config;
  try {
    std::ifstream in(manifest_path);
    const Json m = Json::parse(in);
    command = m.at("command").get<std::string>();
    run_args = m.at("args").get<std::vector<std::string>>();
    config = m.at("config").get<std::map<std::string, std::string>>();
  } catch (const Json::exception& e) {
    fmt::print(stderr, "error: {}: {}\n", manifest_path, e.what());
    return kExitData;
  }
  if (command == "rerun") {
    fmt::print(stderr, "error: manifest names the rerun command\n");
    return kExitData;
  }
  return run_command(command, run_args, config);
}

}  // namespace

std::map<std::string, std::string> default_settings() { return snapshot(Settings{}); }

int run_cli(const std::vector<std::string>& args) {
  if (args.empty()) {
    fmt::print(stderr, "{}", kUsage);
    return kExitUsage;
  }
  if (args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
    fmt::print("{}", kUsage);
    return kExitOk;
  }
  if (args[0] == "--version") {
    fmt::print("gsvo {}\n", kToolVersion);
    return kExitOk;
  }
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  if (args[0] == "rerun") return cmd_rerun(rest);
  return run_command(args[0], rest, {});
}

}  // namespace gsvo
