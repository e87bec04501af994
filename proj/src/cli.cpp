#include "flownorm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flownorm/config_json.hpp"
#include "flownorm/png_io.hpp"

namespace flownorm {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile:
    case ErrorKind::MalformedLine:
    case ErrorKind::EmptyAssociation:
    case ErrorKind::TooSmallImage:
    case ErrorKind::TooFewPoints:
    case ErrorKind::MissingDepth:
    case ErrorKind::EmptyCalibration:
    case ErrorKind::InsufficientOverlap:
    case ErrorKind::InvalidConfig:
      return kExitInputError;
    case ErrorKind::NonConvergence:
      return kExitNonConvergence;
    case ErrorKind::DegenerateSystem:
    case ErrorKind::Internal:
      return kExitInternalError;
  }
  return kExitInternalError;
}

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedLine, path + ": " + e.what());
  }
  return j;
}

SE3Pose parse_pose_tum(const std::string& text) {
  std::istringstream ss(text);
  double tx, ty, tz, qx, qy, qz, qw;
  if (!(ss >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
    throw Error(ErrorKind::InvalidConfig, "pose must be \"tx ty tz qx qy qz qw\": " + text);
  }
  Eigen::Quaterniond q(qw, qx, qy, qz);
  if (q.norm() < 1e-6) throw Error(ErrorKind::InvalidConfig, "zero quaternion");
  return SE3Pose(q, Vec3(tx, ty, tz));
}

Vec3 parse_vec3(const std::string& text) {
  Vec3 v;
  char comma;
  std::istringstream ss(text);
  if (!(ss >> v.x() >> comma >> v.y() >> comma >> v.z())) {
    throw Error(ErrorKind::InvalidConfig, "expected \"x,y,z\": " + text);
  }
  return v;
}

std::string pose_to_tum(const SE3Pose& p) {
  char buf[256];
  const auto& q = p.rotation();
  std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g %.12g %.12g %.12g",
                p.translation().x(), p.translation().y(), p.translation().z(), q.x(), q.y(),
                q.z(), q.w());
  return buf;
}

FlowNormParams norm_params_from_json(const json& j, FlowNormParams base) {
  base.activation_radius_multiplier =
      j.value("activation_radius_multiplier", base.activation_radius_multiplier);
  base.tangent_radius_multiplier =
      j.value("tangent_radius_multiplier", base.tangent_radius_multiplier);
  base.min_weight = j.value("min_weight", base.min_weight);
  if (j.contains("mode")) base.mode = norm_mode_from_string(j["mode"].get<std::string>());
  return base;
}

SolverConfig solver_from_json(const json& j, SolverConfig base) {
  base.max_iterations_per_level = j.value("max_iterations_per_level", base.max_iterations_per_level);
  base.step_norm_threshold = j.value("step_norm_threshold", base.step_norm_threshold);
  base.lm_initial_lambda = j.value("lm_initial_lambda", base.lm_initial_lambda);
  base.lambda_up = j.value("lambda_up", base.lambda_up);
  base.lambda_down = j.value("lambda_down", base.lambda_down);
  base.pyramid_levels = j.value("pyramid_levels", base.pyramid_levels);
  if (j.contains("flownorm_levels")) {
    base.flownorm_levels = j["flownorm_levels"].get<std::vector<int>>();
  }
  base.huber_delta = j.value("huber_delta", base.huber_delta);
  if (j.contains("flow_norm")) base.flow_norm = norm_params_from_json(j["flow_norm"], base.flow_norm);
  base.residual.use_patch = j.value("use_patch", base.residual.use_patch);
  base.joint_depth = j.value("joint_depth", base.joint_depth);
  return base;
}

FlowProviderConfig provider_from_json(const json& j) {
  FlowProviderConfig p;
  if (j.contains("kind")) p.kind = flow_provider_from_string(j["kind"].get<std::string>());
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  if (j.contains("bias")) {
    const auto b = j["bias"].get<std::vector<double>>();
    if (b.size() != 2) throw Error(ErrorKind::InvalidConfig, "provider bias must be [x, y]");
    p.bias = Vec2(b[0], b[1]);
  }
  p.seed = j.value("seed", p.seed);
  if (j.contains("block_matching")) {
    const json& bm = j["block_matching"];
    p.block_matching.patch_size = bm.value("patch_size", p.block_matching.patch_size);
    p.block_matching.search_radius = bm.value("search_radius", p.block_matching.search_radius);
    p.block_matching.min_score = bm.value("min_score", p.block_matching.min_score);
    p.block_matching.grid_width = bm.value("grid_width", p.block_matching.grid_width);
    p.block_matching.grid_height = bm.value("grid_height", p.block_matching.grid_height);
  }
  return p;
}

std::vector<AlignerConfig> configs_from_json(const json& arr) {
  std::vector<AlignerConfig> out;
  for (const json& j : arr) {
    AlignerConfig c;
    c.kind = aligner_from_string(j.at("kind").get<std::string>());
    if (j.contains("provider")) c.provider = provider_from_json(j["provider"]);
    c.id = j.value("id", std::string(to_string(c.kind)));
    out.push_back(std::move(c));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, "spec lists no aligner configs");
  return out;
}

// Flags shared by align and flow; a JSON --config file provides defaults,
// explicitly passed flags win.
struct CommonOptions {
  std::string config_path;
  std::string norm_mode = "canonical";
  std::string flownorm_levels = "3,2";
  double sigma_multiplier_activation = 2.0;
  double sigma_multiplier_tangent = 1.0;
  double min_weight = 0.01;
  double huber_delta = kDefaultHuberDelta;
  int max_iterations = 50;
  int pyramid_levels = 4;
  bool use_patch = false;
  bool joint_depth = false;
  uint64_t seed = 1;

  std::string provider = "ground-truth";
  double noise_sigma = 0.0;
  std::string bias = "0,0";
  int bm_patch = 7;
  int bm_radius = 4;
  double bm_min_score = 0.5;

  void register_flags(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (flags override it)");
    app->add_option("--norm-mode", norm_mode, "canonical | paper-literal");
    app->add_option("--flownorm-levels", flownorm_levels,
                    "comma-separated pyramid levels using the flow factor");
    app->add_option("--sigma-multiplier-activation", sigma_multiplier_activation,
                    "activation disc radius in sigmas");
    app->add_option("--sigma-multiplier-tangent", sigma_multiplier_tangent,
                    "tangent circle radius in sigmas");
    app->add_option("--min-weight", min_weight, "flow factor floor");
    app->add_option("--huber-delta", huber_delta, "Huber threshold, intensity units");
    app->add_option("--max-iterations", max_iterations, "LM iterations per level");
    app->add_option("--levels", pyramid_levels, "pyramid levels");
    app->add_flag("--use-patch", use_patch, "8-point patch residuals");
    app->add_flag("--joint-depth", joint_depth, "alternate pose and inverse-depth steps");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--provider", provider, "ground-truth | noisy-oracle | block-matching");
    app->add_option("--noise-sigma", noise_sigma, "noisy-oracle per-component sigma, px");
    app->add_option("--bias", bias, "noisy-oracle constant offset \"x,y\", px");
    app->add_option("--bm-patch", bm_patch, "block-matching patch size (odd)");
    app->add_option("--bm-radius", bm_radius, "block-matching search radius per level");
    app->add_option("--bm-min-score", bm_min_score, "block-matching ZNCC threshold");
  }

  SolverConfig solver(const CLI::App* app) const {
    SolverConfig cfg;
    if (!config_path.empty()) cfg = solver_from_json(load_json_file(config_path), cfg);

    auto given = [&](const std::string& flag) { return app->count(flag) > 0; };
    if (given("--norm-mode") || config_path.empty())
      cfg.flow_norm.mode = norm_mode_from_string(norm_mode);
    if (given("--flownorm-levels") || config_path.empty()) {
      cfg.flownorm_levels.clear();
      std::istringstream ss(flownorm_levels);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) cfg.flownorm_levels.push_back(std::stoi(item));
      }
    }
    if (given("--sigma-multiplier-activation") || config_path.empty())
      cfg.flow_norm.activation_radius_multiplier = sigma_multiplier_activation;
    if (given("--sigma-multiplier-tangent") || config_path.empty())
      cfg.flow_norm.tangent_radius_multiplier = sigma_multiplier_tangent;
    if (given("--min-weight") || config_path.empty()) cfg.flow_norm.min_weight = min_weight;
    if (given("--huber-delta") || config_path.empty()) cfg.huber_delta = huber_delta;
    if (given("--max-iterations") || config_path.empty())
      cfg.max_iterations_per_level = max_iterations;
    if (given("--levels") || config_path.empty()) cfg.pyramid_levels = pyramid_levels;
    if (given("--use-patch")) cfg.residual.use_patch = use_patch;
    if (given("--joint-depth")) cfg.joint_depth = joint_depth;
    if (!cfg.flow_norm.valid()) throw Error(ErrorKind::InvalidConfig, "bad flow norm params");
    return cfg;
  }

  FlowProviderConfig provider_config() const {
    FlowProviderConfig p;
    p.kind = flow_provider_from_string(provider);
    p.noise_sigma = noise_sigma;
    const Vec3 b3 = parse_vec3(bias + ",0");
    p.bias = Vec2(b3.x(), b3.y());
    p.seed = seed;
    p.block_matching.patch_size = bm_patch;
    p.block_matching.search_radius = bm_radius;
    p.block_matching.min_score = bm_min_score;
    return p;
  }
};

// One aligned image pair plus everything needed to run providers on it.
struct PairInputs {
  PyramidImage source;
  PyramidImage target;
  GrayImage depth_source;
  std::optional<GrayImage> depth_target;
  CameraIntrinsics intrinsics;
  std::optional<SE3Pose> gt_target_from_source;
};

struct AlignArgs {
  std::string scene_path;
  std::string pair_rot = "4,2,1";
  std::string pair_trans = "0.05,0.02,0.01";
  std::string source_path, target_path, depth_path, target_depth_path, calib_path;
  std::string gt_pose;
  std::string flow_path;
  bool no_flow = false;
  std::string init_pose;
  double init_noise_rot_deg = 0.0;
  double init_noise_trans = 0.0;
  std::string out_dir = "out";
};

PairInputs load_pair(const AlignArgs& args, int levels) {
  PairInputs pair;
  if (!args.scene_path.empty()) {
    SyntheticScene scene = SyntheticScene::load(args.scene_path);
    Vec6 motion;
    motion.head<3>() = parse_vec3(args.pair_trans);
    motion.tail<3>() = parse_vec3(args.pair_rot) * M_PI / 180.0;
    const SE3Pose gt = SE3Pose::exp(motion);
    RenderedPair rendered = render_pair(scene, gt);
    pair.source = build_pyramid(rendered.source.gray, levels);
    pair.target = build_pyramid(rendered.target.gray, levels);
    pair.depth_source = std::move(*rendered.source.depth);
    pair.depth_target = std::move(*rendered.target.depth);
    pair.intrinsics = scene.intrinsics;
    pair.gt_target_from_source = gt;
    return pair;
  }

  if (args.source_path.empty() || args.target_path.empty() || args.calib_path.empty()) {
    throw Error(ErrorKind::InvalidConfig,
                "need --scene or --source/--target/--calib inputs");
  }
  pair.intrinsics = load_calibration(args.calib_path);
  pair.source = build_pyramid(read_gray_png(args.source_path), levels);
  pair.target = build_pyramid(read_gray_png(args.target_path), levels);
  if (args.depth_path.empty()) {
    throw Error(ErrorKind::MissingDepth, "point selection needs --depth for the source frame");
  }
  pair.depth_source = read_depth_png(args.depth_path);
  if (!args.target_depth_path.empty()) {
    pair.depth_target = read_depth_png(args.target_depth_path);
  }
  if (!args.gt_pose.empty()) pair.gt_target_from_source = parse_pose_tum(args.gt_pose);
  return pair;
}

FlowField provider_flow_for_pair(const FlowProviderConfig& provider, const PairInputs& pair) {
  switch (provider.kind) {
    case FlowProviderKind::GroundTruth:
    case FlowProviderKind::NoisyOracle: {
      if (!pair.gt_target_from_source) {
        throw Error(ErrorKind::InvalidConfig,
                    std::string(to_string(provider.kind)) + " provider needs a ground-truth pose");
      }
      FlowField gt = ground_truth_flow(pair.depth_source,
                                       pair.depth_target ? &*pair.depth_target : nullptr,
                                       *pair.gt_target_from_source, pair.intrinsics);
      if (provider.kind == FlowProviderKind::GroundTruth) return gt;
      return noisy_oracle_flow(gt, provider.noise_sigma, provider.bias, provider.seed);
    }
    case FlowProviderKind::BlockMatching: {
      FlowField bm = block_matching_flow(pair.source, pair.target, provider.block_matching);
      bm.image_width = pair.intrinsics.width;
      bm.image_height = pair.intrinsics.height;
      if (pair.gt_target_from_source) {
        const FlowField gt = ground_truth_flow(pair.depth_source,
                                               pair.depth_target ? &*pair.depth_target : nullptr,
                                               *pair.gt_target_from_source, pair.intrinsics);
        try {
          bm.sigma = estimate_sigma({{bm, gt}});
        } catch (const Error&) {
        }
      }
      return bm;
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unhandled provider kind");
}

int cmd_align(const AlignArgs& args, const CommonOptions& common, const CLI::App* app) {
  SolverConfig cfg = common.solver(app);
  cfg.record_trace = true;

  const PairInputs pair = load_pair(args, cfg.pyramid_levels);
  const PointSet points = select_points(pair.source, pair.depth_source, 0, 600);

  std::optional<FlowField> flow;
  if (!args.no_flow) {
    if (!args.flow_path.empty()) {
      flow = read_flow_file(args.flow_path);
      flow->image_width = pair.intrinsics.width;
      flow->image_height = pair.intrinsics.height;
    } else {
      try {
        flow = provider_flow_for_pair(common.provider_config(), pair);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InvalidConfig) throw;
        // no usable provider inputs; run Huber-only
      }
    }
  }

  SE3Pose init;
  if (!args.init_pose.empty()) {
    init = parse_pose_tum(args.init_pose);
  } else if (pair.gt_target_from_source &&
             (args.init_noise_rot_deg > 0.0 || args.init_noise_trans > 0.0)) {
    std::mt19937_64 rng(common.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec6 delta;
    Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    delta.head<3>() = dir.normalized() * args.init_noise_trans;
    delta.tail<3>() = axis.normalized() * (args.init_noise_rot_deg * M_PI / 180.0);
    init = SE3Pose::exp(delta) * (*pair.gt_target_from_source);
  }

  const AlignmentResult result = solve_pose(pair.source, pair.target, points,
                                            init, flow ? &*flow : nullptr,
                                            pair.intrinsics, cfg);

  fs::create_directories(args.out_dir);
  write_trace_csv((fs::path(args.out_dir) / "trace.csv").string(), result,
                  to_string(cfg.flow_norm.mode),
                  "config=" + config_to_json(cfg).dump() + " seed=" + std::to_string(common.seed));

  json j;
  j["converged"] = result.converged;
  j["pose_tum"] = pose_to_tum(result.pose);
  j["final_cost"] = result.final_cost;
  j["total_iterations"] = result.total_iterations;
  if (result.mean_flow_gap_px) j["mean_flow_gap_px"] = *result.mean_flow_gap_px;
  if (pair.gt_target_from_source) {
    const auto [rot, trans] = pose_error(result.pose, *pair.gt_target_from_source);
    j["rotation_error_deg"] = rot;
    j["translation_error_m"] = trans;
  }
  json levels = json::array();
  for (const LevelStats& s : result.levels) {
    levels.push_back({{"level", s.level},
                      {"iterations", s.iterations},
                      {"initial_cost", s.initial_cost},
                      {"final_cost", s.final_cost},
                      {"downweighted_fraction", s.downweighted_fraction},
                      {"flownorm_active", s.flownorm_active}});
  }
  j["levels"] = levels;
  j["seed"] = common.seed;
  j["config"] = config_to_json(cfg);
  if (flow) j["flow_sigma"] = flow->sigma;

  std::ofstream out(fs::path(args.out_dir) / "result.json");
  out << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return result.converged ? kExitSuccess : kExitNonConvergence;
}

struct FlowArgs {
  std::string scene_path;
  std::string pair_rot = "4,2,1";
  std::string pair_trans = "0.05,0.02,0.01";
  std::string source_path, target_path, depth_path, target_depth_path, calib_path;
  std::string gt_pose;
  std::string out_path = "flow.flw";
  std::string csv_path;
};

int cmd_flow(const FlowArgs& args, const CommonOptions& common, const CLI::App* app) {
  SolverConfig cfg = common.solver(app);
  AlignArgs pair_args;
  pair_args.scene_path = args.scene_path;
  pair_args.pair_rot = args.pair_rot;
  pair_args.pair_trans = args.pair_trans;
  pair_args.source_path = args.source_path;
  pair_args.target_path = args.target_path;
  pair_args.depth_path = args.depth_path;
  pair_args.target_depth_path = args.target_depth_path;
  pair_args.calib_path = args.calib_path;
  pair_args.gt_pose = args.gt_pose;

  const PairInputs pair = load_pair(pair_args, cfg.pyramid_levels);
  const FlowField flow = provider_flow_for_pair(common.provider_config(), pair);

  if (!args.out_path.empty()) write_flow_file(args.out_path, flow);
  if (!args.csv_path.empty()) write_flow_csv(args.csv_path, flow);

  std::vector<double> magnitudes;
  for (size_t i = 0; i < flow.vectors.size(); ++i) {
    if (flow.valid[i]) magnitudes.push_back(flow.vectors[i].norm());
  }
  double median = 0.0;
  if (!magnitudes.empty()) {
    std::nth_element(magnitudes.begin(), magnitudes.begin() + magnitudes.size() / 2,
                     magnitudes.end());
    median = magnitudes[magnitudes.size() / 2];
  }

  json j;
  j["provider"] = common.provider;
  j["sigma"] = flow.sigma;
  j["valid_cells"] = flow.valid_count();
  j["total_cells"] = flow.grid_width * flow.grid_height;
  j["median_flow_px"] = median;
  j["seed"] = common.seed;
  std::cout << j.dump(2) << "\n";
  return kExitSuccess;
}

SuccessThresholds thresholds_from_json(const json& j, SuccessThresholds base) {
  base.rotation_deg = j.value("rotation_deg", base.rotation_deg);
  base.translation_frac_of_depth =
      j.value("translation_frac_of_depth", base.translation_frac_of_depth);
  base.lost_rotation_deg = j.value("lost_rotation_deg", base.lost_rotation_deg);
  base.lost_translation_frac_of_depth =
      j.value("lost_translation_frac_of_depth", base.lost_translation_frac_of_depth);
  return base;
}

}  // namespace

BasinSpecFile load_basin_spec(const std::string& path) {
  const json j = load_json_file(path);
  BasinSpecFile spec;
  if (j.contains("scene")) spec.base.scene = SyntheticScene::from_json(j["scene"].dump());
  if (j.contains("pair_rotation_deg")) {
    const auto v = j["pair_rotation_deg"].get<std::vector<double>>();
    spec.base.pair_rotation_deg = Vec3(v.at(0), v.at(1), v.at(2));
  }
  if (j.contains("pair_translation")) {
    const auto v = j["pair_translation"].get<std::vector<double>>();
    spec.base.pair_translation = Vec3(v.at(0), v.at(1), v.at(2));
  }
  spec.base.trial_count = j.value("trials", spec.base.trial_count);
  spec.base.seed = j.value("seed", spec.base.seed);
  spec.base.threads = j.value("threads", spec.base.threads);
  if (j.contains("solver")) spec.base.solver = solver_from_json(j["solver"], spec.base.solver);
  if (j.contains("thresholds")) {
    spec.base.thresholds = thresholds_from_json(j["thresholds"], spec.base.thresholds);
  }
  spec.base.configs = configs_from_json(j.at("configs"));

  if (j.contains("magnitudes")) {
    for (const json& m : j["magnitudes"]) {
      spec.magnitudes.push_back({m.value("rotation_noise_deg", 0.0),
                                 m.value("translation_noise_frac", 0.0)});
    }
  } else {
    spec.magnitudes.push_back({j.value("rotation_noise_deg", 0.0),
                               j.value("translation_noise_frac", 0.0)});
  }
  if (spec.magnitudes.empty()) {
    throw Error(ErrorKind::InvalidConfig, "spec lists no magnitudes");
  }
  return spec;
}

SkipTrialSpec load_skip_spec(const std::string& path) {
  const json j = load_json_file(path);
  SkipTrialSpec spec;
  if (j.contains("scene")) spec.scene = SyntheticScene::from_json(j["scene"].dump());
  spec.num_frames = j.value("num_frames", spec.num_frames);
  spec.step_deg = j.value("step_deg", spec.step_deg);
  spec.step_accel_deg = j.value("step_accel_deg", spec.step_accel_deg);
  spec.swing_amplitude_deg = j.value("swing_amplitude_deg", spec.swing_amplitude_deg);
  spec.swing_period_frames = j.value("swing_period_frames", spec.swing_period_frames);
  if (j.contains("sequence_dir")) spec.sequence_dir = j["sequence_dir"].get<std::string>();
  if (j.contains("skips")) spec.skips = j["skips"].get<std::vector<int>>();
  for (size_t i = 1; i < spec.skips.size(); ++i) {
    if (spec.skips[i] <= spec.skips[i - 1] || spec.skips[i - 1] <= 0) {
      throw Error(ErrorKind::InvalidConfig, "skips must be positive ascending");
    }
  }
  spec.runs_per_skip = j.value("runs_per_skip", spec.runs_per_skip);
  spec.acceptable_multiplier = j.value("acceptable_multiplier", spec.acceptable_multiplier);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("solver")) spec.solver = solver_from_json(j["solver"], spec.solver);
  if (j.contains("thresholds")) {
    spec.thresholds = thresholds_from_json(j["thresholds"], spec.thresholds);
  }
  spec.configs = configs_from_json(j.at("configs"));
  return spec;
}

namespace {

// Sweep CSV: the basin record columns prefixed by the magnitude.
void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& magnitudes,
                     const BasinSweepReport& report, const std::string& metadata) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  if (!metadata.empty()) std::fprintf(f, "# %s\n", metadata.c_str());
  std::fprintf(f,
               "rot_noise_deg,trans_noise_frac,config,trial,init_rot_deg,init_trans_m,"
               "final_rot_deg,final_trans_m,converged,success,iterations\n");
  for (size_t i = 0; i < report.points.size(); ++i) {
    for (const TrialRecord& r : report.points[i].records) {
      std::fprintf(f, "%.9g,%.9g,%s,%d,%.9g,%.9g,%.9g,%.9g,%d,%d,%d\n",
                   magnitudes[i].rotation_noise_deg, magnitudes[i].translation_noise_frac,
                   r.config_id.c_str(), r.trial_id, r.init_rotation_error_deg,
                   r.init_translation_error_m, r.final_rotation_error_deg,
                   r.final_translation_error_m, r.converged ? 1 : 0, r.success ? 1 : 0,
                   r.iterations);
    }
  }
  std::fclose(f);
}

int cmd_basin(const std::string& spec_path, const std::string& out_dir, uint64_t seed_override,
              bool seed_given, int threads) {
  BasinSpecFile spec = load_basin_spec(spec_path);
  if (seed_given) spec.base.seed = seed_override;
  if (threads > 0) spec.base.threads = threads;

  const auto t0 = std::chrono::steady_clock::now();
  const BasinSweepReport report = run_basin_sweep(spec.base, spec.magnitudes);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string metadata = config_to_json(spec.base).dump();
  fs::create_directories(out_dir);
  write_sweep_csv((fs::path(out_dir) / "basin.csv").string(), spec.magnitudes, report,
                  metadata);
  write_sweep_summary_json((fs::path(out_dir) / "summary.json").string(), spec.base,
                           spec.magnitudes, report, wall);
  write_sweep_svg((fs::path(out_dir) / "basin.svg").string(), spec.magnitudes, report,
                  metadata);

  for (size_t i = 0; i < report.points.size(); ++i) {
    for (const ConfigSummary& s : report.points[i].summaries) {
      std::cout << "rot=" << spec.magnitudes[i].rotation_noise_deg << "deg "
                << "trans=" << spec.magnitudes[i].translation_noise_frac << " " << s.config_id
                << ": " << s.successes << "/" << s.trials << "\n";
    }
  }
  return kExitSuccess;
}

int cmd_skip(const std::string& spec_path, const std::string& out_dir, uint64_t seed_override,
             bool seed_given) {
  SkipTrialSpec spec = load_skip_spec(spec_path);
  if (seed_given) spec.seed = seed_override;

  const auto t0 = std::chrono::steady_clock::now();
  const SkipReport report = run_skip(spec);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string metadata = config_to_json(spec).dump();
  fs::create_directories(out_dir);
  write_skip_csv((fs::path(out_dir) / "skip.csv").string(), report, metadata);
  write_skip_summary_json((fs::path(out_dir) / "summary.json").string(), spec, report, wall);
  write_skip_svg((fs::path(out_dir) / "skip.svg").string(), report, metadata);

  for (const SkipConfigSummary& s : report.summaries) {
    std::cout << s.config_id << ": max skip acceptable=" << s.max_skip_acceptable
              << " without losing tracking=" << s.max_skip_without_loss
              << " (reference ATE " << s.reference_ate_m << " m)\n";
  }
  return kExitSuccess;
}

void emit_error_json(const Error& e) {
  json j;
  j["error"] = to_string(e.kind());
  j["message"] = e.what();
  std::cout << j.dump(2) << "\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"direct image alignment with flow-guided robust weighting"};
  app.require_subcommand(1);

  CommonOptions common;

  // align
  auto* align = app.add_subcommand("align", "align one image pair and report the pose");
  AlignArgs align_args;
  common.register_flags(align);
  align->add_option("--scene", align_args.scene_path, "synthetic scene JSON");
  align->add_option("--pair-rot", align_args.pair_rot, "scene pair rotation, deg \"x,y,z\"");
  align->add_option("--pair-trans", align_args.pair_trans, "scene pair translation, m \"x,y,z\"");
  align->add_option("--source", align_args.source_path, "source image PNG");
  align->add_option("--target", align_args.target_path, "target image PNG");
  align->add_option("--depth", align_args.depth_path, "source depth PNG (16-bit, 1/5000 m)");
  align->add_option("--target-depth", align_args.target_depth_path, "target depth PNG");
  align->add_option("--calib", align_args.calib_path, "calibration file");
  align->add_option("--gt-pose", align_args.gt_pose, "ground-truth pose \"tx ty tz qx qy qz qw\"");
  align->add_option("--flow", align_args.flow_path, "precomputed FLW1 flow file");
  align->add_flag("--no-flow", align_args.no_flow, "force Huber-only alignment");
  align->add_option("--init", align_args.init_pose, "initial pose \"tx ty tz qx qy qz qw\"");
  align->add_option("--init-noise-rot", align_args.init_noise_rot_deg,
                    "perturb gt by this rotation (deg) for the initial pose");
  align->add_option("--init-noise-trans", align_args.init_noise_trans,
                    "perturb gt by this translation (m)");
  align->add_option("--out", align_args.out_dir, "output directory");

  // flow
  auto* flowcmd = app.add_subcommand("flow", "compute and serialize a flow field");
  FlowArgs flow_args;
  common.register_flags(flowcmd);
  flowcmd->add_option("--scene", flow_args.scene_path, "synthetic scene JSON");
  flowcmd->add_option("--pair-rot", flow_args.pair_rot, "scene pair rotation, deg");
  flowcmd->add_option("--pair-trans", flow_args.pair_trans, "scene pair translation, m");
  flowcmd->add_option("--source", flow_args.source_path, "source image PNG");
  flowcmd->add_option("--target", flow_args.target_path, "target image PNG");
  flowcmd->add_option("--depth", flow_args.depth_path, "source depth PNG");
  flowcmd->add_option("--target-depth", flow_args.target_depth_path, "target depth PNG");
  flowcmd->add_option("--calib", flow_args.calib_path, "calibration file");
  flowcmd->add_option("--gt-pose", flow_args.gt_pose, "ground-truth pose");
  flowcmd->add_option("--out", flow_args.out_path, "output .flw path");
  flowcmd->add_option("--csv", flow_args.csv_path, "also dump a CSV debug file");

  // basin
  auto* basin = app.add_subcommand("basin", "pose-perturbation convergence-basin trials");
  std::string basin_spec, basin_out = "out";
  uint64_t basin_seed = 0;
  int basin_threads = 0;
  basin->add_option("--spec", basin_spec, "basin spec JSON")->required();
  basin->add_option("--out", basin_out, "output directory");
  auto* basin_seed_opt = basin->add_option("--seed", basin_seed, "override spec seed");
  basin->add_option("--threads", basin_threads, "worker threads (0 = auto)");

  // skip
  auto* skip = app.add_subcommand("skip", "frame-skip tracking trials");
  std::string skip_spec, skip_out = "out";
  uint64_t skip_seed = 0;
  skip->add_option("--spec", skip_spec, "skip spec JSON")->required();
  skip->add_option("--out", skip_out, "output directory");
  auto* skip_seed_opt = skip->add_option("--seed", skip_seed, "override spec seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitSuccess : kExitInputError;
  }

  try {
    if (align->parsed()) return cmd_align(align_args, common, align);
    if (flowcmd->parsed()) return cmd_flow(flow_args, common, flowcmd);
    if (basin->parsed()) {
      return cmd_basin(basin_spec, basin_out, basin_seed, basin_seed_opt->count() > 0,
                       basin_threads);
    }
    if (skip->parsed()) return cmd_skip(skip_spec, skip_out, skip_seed, skip_seed_opt->count() > 0);
  } catch (const Error& e) {
    emit_error_json(e);
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    json j;
    j["error"] = "internal";
    j["message"] = e.what();
    std::cout << j.dump(2) << "\n";
    return kExitInternalError;
  }
  return kExitInputError;
}

}  // namespace flownorm
