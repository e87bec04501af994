#include "flownorm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include <Eigen/SVD>

#include "flownorm/config_json.hpp"
#include "flownorm/svg.hpp"

namespace flownorm {

using nlohmann::json;

const char* to_string(AlignerKind kind) {
  switch (kind) {
    case AlignerKind::HuberOnly: return "huber";
    case AlignerKind::FlowNorm: return "flownorm";
    case AlignerKind::FlowInit: return "flowinit";
    case AlignerKind::FlowInitFlowNorm: return "flowinit+flownorm";
  }
  return "huber";
}

AlignerKind aligner_from_string(const std::string& s) {
  if (s == "huber") return AlignerKind::HuberOnly;
  if (s == "flownorm") return AlignerKind::FlowNorm;
  if (s == "flowinit") return AlignerKind::FlowInit;
  if (s == "flowinit+flownorm") return AlignerKind::FlowInitFlowNorm;
  throw Error(ErrorKind::InvalidConfig, "unknown aligner kind: " + s);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, count));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::pair<double, double> pose_error(const SE3Pose& estimated, const SE3Pose& ground_truth) {
  const Mat33 rel = estimated.rotation_matrix().transpose() * ground_truth.rotation_matrix();
  const double cos_angle = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
  const double rotation_deg = std::acos(cos_angle) * 180.0 / M_PI;
  const double translation_m = (estimated.translation() - ground_truth.translation()).norm();
  return {rotation_deg, translation_m};
}

double ate_rmse(const std::vector<SE3Pose>& estimated, const std::vector<SE3Pose>& ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw Error(ErrorKind::InvalidConfig, "trajectory lengths differ");
  }
  const int n = static_cast<int>(estimated.size());
  if (n < 2) throw Error(ErrorKind::TooFewPoints, "need >= 2 associated poses for ATE");

  Vec3 mean_est = Vec3::Zero(), mean_gt = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    mean_est += estimated[i].translation();
    mean_gt += ground_truth[i].translation();
  }
  mean_est /= n;
  mean_gt /= n;

  Mat33 cov = Mat33::Zero();
  for (int i = 0; i < n; ++i) {
    cov += (ground_truth[i].translation() - mean_gt) *
           (estimated[i].translation() - mean_est).transpose();
  }
  Eigen::JacobiSVD<Mat33> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat33 s = Mat33::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  const Mat33 rot = svd.matrixU() * s * svd.matrixV().transpose();
  const Vec3 trans = mean_gt - rot * mean_est;

  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    sum_sq += (ground_truth[i].translation() - (rot * estimated[i].translation() + trans))
                  .squaredNorm();
  }
  return std::sqrt(sum_sq / n);
}

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SE3Pose perturb_pose(const SE3Pose& pose, double rotation_deg, double translation_m,
                     uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&] {
    Vec3 v;
    do {
      v = Vec3(gauss(rng), gauss(rng), gauss(rng));
    } while (v.norm() < 1e-12);
    return Vec3(v.normalized());
  };
  Vec6 delta;
  delta.head<3>() = random_unit() * translation_m;
  delta.tail<3>() = random_unit() * (rotation_deg * M_PI / 180.0);
  return SE3Pose::exp(delta) * pose;
}

// Everything fixed about one image pair that aligner runs share.
struct PairContext {
  PyramidImage source;
  PyramidImage target;
  PointSet points;
  CameraIntrinsics intrinsics;
  SE3Pose gt_target_from_source;
  double scene_depth = 1.0;
};

// The exact flow of a frame pair is deterministic, so trackers buffer it
// per (source id, target id) and only the provider-specific noise or
// matching runs per request.
FlowField make_provider_flow(const FlowProviderConfig& provider, const PairContext& ctx,
                             const GrayImage& depth_source, const GrayImage* depth_target,
                             uint64_t pair_seed, FlowCache* gt_cache = nullptr,
                             int source_id = 0, int target_id = 1) {
  auto exact_flow = [&]() -> FlowField {
    if (gt_cache) {
      if (auto cached = gt_cache->get(source_id, target_id)) return *cached;
    }
    FlowField gt = ground_truth_flow(depth_source, depth_target, ctx.gt_target_from_source,
                                     ctx.intrinsics);
    if (gt_cache) gt_cache->put(source_id, target_id, gt);
    return gt;
  };

  switch (provider.kind) {
    case FlowProviderKind::GroundTruth:
      return exact_flow();
    case FlowProviderKind::NoisyOracle:
      return noisy_oracle_flow(exact_flow(), provider.noise_sigma, provider.bias,
                               mix_seed(provider.seed, pair_seed));
    case FlowProviderKind::BlockMatching: {
      FlowField bm = block_matching_flow(ctx.source, ctx.target, provider.block_matching);
      bm.image_width = ctx.intrinsics.width;
      bm.image_height = ctx.intrinsics.height;
      // Calibrate sigma against ground truth when we have it.
      try {
        bm.sigma = estimate_sigma({{bm, exact_flow()}});
      } catch (const Error&) {
        // keep the provider default
      }
      return bm;
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unhandled provider kind");
}

struct AlignerRun {
  AlignmentResult result;
  bool failed = false;
};

AlignerRun run_aligner(const AlignerConfig& config, const PairContext& ctx,
                       const FlowField* flow, const SE3Pose& initial_pose,
                       const SolverConfig& solver_cfg) {
  AlignerRun run;
  try {
    switch (config.kind) {
      case AlignerKind::HuberOnly:
        run.result = solve_pose(ctx.source, ctx.target, ctx.points, initial_pose, nullptr,
                                ctx.intrinsics, solver_cfg);
        break;
      case AlignerKind::FlowNorm:
        run.result = solve_pose(ctx.source, ctx.target, ctx.points, initial_pose, flow,
                                ctx.intrinsics, solver_cfg);
        break;
      case AlignerKind::FlowInit:
      case AlignerKind::FlowInitFlowNorm: {
        // Standalone flow initialization: the externally supplied pose is
        // ignored on purpose; the pose comes from the flow itself.
        const FlowInitResult init = flow_init_pose(ctx.points, *flow, ctx.intrinsics);
        const FlowField* solve_flow =
            config.kind == AlignerKind::FlowInitFlowNorm ? flow : nullptr;
        run.result = solve_pose(ctx.source, ctx.target, ctx.points, init.pose, solve_flow,
                                ctx.intrinsics, solver_cfg);
        break;
      }
    }
  } catch (const Error&) {
    run.failed = true;
  }
  return run;
}

}  // namespace

BasinReport run_basin(const BasinTrialSpec& spec) {
  if (spec.configs.empty()) throw Error(ErrorKind::InvalidConfig, "no aligner configs");
  if (spec.trial_count < 1) throw Error(ErrorKind::InvalidConfig, "trial count must be >= 1");

  Vec6 motion;
  motion.head<3>() = spec.pair_translation;
  motion.tail<3>() = spec.pair_rotation_deg * M_PI / 180.0;
  const SE3Pose gt = SE3Pose::exp(motion);

  const RenderedPair pair = render_pair(spec.scene, gt);

  PairContext ctx;
  ctx.source = build_pyramid(pair.source.gray, spec.solver.pyramid_levels);
  ctx.target = build_pyramid(pair.target.gray, spec.solver.pyramid_levels);
  ctx.points = select_points(ctx.source, *pair.source.depth, 0, 600);
  ctx.intrinsics = spec.scene.intrinsics;
  ctx.gt_target_from_source = gt;
  ctx.scene_depth = spec.scene.base_depth;

  // One flow field per aligner config, shared across trials.
  std::vector<FlowField> flows(spec.configs.size());
  for (size_t c = 0; c < spec.configs.size(); ++c) {
    if (spec.configs[c].kind == AlignerKind::HuberOnly) continue;
    flows[c] = make_provider_flow(spec.configs[c].provider, ctx, *pair.source.depth,
                                  &*pair.target.depth, spec.seed);
  }

  const int num_configs = static_cast<int>(spec.configs.size());
  const int total = num_configs * spec.trial_count;
  BasinReport report;
  report.rotation_noise_deg = spec.rotation_noise_deg;
  report.translation_noise_frac = spec.translation_noise_frac;
  report.records.resize(total);

  parallel_for(total, spec.threads, [&](int idx) {
    const int c = idx / spec.trial_count;
    const int trial = idx % spec.trial_count;
    const AlignerConfig& config = spec.configs[c];

    const SE3Pose init = perturb_pose(gt, spec.rotation_noise_deg,
                                      spec.translation_noise_frac * ctx.scene_depth,
                                      mix_seed(spec.seed, trial));

    TrialRecord rec;
    rec.config_id = config.id;
    rec.trial_id = trial;
    std::tie(rec.init_rotation_error_deg, rec.init_translation_error_m) =
        pose_error(init, gt);

    const auto t0 = std::chrono::steady_clock::now();
    const AlignerRun run = run_aligner(
        config, ctx, config.kind == AlignerKind::HuberOnly ? nullptr : &flows[c], init,
        spec.solver);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (run.failed) {
      rec.final_rotation_error_deg = std::numeric_limits<double>::infinity();
      rec.final_translation_error_m = std::numeric_limits<double>::infinity();
    } else {
      std::tie(rec.final_rotation_error_deg, rec.final_translation_error_m) =
          pose_error(run.result.pose, gt);
      rec.converged = run.result.converged;
      rec.iterations = run.result.total_iterations;
    }
    rec.success = rec.converged &&
                  rec.final_rotation_error_deg < spec.thresholds.rotation_deg &&
                  rec.final_translation_error_m <
                      spec.thresholds.translation_frac_of_depth * ctx.scene_depth;
    report.records[idx] = std::move(rec);
  });

  for (int c = 0; c < num_configs; ++c) {
    ConfigSummary s;
    s.config_id = spec.configs[c].id;
    s.trials = spec.trial_count;
    for (int t = 0; t < spec.trial_count; ++t) {
      s.successes += report.records[c * spec.trial_count + t].success;
    }
    s.success_rate = static_cast<double>(s.successes) / s.trials;
    report.summaries.push_back(std::move(s));
  }
  return report;
}

BasinSweepReport run_basin_sweep(const BasinTrialSpec& base,
                                 const std::vector<SweepPoint>& magnitudes) {
  BasinSweepReport sweep;
  for (const SweepPoint& m : magnitudes) {
    BasinTrialSpec spec = base;
    spec.rotation_noise_deg = m.rotation_noise_deg;
    spec.translation_noise_frac = m.translation_noise_frac;
    sweep.points.push_back(run_basin(spec));
  }

  // Success rate should not rise with the perturbation magnitude; flag
  // violations beyond two binomial sigmas.
  for (size_t c = 0; c < base.configs.size(); ++c) {
    for (size_t i = 1; i < sweep.points.size(); ++i) {
      const ConfigSummary& prev = sweep.points[i - 1].summaries[c];
      const ConfigSummary& cur = sweep.points[i].summaries[c];
      const double p = cur.success_rate;
      const double sigma = std::sqrt(std::max(p * (1.0 - p), 1e-9) / cur.trials);
      if (cur.success_rate > prev.success_rate + 2.0 * sigma) {
        sweep.monotonicity_flags.push_back(base.configs[c].id + "@" +
                                           std::to_string(sweep.points[i].rotation_noise_deg));
      }
    }
  }
  return sweep;
}

namespace {

struct TrackOutcome {
  bool lost = false;
  int pairs_tracked = 0;
  double ate = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

SkipReport run_skip(const SkipTrialSpec& spec) {
  if (spec.configs.empty()) throw Error(ErrorKind::InvalidConfig, "no aligner configs");

  std::vector<Frame> frames;
  CameraIntrinsics intrinsics;
  if (spec.sequence_dir) {
    frames = load_tum_sequence(*spec.sequence_dir);
    intrinsics = spec.scene.intrinsics;  // calibration supplied alongside
  } else {
    frames = spec.swing_amplitude_deg > 0.0
                 ? make_swing_sequence(spec.scene, spec.num_frames,
                                       spec.swing_amplitude_deg, spec.swing_period_frames)
                 : make_orbit_sequence(spec.scene, spec.num_frames, spec.step_deg,
                                       spec.step_accel_deg);
    intrinsics = spec.scene.intrinsics;
  }
  for (const Frame& f : frames) {
    if (!f.depth || !f.gt_world_from_camera) {
      throw Error(ErrorKind::MissingDepth, "skip benchmark needs depth and ground truth");
    }
  }

  FlowCache gt_cache;
  auto track = [&](const std::vector<Frame>& seq, const AlignerConfig& config,
                   uint64_t run_seed) {
    TrackOutcome out;
    if (seq.size() < 2) {
      out.lost = true;
      return out;
    }
    double depth_sum = 0.0;
    long depth_count = 0;
    for (double d : seq[0].depth->values) {
      if (d > 0.0) {
        depth_sum += d;
        ++depth_count;
      }
    }
    const double scene_depth = depth_count > 0 ? depth_sum / depth_count : 1.0;

    std::vector<SE3Pose> est_traj{*seq[0].gt_world_from_camera};
    std::vector<SE3Pose> gt_traj{*seq[0].gt_world_from_camera};
    SE3Pose prev_relative;

    for (size_t i = 1; i < seq.size(); ++i) {
      const Frame& kf = seq[i - 1];
      const Frame& cur = seq[i];
      try {
        const PyramidImage pyr_kf = build_pyramid(kf.gray, spec.solver.pyramid_levels);
        const PyramidImage pyr_cur = build_pyramid(cur.gray, spec.solver.pyramid_levels);
        const PointSet points = select_points(pyr_kf, *kf.depth, 0, 600);

        const SE3Pose gt_rel =
            cur.gt_world_from_camera->inverse() * (*kf.gt_world_from_camera);

        PairContext ctx;
        ctx.source = pyr_kf;
        ctx.target = pyr_cur;
        ctx.points = points;
        ctx.intrinsics = intrinsics;
        ctx.gt_target_from_source = gt_rel;
        ctx.scene_depth = scene_depth;

        FlowField flow;
        const FlowField* flow_ptr = nullptr;
        if (config.kind != AlignerKind::HuberOnly) {
          flow = make_provider_flow(config.provider, ctx, *kf.depth, &*cur.depth,
                                    mix_seed(run_seed, i), &gt_cache, kf.id, cur.id);
          flow_ptr = &flow;
        }

        AlignmentResult result;
        if (config.kind == AlignerKind::FlowInit ||
            config.kind == AlignerKind::FlowInitFlowNorm) {
          SE3Pose flow_pose;
          bool have_flow_pose = false;
          try {
            const FlowInitResult fi = flow_init_pose(points, *flow_ptr, intrinsics);
            flow_pose = fi.pose;
            have_flow_pose = true;
          } catch (const Error&) {
          }
          const InitCandidateQueue queue = make_candidate_queue(
              &prev_relative, have_flow_pose ? &flow_pose : nullptr);
          const FlowField* solve_flow =
              config.kind == AlignerKind::FlowInitFlowNorm ? flow_ptr : nullptr;
          result = try_candidates(queue, pyr_kf, pyr_cur, points, solve_flow, intrinsics,
                                  spec.solver)
                       .result;
        } else {
          const FlowField* solve_flow =
              config.kind == AlignerKind::FlowNorm ? flow_ptr : nullptr;
          result = solve_pose(pyr_kf, pyr_cur, points, prev_relative, solve_flow, intrinsics,
                              spec.solver);
        }

        const auto [rot_err, trans_err] = pose_error(result.pose, gt_rel);
        if (!std::isfinite(result.final_cost) ||
            rot_err > spec.thresholds.lost_rotation_deg ||
            trans_err > spec.thresholds.lost_translation_frac_of_depth * scene_depth) {
          out.lost = true;
          break;
        }

        est_traj.push_back(est_traj.back() * result.pose.inverse());
        gt_traj.push_back(*cur.gt_world_from_camera);
        prev_relative = result.pose;
        ++out.pairs_tracked;
      } catch (const Error&) {
        out.lost = true;
        break;
      }
    }

    if (est_traj.size() >= 2) out.ate = ate_rmse(est_traj, gt_traj);
    return out;
  };

  SkipReport report;
  std::vector<double> reference_ate(spec.configs.size(), 0.0);

  for (size_t c = 0; c < spec.configs.size(); ++c) {
    // Skip-0 baseline: the undownsampled sequence defines error_0.
    double ref_sum = 0.0;
    int ref_count = 0;
    for (int run = 0; run < spec.runs_per_skip; ++run) {
      const TrackOutcome ref = track(frames, spec.configs[c], mix_seed(spec.seed, run));
      if (!ref.lost && std::isfinite(ref.ate)) {
        ref_sum += ref.ate;
        ++ref_count;
      }
    }
    reference_ate[c] =
        ref_count > 0 ? ref_sum / ref_count : std::numeric_limits<double>::infinity();

    for (int skip : spec.skips) {
      const std::vector<Frame> seq = downsample_sequence(frames, skip);
      for (int run = 0; run < spec.runs_per_skip; ++run) {
        const TrackOutcome res =
            track(seq, spec.configs[c], mix_seed(spec.seed, 1000 + skip * 100 + run));
        SkipRunRecord rec;
        rec.config_id = spec.configs[c].id;
        rec.skip = skip;
        rec.run = run;
        rec.lost_tracking = res.lost;
        rec.pairs_tracked = res.pairs_tracked;
        rec.ate_rmse_m = res.ate;
        rec.acceptable = !res.lost && std::isfinite(res.ate) &&
                         res.ate <= spec.acceptable_multiplier * reference_ate[c];
        report.records.push_back(std::move(rec));
      }
    }

    SkipConfigSummary summary;
    summary.config_id = spec.configs[c].id;
    summary.reference_ate_m = reference_ate[c];
    bool acceptable_chain = true, loss_chain = true;
    for (int skip : spec.skips) {
      bool all_acceptable = true;
      bool any_lost = false;
      for (const SkipRunRecord& rec : report.records) {
        if (rec.config_id != spec.configs[c].id || rec.skip != skip) continue;
        all_acceptable = all_acceptable && rec.acceptable;
        any_lost = any_lost || rec.lost_tracking;
      }
      acceptable_chain = acceptable_chain && all_acceptable;
      loss_chain = loss_chain && !any_lost;
      if (acceptable_chain) summary.max_skip_acceptable = skip;
      if (loss_chain) summary.max_skip_without_loss = skip;
    }
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

namespace {

const char* bool_str(bool b) { return b ? "1" : "0"; }

}  // namespace

void write_basin_csv(const std::string& path, const BasinReport& report,
                     const std::string& metadata) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  if (!metadata.empty()) std::fprintf(f, "# %s\n", metadata.c_str());
  std::fprintf(f,
               "config,trial,init_rot_deg,init_trans_m,final_rot_deg,final_trans_m,"
               "converged,success,iterations\n");
  for (const TrialRecord& r : report.records) {
    std::fprintf(f, "%s,%d,%.9g,%.9g,%.9g,%.9g,%s,%s,%d\n", r.config_id.c_str(), r.trial_id,
                 r.init_rotation_error_deg, r.init_translation_error_m,
                 r.final_rotation_error_deg, r.final_translation_error_m,
                 bool_str(r.converged), bool_str(r.success), r.iterations);
  }
  std::fclose(f);
}

void write_skip_csv(const std::string& path, const SkipReport& report,
                    const std::string& metadata) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  if (!metadata.empty()) std::fprintf(f, "# %s\n", metadata.c_str());
  std::fprintf(f, "config,skip,run,lost,pairs,ate_rmse_m,acceptable\n");
  for (const SkipRunRecord& r : report.records) {
    std::fprintf(f, "%s,%d,%d,%s,%d,%.9g,%s\n", r.config_id.c_str(), r.skip, r.run,
                 bool_str(r.lost_tracking), r.pairs_tracked, r.ate_rmse_m,
                 bool_str(r.acceptable));
  }
  std::fclose(f);
}

namespace {

void dump_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

json summaries_json(const std::vector<ConfigSummary>& summaries) {
  json arr = json::array();
  for (const ConfigSummary& s : summaries) {
    arr.push_back({{"config", s.config_id},
                   {"trials", s.trials},
                   {"successes", s.successes},
                   {"success_rate", s.success_rate}});
  }
  return arr;
}

}  // namespace

void write_basin_summary_json(const std::string& path, const BasinTrialSpec& spec,
                              const BasinReport& report, double wall_time_s) {
  json j;
  j["spec"] = config_to_json(spec);
  j["rotation_noise_deg"] = report.rotation_noise_deg;
  j["translation_noise_frac"] = report.translation_noise_frac;
  j["summaries"] = summaries_json(report.summaries);
  j["wall_time_s"] = wall_time_s;
  dump_json(path, j);
}

void write_sweep_summary_json(const std::string& path, const BasinTrialSpec& spec,
                              const std::vector<SweepPoint>& magnitudes,
                              const BasinSweepReport& report, double wall_time_s) {
  json j;
  j["spec"] = config_to_json(spec);
  json points = json::array();
  for (size_t i = 0; i < report.points.size(); ++i) {
    points.push_back({{"rotation_noise_deg", magnitudes[i].rotation_noise_deg},
                      {"translation_noise_frac", magnitudes[i].translation_noise_frac},
                      {"summaries", summaries_json(report.points[i].summaries)}});
  }
  j["points"] = points;
  j["monotonicity_flags"] = report.monotonicity_flags;
  j["wall_time_s"] = wall_time_s;
  dump_json(path, j);
}

void write_skip_summary_json(const std::string& path, const SkipTrialSpec& spec,
                             const SkipReport& report, double wall_time_s) {
  json j;
  j["spec"] = config_to_json(spec);
  json arr = json::array();
  for (const SkipConfigSummary& s : report.summaries) {
    arr.push_back({{"config", s.config_id},
                   {"reference_ate_m", s.reference_ate_m},
                   {"max_skip_acceptable", s.max_skip_acceptable},
                   {"max_skip_without_loss", s.max_skip_without_loss}});
  }
  j["summaries"] = arr;
  j["wall_time_s"] = wall_time_s;
  dump_json(path, j);
}

void write_sweep_svg(const std::string& path, const std::vector<SweepPoint>& magnitudes,
                     const BasinSweepReport& report, const std::string& metadata) {
  std::vector<SvgSeries> series;
  if (report.points.empty()) {
    write_line_chart_svg(path, "basin sweep", "rotation noise (deg)", "success rate", series,
                         metadata);
    return;
  }
  for (size_t c = 0; c < report.points.front().summaries.size(); ++c) {
    SvgSeries s;
    s.label = report.points.front().summaries[c].config_id;
    for (size_t i = 0; i < report.points.size(); ++i) {
      s.points.push_back({magnitudes[i].rotation_noise_deg,
                          report.points[i].summaries[c].success_rate});
    }
    series.push_back(std::move(s));
  }
  write_line_chart_svg(path, "success rate vs perturbation", "rotation noise (deg)",
                       "success rate", series, metadata);
}

void write_skip_svg(const std::string& path, const SkipReport& report,
                    const std::string& metadata) {
  std::vector<std::string> labels;
  SvgBarGroup acceptable{"max skip, acceptable accuracy", {}};
  SvgBarGroup no_loss{"max skip, no lost tracking", {}};
  for (const SkipConfigSummary& s : report.summaries) {
    labels.push_back(s.config_id);
    acceptable.values.push_back(s.max_skip_acceptable);
    no_loss.values.push_back(s.max_skip_without_loss);
  }
  write_bar_chart_svg(path, "frame-skip robustness", labels, {acceptable, no_loss},
                      metadata);
}

}  // namespace flownorm
