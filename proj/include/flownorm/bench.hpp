#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flownorm/datasets.hpp"
#include "flownorm/flow_init.hpp"
#include "flownorm/solver.hpp"

namespace flownorm {

enum class AlignerKind { HuberOnly, FlowNorm, FlowInit, FlowInitFlowNorm };

const char* to_string(AlignerKind kind);
AlignerKind aligner_from_string(const std::string& s);

struct AlignerConfig {
  std::string id;  // CSV/report label
  AlignerKind kind = AlignerKind::HuberOnly;
  FlowProviderConfig provider;  // ignored by HuberOnly
};

// Success thresholds. These are artifact choices (reports restate them):
// a trial succeeds at < 1 degree and < 2% of scene depth; a tracker loses
// a pair at > 10 degrees or > 20% of scene depth.
struct SuccessThresholds {
  double rotation_deg = 1.0;
  double translation_frac_of_depth = 0.02;
  double lost_rotation_deg = 10.0;
  double lost_translation_frac_of_depth = 0.20;
};

struct BasinTrialSpec {
  SyntheticScene scene;
  Vec3 pair_rotation_deg = Vec3(4.0, 2.0, 1.0);  // gt target-from-source motion
  Vec3 pair_translation = Vec3(0.05, 0.02, 0.01);
  double rotation_noise_deg = 0.0;
  double translation_noise_frac = 0.0;  // of scene base depth
  int trial_count = 1;
  uint64_t seed = 1;
  std::vector<AlignerConfig> configs;
  SolverConfig solver;
  SuccessThresholds thresholds;
  int threads = 0;  // 0 = hardware concurrency
};

struct TrialRecord {
  std::string config_id;
  int trial_id = 0;
  double init_rotation_error_deg = 0.0;
  double init_translation_error_m = 0.0;
  double final_rotation_error_deg = 0.0;
  double final_translation_error_m = 0.0;
  bool converged = false;
  bool success = false;
  int iterations = 0;
  double wall_time_s = 0.0;  // kept out of the CSV so re-runs stay byte-identical
};

struct ConfigSummary {
  std::string config_id;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
};

struct BasinReport {
  std::vector<TrialRecord> records;  // ordered by (config index, trial id)
  std::vector<ConfigSummary> summaries;
  double rotation_noise_deg = 0.0;
  double translation_noise_frac = 0.0;
};

BasinReport run_basin(const BasinTrialSpec& spec);

struct SweepPoint {
  double rotation_noise_deg;
  double translation_noise_frac;
};

struct BasinSweepReport {
  std::vector<BasinReport> points;
  // Config ids whose success rate rose by more than two binomial sigmas
  // between consecutive magnitudes.
  std::vector<std::string> monotonicity_flags;
};

BasinSweepReport run_basin_sweep(const BasinTrialSpec& base,
                                 const std::vector<SweepPoint>& magnitudes);

struct SkipTrialSpec {
  SyntheticScene scene;
  int num_frames = 36;
  double step_deg = 2.0;
  double step_accel_deg = 0.0;
  // When positive, a sinusoidal swing (make_swing_sequence) replaces the
  // monotone orbit.
  double swing_amplitude_deg = 0.0;
  double swing_period_frames = 0.0;
  std::optional<std::string> sequence_dir;  // TUM directory instead of the orbit
  std::vector<int> skips = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
  int runs_per_skip = 2;  // runs differ only by RNG seed
  double acceptable_multiplier = 3.0;
  uint64_t seed = 1;
  std::vector<AlignerConfig> configs;
  SolverConfig solver;
  SuccessThresholds thresholds;
};

struct SkipRunRecord {
  std::string config_id;
  int skip = 0;
  int run = 0;
  bool lost_tracking = false;
  int pairs_tracked = 0;
  double ate_rmse_m = 0.0;  // NaN when lost before 2 poses
  bool acceptable = false;  // ATE <= multiplier * skip-0 ATE
};

// The two headline numbers are contiguous maxima over the ascending skip
// list: the largest skip such that every tested skip up to it passed. A
// lucky recovery at a higher skip after an earlier failure does not count.
struct SkipConfigSummary {
  std::string config_id;
  double reference_ate_m = 0.0;  // skip-0 ATE
  int max_skip_acceptable = 0;   // every run acceptable through this skip
  int max_skip_without_loss = 0; // no run lost tracking through this skip
};

struct SkipReport {
  std::vector<SkipRunRecord> records;
  std::vector<SkipConfigSummary> summaries;
};

SkipReport run_skip(const SkipTrialSpec& spec);

// Geodesic rotation angle (degrees) and translation gap (meters).
std::pair<double, double> pose_error(const SE3Pose& estimated, const SE3Pose& ground_truth);

// RMSE of translation gaps after closed-form rigid alignment (orthogonal
// Procrustes on the translations). Throws TooFewPoints below 2 poses.
double ate_rmse(const std::vector<SE3Pose>& estimated, const std::vector<SE3Pose>& ground_truth);

// CSV column order is part of the interface; a non-empty metadata string
// is written first as a single "# ..." comment line so every artifact
// carries its resolved configuration.
// config,trial,init_rot_deg,init_trans_m,final_rot_deg,final_trans_m,converged,success,iterations
void write_basin_csv(const std::string& path, const BasinReport& report,
                     const std::string& metadata = "");
// config,skip,run,lost,pairs,ate_rmse_m,acceptable
void write_skip_csv(const std::string& path, const SkipReport& report,
                    const std::string& metadata = "");

void write_basin_summary_json(const std::string& path, const BasinTrialSpec& spec,
                              const BasinReport& report, double wall_time_s);
void write_sweep_summary_json(const std::string& path, const BasinTrialSpec& spec,
                              const std::vector<SweepPoint>& magnitudes,
                              const BasinSweepReport& report, double wall_time_s);
void write_skip_summary_json(const std::string& path, const SkipTrialSpec& spec,
                             const SkipReport& report, double wall_time_s);

void write_sweep_svg(const std::string& path, const std::vector<SweepPoint>& magnitudes,
                     const BasinSweepReport& report, const std::string& metadata = "");
void write_skip_svg(const std::string& path, const SkipReport& report,
                    const std::string& metadata = "");

// Deterministic indexed parallel map; results land by index regardless of
// scheduling.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace flownorm
