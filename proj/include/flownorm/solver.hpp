#pragma once

#include <optional>
#include <vector>

#include "flownorm/flow.hpp"
#include "flownorm/residuals.hpp"
#include "flownorm/robust_norm.hpp"

namespace flownorm {

struct SolverConfig {
  int max_iterations_per_level = 50;
  double step_norm_threshold = 1e-6;
  double lm_initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  int pyramid_levels = kDefaultPyramidLevels;
  // Levels where the flow factor participates; default the two coarsest
  // of four. Other levels run Huber-only.
  std::vector<int> flownorm_levels = {3, 2};
  double huber_delta = kDefaultHuberDelta;
  FlowNormParams flow_norm;
  ResidualConfig residual;
  bool joint_depth = false;
  int max_joint_rounds = 5;

  // Instrumentation.
  bool force_unit_flow_factors = false;  // compute factors, then use exactly 1.0
  bool record_trace = false;
  bool record_iterates = false;

  bool uses_flownorm_at(int level) const {
    for (int l : flownorm_levels)
      if (l == level) return true;
    return false;
  }
};

struct TraceRow {
  int level = 0;
  int iteration = 0;
  double lambda = 0.0;
  double cost_before = 0.0;  // frozen-weight cost entering the comparison
  double cost_after = 0.0;   // frozen-weight candidate cost (same row subset)
  double cost = 0.0;         // recomputed full weighted cost after the step
  double step_norm = 0.0;
  double downweighted_fraction = 0.0;
  bool accepted = false;
};

struct LevelStats {
  int level = 0;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double downweighted_fraction = 0.0;
  int flow_factor_applied_rows = 0;  // rows that received a non-unit flow factor
  bool flownorm_active = false;
  bool terminated_by_step_norm = false;
  std::vector<double> outer_costs;  // joint alternation, one entry per round
};

struct AlignmentResult {
  SE3Pose pose;
  bool converged = false;
  std::vector<LevelStats> levels;  // coarse-to-fine execution order
  double final_cost = 0.0;         // finest-level final weighted cost
  int total_iterations = 0;
  // Mean |p' - p°| over rows with a valid flow query at the final pose,
  // full-resolution pixels. Empty when no flow field was supplied.
  std::optional<double> mean_flow_gap_px;
  std::vector<TraceRow> trace;
  std::vector<SE3Pose> iterates;  // initial pose plus every accepted step
};

// Coarse-to-fine LM minimization of the weighted photometric cost. The
// weight of each row is huber(e) times the flow factor on levels in
// cfg.flownorm_levels when `flow` is non-null. Step acceptance compares
// frozen-weight costs over the rows valid on both sides; weights are
// recomputed only after acceptance.
AlignmentResult solve_pose(const PyramidImage& source, const PyramidImage& target,
                           const PointSet& points, const SE3Pose& initial_pose,
                           const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                           const SolverConfig& cfg);

struct JointResult {
  AlignmentResult alignment;
  PointSet points;
};

// Alternates per-level pose passes with independent scalar inverse-depth
// steps (cfg.joint_depth is implied). Per-level outer costs are recorded
// in LevelStats::outer_costs.
JointResult solve_joint(const PyramidImage& source, const PyramidImage& target,
                        const PointSet& points, const SE3Pose& initial_pose,
                        const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                        const SolverConfig& cfg);

// Reference Huber-only LM solver on the unweighted-by-flow normal
// equations. Kept as a deliberately separate code path: with flow factors
// forced to one, solve_pose must reproduce its iterates bit for bit.
AlignmentResult plain_solve_huber(const PyramidImage& source, const PyramidImage& target,
                                  const PointSet& points, const SE3Pose& initial_pose,
                                  const CameraIntrinsics& intrinsics_level0,
                                  const SolverConfig& cfg);

void write_trace_csv(const std::string& path, const AlignmentResult& result,
                     const std::string& norm_mode_label, const std::string& metadata = "");

}  // namespace flownorm
