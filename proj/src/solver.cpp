#include "flownorm/solver.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace flownorm {

namespace {

constexpr double kLambdaFloor = 1e-12;
constexpr double kLambdaCeiling = 1e14;

void validate_config(const SolverConfig& cfg) {
  if (cfg.pyramid_levels < 1 || cfg.max_iterations_per_level < 1 ||
      cfg.step_norm_threshold <= 0.0 || cfg.lm_initial_lambda <= 0.0 ||
      cfg.lambda_up <= 1.0 || cfg.lambda_down <= 0.0 || cfg.lambda_down >= 1.0 ||
      cfg.huber_delta <= 0.0 || !cfg.flow_norm.valid()) {
    throw Error(ErrorKind::InvalidConfig, "bad solver configuration");
  }
  for (int level : cfg.flownorm_levels) {
    if (level < 0 || level >= cfg.pyramid_levels) {
      throw Error(ErrorKind::InvalidConfig,
                  "flow-norm level " + std::to_string(level) + " outside the pyramid");
    }
  }
}

double huber_energy_mean(const WeightedSystem& sys, double delta) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < sys.rows(); ++i) {
    if (!sys.valid[i]) continue;
    const double abs_e = std::abs(sys.residuals[i]);
    sum += abs_e <= delta ? 0.5 * abs_e * abs_e : delta * (abs_e - 0.5 * delta);
    ++count;
  }
  return count == 0 ? std::numeric_limits<double>::infinity() : sum / count;
}

// Frozen-weight comparison over the rows valid on both sides. Returns false
// when too few rows survive in both systems.
bool frozen_cost_pair(const WeightedSystem& current, const WeightedSystem& candidate,
                      double& cost_current, double& cost_candidate) {
  double num_cur = 0.0, num_cand = 0.0;
  int common = 0;
  for (int i = 0; i < current.rows(); ++i) {
    if (!current.valid[i] || !candidate.valid[i]) continue;
    const double w = current.weights[i];
    num_cur += w * current.residuals[i] * current.residuals[i];
    num_cand += w * candidate.residuals[i] * candidate.residuals[i];
    ++common;
  }
  if (common < kMinPoints) return false;
  cost_current = num_cur / common;
  cost_candidate = num_cand / common;
  return true;
}

// One coarse-to-fine level of the flow-weighted LM loop.
LevelStats run_level(SE3Pose& pose, int level, const PyramidImage& source,
                     const PyramidImage& target, const PointSet& points,
                     const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                     const SolverConfig& cfg, AlignmentResult& result) {
  const CameraIntrinsics k_level = intrinsics_level0.scaled_for_level(level);
  const bool use_fn = flow != nullptr && cfg.uses_flownorm_at(level);

  LevelStats stats;
  stats.level = level;
  stats.flownorm_active = use_fn;

  auto compose = [&](WeightedSystem& sys) {
    ComposeStats c = flow ? compose_weights(sys, *flow, cfg.flow_norm, cfg.huber_delta,
                                            use_fn, cfg.force_unit_flow_factors)
                          : compose_weights_huber(sys, cfg.huber_delta);
    stats.flow_factor_applied_rows += c.rows_flow_applied;
    stats.downweighted_fraction =
        c.rows_total > 0 ? static_cast<double>(c.rows_downweighted) / c.rows_total : 0.0;
    return c;
  };

  WeightedSystem sys = evaluate(points, source, target, pose, k_level, level, cfg.residual);
  compose(sys);
  double cost = weighted_mean_cost(sys);
  stats.initial_cost = cost;

  double lambda = cfg.lm_initial_lambda;
  for (int iter = 0; iter < cfg.max_iterations_per_level; ++iter) {
    ++stats.iterations;
    const NormalEquations eq = accumulate_normal_equations(sys);
    Mat66 damped = eq.hessian;
    damped.diagonal() += lambda * eq.hessian.diagonal();
    const Vec6 step = damped.ldlt().solve(eq.rhs);

    TraceRow row;
    row.level = level;
    row.iteration = iter;
    row.lambda = lambda;
    row.cost = cost;
    row.downweighted_fraction = stats.downweighted_fraction;

    if (!step.allFinite()) {
      if (lambda >= kLambdaCeiling) {
        throw Error(ErrorKind::DegenerateSystem,
                    "normal equations rank-deficient at level " + std::to_string(level));
      }
      lambda *= cfg.lambda_up;
      if (cfg.record_trace) result.trace.push_back(row);
      continue;
    }

    row.step_norm = step.norm();
    if (row.step_norm < cfg.step_norm_threshold) {
      stats.terminated_by_step_norm = true;
      if (cfg.record_trace) result.trace.push_back(row);
      break;
    }

    const SE3Pose candidate = retract(pose, step);
    bool have_candidate = true;
    WeightedSystem cand_sys;
    try {
      cand_sys = evaluate(points, source, target, candidate, k_level, level, cfg.residual);
    } catch (const Error&) {
      have_candidate = false;
    }

    double cost_before = std::numeric_limits<double>::infinity();
    double cost_after = std::numeric_limits<double>::infinity();
    if (have_candidate && !frozen_cost_pair(sys, cand_sys, cost_before, cost_after)) {
      have_candidate = false;
    }
    row.cost_before = cost_before;
    row.cost_after = cost_after;

    if (have_candidate && cost_after < cost_before) {
      pose = candidate;
      sys = std::move(cand_sys);
      compose(sys);
      cost = weighted_mean_cost(sys);
      lambda = std::max(lambda * cfg.lambda_down, kLambdaFloor);
      row.accepted = true;
      row.cost = cost;
      if (cfg.record_iterates) result.iterates.push_back(pose);
      if (cfg.record_trace) result.trace.push_back(row);
    } else {
      lambda *= cfg.lambda_up;
      if (cfg.record_trace) result.trace.push_back(row);
      if (lambda > kLambdaCeiling) break;
    }
  }

  stats.final_cost = cost;
  return stats;
}

void finalize_result(AlignmentResult& result, const PyramidImage& source,
                     const PyramidImage& target, const PointSet& points,
                     const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                     const SolverConfig& cfg) {
  result.total_iterations = 0;
  for (const LevelStats& s : result.levels) result.total_iterations += s.iterations;
  if (!result.levels.empty()) {
    const LevelStats& finest = result.levels.back();
    result.final_cost = finest.final_cost;
    result.converged = finest.level == 0 && finest.terminated_by_step_norm &&
                       std::isfinite(finest.final_cost);
  }

  if (flow != nullptr) {
    try {
      const CameraIntrinsics k0 = intrinsics_level0.scaled_for_level(0);
      const WeightedSystem sys =
          evaluate(points, source, target, result.pose, k0, 0, cfg.residual);
      double gap_sum = 0.0;
      int gap_count = 0;
      for (int i = 0; i < sys.rows(); ++i) {
        if (!sys.valid[i] || !sys.is_central[i]) continue;
        const FlowQuery q = query_flow(*flow, sys.source_px[i], 0);
        if (!q.valid) continue;
        gap_sum += (sys.projected_px[i] - q.flow_position).norm();
        ++gap_count;
      }
      if (gap_count > 0) result.mean_flow_gap_px = gap_sum / gap_count;
    } catch (const Error&) {
      // final pose projects too few points; no gap statistic
    }
  }
}

}  // namespace

AlignmentResult solve_pose(const PyramidImage& source, const PyramidImage& target,
                           const PointSet& points, const SE3Pose& initial_pose,
                           const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                           const SolverConfig& cfg) {
  if (cfg.joint_depth) {
    return solve_joint(source, target, points, initial_pose, flow, intrinsics_level0, cfg)
        .alignment;
  }
  validate_config(cfg);
  if (points.size() < kMinPoints) {
    throw Error(ErrorKind::TooFewPoints, "need at least 6 points to solve a pose");
  }

  AlignmentResult result;
  result.pose = initial_pose;
  if (cfg.record_iterates) result.iterates.push_back(initial_pose);

  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    result.levels.push_back(run_level(result.pose, level, source, target, points, flow,
                                      intrinsics_level0, cfg, result));
  }
  finalize_result(result, source, target, points, flow, intrinsics_level0, cfg);
  return result;
}

JointResult solve_joint(const PyramidImage& source, const PyramidImage& target,
                        const PointSet& points, const SE3Pose& initial_pose,
                        const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                        const SolverConfig& cfg) {
  validate_config(cfg);
  if (points.size() < kMinPoints) {
    throw Error(ErrorKind::TooFewPoints, "need at least 6 points to solve a pose");
  }

  SolverConfig level_cfg = cfg;
  level_cfg.joint_depth = false;

  JointResult out;
  out.points = points;
  AlignmentResult& result = out.alignment;
  result.pose = initial_pose;
  if (cfg.record_iterates) result.iterates.push_back(initial_pose);

  ResidualConfig depth_cfg = cfg.residual;
  depth_cfg.with_depth_jacobian = true;

  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    LevelStats merged;
    merged.level = level;
    double previous_cost = std::numeric_limits<double>::infinity();

    for (int round = 0; round < std::max(1, cfg.max_joint_rounds); ++round) {
      LevelStats pass = run_level(result.pose, level, source, target, out.points, flow,
                                  intrinsics_level0, level_cfg, result);
      if (round == 0) merged.initial_cost = pass.initial_cost;
      merged.iterations += pass.iterations;
      merged.flownorm_active = pass.flownorm_active;
      merged.flow_factor_applied_rows += pass.flow_factor_applied_rows;
      merged.downweighted_fraction = pass.downweighted_fraction;
      merged.terminated_by_step_norm = pass.terminated_by_step_norm;
      merged.final_cost = pass.final_cost;

      out.points = update_inverse_depths(out.points, source, target, result.pose,
                                         intrinsics_level0, level, depth_cfg);

      const CameraIntrinsics k_level = intrinsics_level0.scaled_for_level(level);
      const WeightedSystem sys =
          evaluate(out.points, source, target, result.pose, k_level, level, cfg.residual);
      const double outer = huber_energy_mean(sys, cfg.huber_delta);
      merged.outer_costs.push_back(outer);

      if (previous_cost - outer < 1e-12 * std::max(1.0, previous_cost)) {
        previous_cost = outer;
        break;
      }
      previous_cost = outer;
    }
    result.levels.push_back(std::move(merged));
  }

  finalize_result(result, source, target, out.points, flow, intrinsics_level0, cfg);
  return out;
}

AlignmentResult plain_solve_huber(const PyramidImage& source, const PyramidImage& target,
                                  const PointSet& points, const SE3Pose& initial_pose,
                                  const CameraIntrinsics& intrinsics_level0,
                                  const SolverConfig& cfg) {
  validate_config(cfg);
  if (points.size() < kMinPoints) {
    throw Error(ErrorKind::TooFewPoints, "need at least 6 points to solve a pose");
  }

  AlignmentResult result;
  result.pose = initial_pose;
  if (cfg.record_iterates) result.iterates.push_back(initial_pose);

  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    const CameraIntrinsics k_level = intrinsics_level0.scaled_for_level(level);
    LevelStats stats;
    stats.level = level;

    WeightedSystem sys =
        evaluate(points, source, target, result.pose, k_level, level, cfg.residual);
    compose_weights_huber(sys, cfg.huber_delta);
    double cost = weighted_mean_cost(sys);
    stats.initial_cost = cost;

    double lambda = cfg.lm_initial_lambda;
    for (int iter = 0; iter < cfg.max_iterations_per_level; ++iter) {
      ++stats.iterations;
      const NormalEquations eq = accumulate_normal_equations(sys);
      Mat66 damped = eq.hessian;
      damped.diagonal() += lambda * eq.hessian.diagonal();
      const Vec6 step = damped.ldlt().solve(eq.rhs);

      TraceRow row;
      row.level = level;
      row.iteration = iter;
      row.lambda = lambda;
      row.cost = cost;

      if (!step.allFinite()) {
        if (lambda >= kLambdaCeiling) {
          throw Error(ErrorKind::DegenerateSystem,
                      "normal equations rank-deficient at level " + std::to_string(level));
        }
        lambda *= cfg.lambda_up;
        if (cfg.record_trace) result.trace.push_back(row);
        continue;
      }

      row.step_norm = step.norm();
      if (row.step_norm < cfg.step_norm_threshold) {
        stats.terminated_by_step_norm = true;
        if (cfg.record_trace) result.trace.push_back(row);
        break;
      }

      const SE3Pose candidate = retract(result.pose, step);
      bool have_candidate = true;
      WeightedSystem cand_sys;
      try {
        cand_sys = evaluate(points, source, target, candidate, k_level, level, cfg.residual);
      } catch (const Error&) {
        have_candidate = false;
      }

      double cost_before = std::numeric_limits<double>::infinity();
      double cost_after = std::numeric_limits<double>::infinity();
      if (have_candidate && !frozen_cost_pair(sys, cand_sys, cost_before, cost_after)) {
        have_candidate = false;
      }
      row.cost_before = cost_before;
      row.cost_after = cost_after;

      if (have_candidate && cost_after < cost_before) {
        result.pose = candidate;
        sys = std::move(cand_sys);
        compose_weights_huber(sys, cfg.huber_delta);
        cost = weighted_mean_cost(sys);
        lambda = std::max(lambda * cfg.lambda_down, kLambdaFloor);
        row.accepted = true;
        row.cost = cost;
        if (cfg.record_iterates) result.iterates.push_back(result.pose);
        if (cfg.record_trace) result.trace.push_back(row);
      } else {
        lambda *= cfg.lambda_up;
        if (cfg.record_trace) result.trace.push_back(row);
        if (lambda > kLambdaCeiling) break;
      }
    }

    stats.final_cost = cost;
    result.levels.push_back(std::move(stats));
  }

  finalize_result(result, source, target, points, nullptr, intrinsics_level0, cfg);
  return result;
}

void write_trace_csv(const std::string& path, const AlignmentResult& result,
                     const std::string& norm_mode_label, const std::string& metadata) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  std::fprintf(f, "# norm_mode=%s\n", norm_mode_label.c_str());
  if (!metadata.empty()) std::fprintf(f, "# %s\n", metadata.c_str());
  std::fprintf(f, "level,iter,lambda,cost,step_norm,downweighted_fraction,accepted\n");
  for (const TraceRow& r : result.trace) {
    std::fprintf(f, "%d,%d,%.9g,%.9g,%.9g,%.9g,%d\n", r.level, r.iteration, r.lambda, r.cost,
                 r.step_norm, r.downweighted_fraction, r.accepted ? 1 : 0);
  }
  std::fclose(f);
}

}  // namespace flownorm
