#include "flownorm/flow_init.hpp"

#include <cmath>
#include <limits>

namespace flownorm {

namespace {

struct GeomCorrespondence {
  Vec2 pixel_level0;
  double inverse_depth;
  Vec2 flow_position;
};

struct GeomEval {
  Eigen::VectorXd weights;             // vector Huber weight per correspondence
  std::vector<Vec2> residuals;
  std::vector<uint8_t> valid;
  double cost = std::numeric_limits<double>::infinity();
};

// Projection without image-bounds masking: the geometric error is defined
// wherever the point stays in front of the camera.
bool project_unbounded(const Vec2& pixel, const SE3Pose& pose, double inverse_depth,
                       const CameraIntrinsics& k, Vec2& out, Vec3& transformed) {
  const Vec3 ray((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  transformed = pose.apply(ray / inverse_depth);
  if (transformed.z() < kDepthFloor) return false;
  const double inv_z = 1.0 / transformed.z();
  out.x() = k.fx * transformed.x() * inv_z + k.cx;
  out.y() = k.fy * transformed.y() * inv_z + k.cy;
  return true;
}

GeomEval evaluate_geometric(const std::vector<GeomCorrespondence>& corr, const SE3Pose& pose,
                            const CameraIntrinsics& k) {
  GeomEval ev;
  const int n = static_cast<int>(corr.size());
  ev.weights = Eigen::VectorXd::Zero(n);
  ev.residuals.assign(n, Vec2::Zero());
  ev.valid.assign(n, 0);

  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    Vec2 projected;
    Vec3 transformed;
    if (!project_unbounded(corr[i].pixel_level0, pose, corr[i].inverse_depth, k, projected,
                           transformed)) {
      continue;
    }
    const Vec2 r = projected - corr[i].flow_position;
    const double norm = r.norm();
    ev.residuals[i] = r;
    ev.weights[i] = norm <= kFlowInitHuberPx ? 1.0 : kFlowInitHuberPx / norm;
    ev.valid[i] = 1;
    sum += ev.weights[i] * r.squaredNorm();
    ++count;
  }
  if (count >= kMinPoints) ev.cost = sum / count;
  return ev;
}

Mat26 geometric_jacobian(const Vec2& pixel, const SE3Pose& pose, double inverse_depth,
                         const CameraIntrinsics& k) {
  Vec2 projected;
  Vec3 p;
  project_unbounded(pixel, pose, inverse_depth, k, projected, p);
  const double inv_z = 1.0 / p.z();
  Mat23 proj;
  proj << k.fx * inv_z, 0.0, -k.fx * p.x() * inv_z * inv_z,
          0.0, k.fy * inv_z, -k.fy * p.y() * inv_z * inv_z;
  Mat26 jac;
  jac.block<2, 3>(0, 0) = proj;
  Mat33 skew;
  skew << 0.0, -p.z(), p.y(), p.z(), 0.0, -p.x(), -p.y(), p.x(), 0.0;
  jac.block<2, 3>(0, 3) = -proj * skew;
  return jac;
}

}  // namespace

FlowInitResult flow_init_pose(const PointSet& points, const FlowField& flow,
                              const CameraIntrinsics& intrinsics) {
  std::vector<GeomCorrespondence> corr;
  corr.reserve(points.landmarks.size());
  for (const Landmark& lm : points.landmarks) {
    const Vec2 p0 = pixel_to_level(lm.pixel, points.source_level, 0);
    const FlowQuery q = query_flow(flow, p0, 0);
    if (!q.valid) continue;
    corr.push_back({p0, lm.inverse_depth, q.flow_position});
  }
  if (static_cast<int>(corr.size()) < kMinPoints) {
    throw Error(ErrorKind::TooFewPoints,
                "only " + std::to_string(corr.size()) + " correspondences with valid flow");
  }

  FlowInitResult result;
  SE3Pose pose;  // identity start
  GeomEval ev = evaluate_geometric(corr, pose, intrinsics);
  if (!std::isfinite(ev.cost)) return result;  // fallback: identity, not converged

  double lambda = 1e-4;
  const int max_iterations = 100;
  bool terminated = false;
  for (int iter = 0; iter < max_iterations; ++iter) {
    ++result.iterations;
    Mat66 hessian = Mat66::Zero();
    Vec6 rhs = Vec6::Zero();
    for (size_t i = 0; i < corr.size(); ++i) {
      if (!ev.valid[i]) continue;
      const Mat26 jac = geometric_jacobian(corr[i].pixel_level0, pose,
                                           corr[i].inverse_depth, intrinsics);
      hessian.noalias() += ev.weights[i] * jac.transpose() * jac;
      rhs.noalias() -= ev.weights[i] * jac.transpose() * ev.residuals[i];
    }
    Mat66 damped = hessian;
    damped.diagonal() += lambda * hessian.diagonal();
    const Vec6 step = damped.ldlt().solve(rhs);
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e14) break;
      continue;
    }
    if (step.norm() < 1e-10) {
      terminated = true;
      break;
    }
    const SE3Pose candidate = retract(pose, step);
    const GeomEval cand = evaluate_geometric(corr, candidate, intrinsics);
    // Frozen-weight comparison, matching the photometric solver's rule.
    double cur = 0.0, next = 0.0;
    int common = 0;
    for (size_t i = 0; i < corr.size(); ++i) {
      if (!ev.valid[i] || !cand.valid[i]) continue;
      cur += ev.weights[i] * ev.residuals[i].squaredNorm();
      next += ev.weights[i] * cand.residuals[i].squaredNorm();
      ++common;
    }
    if (common >= kMinPoints && next < cur) {
      pose = candidate;
      ev = cand;
      lambda = std::max(lambda * 0.5, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
  }

  if (terminated && std::isfinite(ev.cost)) {
    result.pose = pose;
    result.converged = true;
    result.geometric_cost = ev.cost;
  }
  return result;
}

InitCandidateQueue make_candidate_queue(const SE3Pose* previous_relative,
                                        const SE3Pose* flow_init, bool include_identity) {
  InitCandidateQueue queue;
  if (previous_relative) queue.candidates.push_back({"previous-relative", *previous_relative});
  if (flow_init) queue.candidates.push_back({"flow-init", *flow_init});
  if (include_identity || queue.candidates.empty()) {
    queue.candidates.push_back({"identity", SE3Pose::identity()});
  }
  return queue;
}

CandidateOutcome try_candidates(const InitCandidateQueue& queue, const PyramidImage& source,
                                const PyramidImage& target, const PointSet& points,
                                const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                                const SolverConfig& cfg) {
  if (queue.candidates.empty()) {
    throw Error(ErrorKind::InvalidConfig, "empty initialization queue");
  }

  // A converged run can still sit in a wrong photometric minimum, so the
  // coarsest-level cost-decrease criterion alone cannot end the queue.
  // Only an essentially perfect fit short-circuits; otherwise every
  // candidate runs and the cheapest criterion-passer wins (queue order
  // breaks ties), falling back to the cheapest attempt overall.
  constexpr double kDecisiveCost = 1.0;  // mean weighted squared residual

  CandidateOutcome best, best_passing;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_passing_cost = std::numeric_limits<double>::infinity();
  int failures = 0;
  std::exception_ptr last_error;

  for (size_t i = 0; i < queue.candidates.size(); ++i) {
    AlignmentResult result;
    try {
      result = solve_pose(source, target, points, queue.candidates[i].pose, flow,
                          intrinsics_level0, cfg);
    } catch (const Error&) {
      ++failures;
      last_error = std::current_exception();
      continue;
    }

    const LevelStats& coarsest = result.levels.front();
    const bool acceptable =
        result.converged && coarsest.final_cost <= coarsest.initial_cost;

    CandidateOutcome out;
    out.result = std::move(result);
    out.candidate_index = static_cast<int>(i);
    out.candidate_name = queue.candidates[i].name;

    if (acceptable && out.result.final_cost < kDecisiveCost) return out;
    if (acceptable && out.result.final_cost < best_passing_cost) {
      best_passing_cost = out.result.final_cost;
      best_passing = out;
    }
    if (out.result.final_cost < best_cost) {
      best_cost = out.result.final_cost;
      best = std::move(out);
    }
  }

  if (failures == static_cast<int>(queue.candidates.size())) {
    std::rethrow_exception(last_error);
  }
  return best_passing.candidate_index >= 0 ? best_passing : best;
}

}  // namespace flownorm
