#pragma once

#include <string>
#include <vector>

#include "flownorm/solver.hpp"

namespace flownorm {

struct FlowInitResult {
  SE3Pose pose;                // identity when the solve did not converge
  bool converged = false;
  double geometric_cost = 0.0; // mean Huberized squared reprojection gap, px^2
  int iterations = 0;
};

inline constexpr double kFlowInitHuberPx = 2.0;

// Initial pose from flow correspondences: LM minimization of the Huberized
// squared gap between projected points and their flow positions, started
// from identity. Throws TooFewPoints when fewer than 6 landmarks have a
// valid flow query; falls back to identity (converged=false) when the
// geometric solve stalls without converging.
FlowInitResult flow_init_pose(const PointSet& points, const FlowField& flow,
                              const CameraIntrinsics& intrinsics);

struct InitCandidate {
  std::string name;
  SE3Pose pose;
};

struct InitCandidateQueue {
  std::vector<InitCandidate> candidates;
};

// Standard tracker queue: previous relative pose first, then the flow
// initialization when available, then identity.
InitCandidateQueue make_candidate_queue(const SE3Pose* previous_relative,
                                        const SE3Pose* flow_init, bool include_identity = true);

struct CandidateOutcome {
  AlignmentResult result;
  int candidate_index = -1;
  std::string candidate_name;
};

// Runs solve_pose from each candidate in order and returns the first one
// that converged without raising its coarsest-level cost; if none qualifies,
// the best-final-cost attempt wins (lowest queue index on ties).
CandidateOutcome try_candidates(const InitCandidateQueue& queue, const PyramidImage& source,
                                const PyramidImage& target, const PointSet& points,
                                const FlowField* flow, const CameraIntrinsics& intrinsics_level0,
                                const SolverConfig& cfg);

}  // namespace flownorm
