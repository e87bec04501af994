#pragma once

#include <cstdint>
#include <vector>

#include "flownorm/geometry.hpp"
#include "flownorm/image.hpp"

namespace flownorm {

struct PointSet {
  std::vector<Landmark> landmarks;  // pixels at source_level coordinates
  int source_level = 0;

  int size() const { return static_cast<int>(landmarks.size()); }
};

inline constexpr int kMinPoints = 6;  // pose observability floor
inline constexpr int kSelectionCellSize = 8;

// DSO-style residual pattern, central pixel first.
inline constexpr int kPatchSize = 8;
inline constexpr int kPatchOffsets[kPatchSize][2] = {
    {0, 0}, {-2, 0}, {2, 0}, {0, -2}, {0, 2}, {-1, -1}, {1, -1}, {-1, 1}};

struct ResidualConfig {
  bool use_patch = false;           // 8-point patch per landmark instead of 1 pixel
  bool with_depth_jacobian = false; // also fill d(e)/d(inverse depth)
};

// Stacked residual vector, Jacobian and diagonal weights for one
// (points, pose, level) evaluation. Rows of one patch share point_index;
// the flow factor is decided on the row flagged is_central.
struct WeightedSystem {
  Eigen::VectorXd residuals;                       // N
  Eigen::Matrix<double, Eigen::Dynamic, 6> jacobian;  // N x 6
  Eigen::VectorXd depth_jacobian;                  // N (zero unless requested)
  Eigen::VectorXd weights;                         // diag of S, in [0,1]
  std::vector<uint8_t> valid;

  // Per-row geometry consumed by the robust norm.
  std::vector<Vec2> source_px;     // at evaluation level
  std::vector<Vec2> projected_px;  // at evaluation level
  std::vector<Vec2> gradient;      // de/dp' at evaluation level
  std::vector<int> point_index;
  std::vector<uint8_t> is_central;

  int level = 0;
  int rows() const { return static_cast<int>(residuals.size()); }
  int valid_count() const;
};

// Picks up to target_count high-gradient pixels, at most one per 8x8 grid
// cell per round, above the level's median gradient magnitude, restricted
// to pixels with valid depth. Deterministic. Throws TooFewPoints when
// fewer than kMinPoints are selectable.
PointSet select_points(const PyramidImage& pyr, const GrayImage& depth_level0,
                       int level, int target_count);

// Photometric residuals e_i = I_t(p'_i) - I_s(p_i) and their pose (and
// optional inverse-depth) Jacobians at the given pyramid level.
// `intrinsics` must already be scaled to the level. Rows whose projection
// or sample is invalid are masked with weight 0; weights of live rows
// start at 1. Throws DegenerateSystem when fewer than kMinPoints rows
// survive.
WeightedSystem evaluate(const PointSet& points, const PyramidImage& source,
                        const PyramidImage& target, const SE3Pose& pose,
                        const CameraIntrinsics& intrinsics, int level,
                        const ResidualConfig& config = {});

// One guarded scalar Gauss-Newton step on each landmark's inverse depth at
// fixed pose (step halved up to 8 times until the point's squared residual
// does not increase; points that cannot improve are left unchanged).
// Inverse depths stay positive.
PointSet update_inverse_depths(const PointSet& points, const PyramidImage& source,
                               const PyramidImage& target, const SE3Pose& pose,
                               const CameraIntrinsics& intrinsics_level0, int level,
                               const ResidualConfig& config = {});

struct NormalEquations {
  Mat66 hessian = Mat66::Zero();   // J^T S J
  Vec6 rhs = Vec6::Zero();         // -J^T S E
};

// Deterministic row-order accumulation of the weighted normal equations.
NormalEquations accumulate_normal_equations(const WeightedSystem& system);

// Mean weighted squared residual over valid rows.
double weighted_mean_cost(const WeightedSystem& system);

}  // namespace flownorm
