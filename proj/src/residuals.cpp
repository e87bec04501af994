#include "flownorm/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flownorm {

int WeightedSystem::valid_count() const {
  int n = 0;
  for (uint8_t v : valid) n += v != 0;
  return n;
}

namespace {

struct Candidate {
  double grad_mag;
  int x, y;
  bool operator<(const Candidate& o) const {
    if (grad_mag != o.grad_mag) return grad_mag > o.grad_mag;
    return y != o.y ? y < o.y : x < o.x;  // deterministic tie-break
  }
};

double level0_depth_at(const GrayImage& depth, const Vec2& p_level, int level) {
  const Vec2 p0 = pixel_to_level(p_level, level, 0);
  const int x = static_cast<int>(std::lround(p0.x()));
  const int y = static_cast<int>(std::lround(p0.y()));
  if (!depth.in_bounds(x, y)) return 0.0;
  return depth.at(x, y);
}

}  // namespace

PointSet select_points(const PyramidImage& pyr, const GrayImage& depth_level0,
                       int level, int target_count) {
  if (level < 0 || level >= pyr.num_levels()) {
    throw Error(ErrorKind::InvalidConfig, "selection level outside pyramid");
  }
  const GrayImage& img = pyr.levels[level];
  const GrayImage& mag = pyr.grad_mag[level];

  // Threshold: median gradient magnitude over the level's interior.
  std::vector<double> mags;
  mags.reserve(static_cast<size_t>(img.width) * img.height);
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) mags.push_back(mag.at(x, y));
  }
  if (mags.empty()) throw Error(ErrorKind::TooFewPoints, "image has no interior pixels");
  const size_t mid = mags.size() / 2;
  std::nth_element(mags.begin(), mags.begin() + mid, mags.end());
  const double threshold = mags[mid];

  const int cells_x = (img.width + kSelectionCellSize - 1) / kSelectionCellSize;
  const int cells_y = (img.height + kSelectionCellSize - 1) / kSelectionCellSize;
  std::vector<std::vector<Candidate>> cells(static_cast<size_t>(cells_x) * cells_y);

  const int border = static_cast<int>(kProjectionMargin);
  for (int y = border; y < img.height - border; ++y) {
    for (int x = border; x < img.width - border; ++x) {
      if (mag.at(x, y) <= threshold) continue;
      if (level0_depth_at(depth_level0, Vec2(x, y), level) <= 0.0) continue;
      cells[(y / kSelectionCellSize) * cells_x + x / kSelectionCellSize].push_back(
          {mag.at(x, y), x, y});
    }
  }
  for (auto& cell : cells) std::sort(cell.begin(), cell.end());

  PointSet out;
  out.source_level = level;
  // Round-robin over cells: each round takes every cell's next-best pixel,
  // so no cell is overrepresented until all cells are drained.
  for (size_t round = 0; static_cast<int>(out.landmarks.size()) < target_count; ++round) {
    bool any = false;
    for (const auto& cell : cells) {
      if (round >= cell.size()) continue;
      any = true;
      const Candidate& c = cell[round];
      Landmark lm;
      lm.pixel = Vec2(c.x, c.y);
      lm.inverse_depth = 1.0 / level0_depth_at(depth_level0, lm.pixel, level);
      out.landmarks.push_back(lm);
      if (static_cast<int>(out.landmarks.size()) >= target_count) break;
    }
    if (!any) break;
  }

  if (out.size() < kMinPoints) {
    throw Error(ErrorKind::TooFewPoints,
                "only " + std::to_string(out.size()) + " selectable points");
  }
  return out;
}

WeightedSystem evaluate(const PointSet& points, const PyramidImage& source,
                        const PyramidImage& target, const SE3Pose& pose,
                        const CameraIntrinsics& intrinsics, int level,
                        const ResidualConfig& config) {
  if (level < 0 || level >= source.num_levels() || level >= target.num_levels()) {
    throw Error(ErrorKind::InvalidConfig, "evaluation level outside pyramid");
  }
  const GrayImage& src = source.levels[level];
  const GrayImage& tgt = target.levels[level];
  if (intrinsics.width != tgt.width || intrinsics.height != tgt.height) {
    throw Error(ErrorKind::InvalidConfig, "intrinsics not scaled to the evaluation level");
  }

  const int per_point = config.use_patch ? kPatchSize : 1;
  const int n = points.size() * per_point;

  WeightedSystem sys;
  sys.level = level;
  sys.residuals = Eigen::VectorXd::Zero(n);
  sys.jacobian = Eigen::Matrix<double, Eigen::Dynamic, 6>::Zero(n, 6);
  sys.depth_jacobian = Eigen::VectorXd::Zero(n);
  sys.weights = Eigen::VectorXd::Zero(n);
  sys.valid.assign(n, 0);
  sys.source_px.assign(n, Vec2::Zero());
  sys.projected_px.assign(n, Vec2::Zero());
  sys.gradient.assign(n, Vec2::Zero());
  sys.point_index.assign(n, 0);
  sys.is_central.assign(n, 0);

  for (int pi = 0; pi < points.size(); ++pi) {
    const Landmark& lm = points.landmarks[pi];
    const Vec2 p_src = pixel_to_level(lm.pixel, points.source_level, level);
    const Projection proj = project(p_src, pose, lm.inverse_depth, intrinsics);

    for (int k = 0; k < per_point; ++k) {
      const int row = pi * per_point + k;
      sys.point_index[row] = pi;
      sys.is_central[row] = k == 0;
      if (!proj.valid) continue;

      const Vec2 offset = config.use_patch
                              ? Vec2(kPatchOffsets[k][0], kPatchOffsets[k][1])
                              : Vec2::Zero();
      const auto s_src = sample_bilinear(src, p_src + offset);
      const auto s_tgt = sample_bilinear(tgt, proj.pixel + offset);
      if (!s_src || !s_tgt) continue;

      ProjectionJacobian jac = projection_jacobian(p_src, pose, lm.inverse_depth, intrinsics);

      sys.residuals[row] = s_tgt->value - s_src->value;
      sys.jacobian.row(row) = s_tgt->gradient.transpose() * jac.pose;
      if (config.with_depth_jacobian) {
        sys.depth_jacobian[row] = s_tgt->gradient.dot(jac.inverse_depth);
      }
      sys.weights[row] = 1.0;
      sys.valid[row] = 1;
      sys.source_px[row] = p_src + offset;
      sys.projected_px[row] = proj.pixel + offset;
      sys.gradient[row] = s_tgt->gradient;
    }
  }

  if (sys.valid_count() < kMinPoints) {
    throw Error(ErrorKind::DegenerateSystem,
                "only " + std::to_string(sys.valid_count()) + " valid residual rows");
  }
  return sys;
}

namespace {

struct PointResidual {
  double squared_sum = 0.0;
  double gn_numerator = 0.0;    // sum J_d * e
  double gn_denominator = 0.0;  // sum J_d^2
  int rows = 0;
};

// Residual and inverse-depth Jacobian of one landmark at a trial depth.
std::optional<PointResidual> point_residual(double inverse_depth, const GrayImage& src,
                                            const GrayImage& tgt, const SE3Pose& pose,
                                            const CameraIntrinsics& intrinsics,
                                            const Vec2& p_src, bool use_patch) {
  const Projection proj = project(p_src, pose, inverse_depth, intrinsics);
  if (!proj.valid) return std::nullopt;
  ProjectionJacobian jac;
  try {
    jac = projection_jacobian(p_src, pose, inverse_depth, intrinsics);
  } catch (const Error&) {
    return std::nullopt;
  }

  PointResidual out;
  const int per_point = use_patch ? kPatchSize : 1;
  for (int k = 0; k < per_point; ++k) {
    const Vec2 offset = use_patch ? Vec2(kPatchOffsets[k][0], kPatchOffsets[k][1]) : Vec2::Zero();
    const auto s_src = sample_bilinear(src, p_src + offset);
    const auto s_tgt = sample_bilinear(tgt, proj.pixel + offset);
    if (!s_src || !s_tgt) continue;
    const double e = s_tgt->value - s_src->value;
    const double jd = s_tgt->gradient.dot(jac.inverse_depth);
    out.squared_sum += e * e;
    out.gn_numerator += jd * e;
    out.gn_denominator += jd * jd;
    ++out.rows;
  }
  if (out.rows == 0) return std::nullopt;
  return out;
}

}  // namespace

PointSet update_inverse_depths(const PointSet& points, const PyramidImage& source,
                               const PyramidImage& target, const SE3Pose& pose,
                               const CameraIntrinsics& intrinsics_level0, int level,
                               const ResidualConfig& config) {
  const CameraIntrinsics k_level = intrinsics_level0.scaled_for_level(level);
  const GrayImage& src = source.levels[level];
  const GrayImage& tgt = target.levels[level];

  PointSet out = points;
  for (Landmark& lm : out.landmarks) {
    const Vec2 p_src = pixel_to_level(lm.pixel, points.source_level, level);
    const auto base = point_residual(lm.inverse_depth, src, tgt, pose, k_level, p_src,
                                     config.use_patch);
    if (!base || base->gn_denominator <= 1e-12) continue;  // depth unobservable here

    // Trust region: a scalar GN step against a nearly flat model can be
    // arbitrarily large; cap it at half the current inverse depth.
    double step = -base->gn_numerator / base->gn_denominator;
    step = std::clamp(step, -0.5 * lm.inverse_depth, 0.5 * lm.inverse_depth);
    bool accepted = false;
    for (int half = 0; half < 8 && !accepted; ++half, step *= 0.5) {
      const double trial_depth = std::max(lm.inverse_depth + step, 1e-6);
      const auto trial = point_residual(trial_depth, src, tgt, pose, k_level, p_src,
                                        config.use_patch);
      if (trial && trial->squared_sum <= base->squared_sum) {
        lm.inverse_depth = trial_depth;
        accepted = true;
      }
    }
  }
  return out;
}

NormalEquations accumulate_normal_equations(const WeightedSystem& system) {
  NormalEquations eq;
  for (int i = 0; i < system.rows(); ++i) {
    if (!system.valid[i]) continue;
    const double w = system.weights[i];
    const auto row = system.jacobian.row(i);
    eq.hessian.noalias() += w * row.transpose() * row;
    eq.rhs.noalias() -= w * row.transpose() * system.residuals[i];
  }
  return eq;
}

double weighted_mean_cost(const WeightedSystem& system) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < system.rows(); ++i) {
    if (!system.valid[i]) continue;
    sum += system.weights[i] * system.residuals[i] * system.residuals[i];
    ++count;
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return sum / count;
}

}  // namespace flownorm
