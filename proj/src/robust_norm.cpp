#include "flownorm/robust_norm.hpp"

#include <algorithm>
#include <cmath>

#include "flownorm/flow.hpp"
#include "flownorm/residuals.hpp"

namespace flownorm {

const char* to_string(NormMode mode) {
  return mode == NormMode::Canonical ? "canonical" : "paper-literal";
}

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "canonical") return NormMode::Canonical;
  if (s == "paper-literal") return NormMode::PaperLiteral;
  throw Error(ErrorKind::InvalidConfig, "unknown norm mode: " + s);
}

std::optional<double> cos_theta0(double v_norm, double radius) {
  if (v_norm <= radius) return std::nullopt;
  return std::sqrt(v_norm * v_norm - radius * radius) / v_norm;
}

namespace {

double canonical_factor(const CorrespondenceGeometry& g, const FlowNormParams& params) {
  const Vec2 gap = g.flow_position - g.projected;  // toward the flow position
  const double gap_norm = gap.norm();
  if (gap_norm <= params.activation_radius_multiplier * g.sigma) return 1.0;

  const double grad_norm = g.gradient.norm();
  if (g.residual == 0.0 || grad_norm == 0.0 || gap_norm == 0.0) return 1.0;

  // First-order descent direction of 1/2 e^2 in image space.
  const Vec2 descent = (g.residual > 0.0 ? -1.0 : 1.0) * g.gradient;
  const double cos_theta = descent.dot(gap) / (grad_norm * gap_norm);

  const double tangent_radius = params.tangent_radius_multiplier * g.sigma;
  const auto cone = cos_theta0(gap_norm, tangent_radius);
  if (!cone) return 1.0;  // inside the tangent circle, every direction passes

  if (cos_theta >= *cone) return 1.0;
  return std::max(params.min_weight, (cos_theta + 1.0) / (*cone + 1.0));
}

double paper_literal_factor(const CorrespondenceGeometry& g, const FlowNormParams& params) {
  if ((g.flow_position - g.projected).norm() <= params.activation_radius_multiplier * g.sigma) {
    return 1.0;
  }
  const Vec2 v = g.projected - g.flow_position;
  const double v_norm = v.norm();
  const double x_norm = g.gradient.norm();
  if (v_norm == 0.0 || x_norm == 0.0) return 1.0;

  const double cos_theta = v.dot(g.gradient) / (v_norm * x_norm);
  const auto cone = cos_theta0(v_norm, params.tangent_radius_multiplier * g.sigma);
  if (!cone) return 1.0;

  if (cos_theta <= *cone) return 1.0;
  return (cos_theta + 1.0) / (*cone + 1.0);  // verbatim: exceeds 1 by construction
}

}  // namespace

double flow_norm_factor(const CorrespondenceGeometry& g, const FlowNormParams& params) {
  return params.mode == NormMode::Canonical ? canonical_factor(g, params)
                                            : paper_literal_factor(g, params);
}

double huber_weight(double residual, double delta) {
  const double abs_e = std::abs(residual);
  return abs_e <= delta ? 1.0 : delta / abs_e;
}

ComposeStats compose_weights(WeightedSystem& system, const FlowField& flow,
                             const FlowNormParams& params, double huber_delta,
                             bool use_flow_norm, bool force_unit_flow_factors) {
  ComposeStats stats;
  const int n = system.rows();
  const double sigma_at_level =
      std::max(kSigmaFloor, flow.sigma / std::pow(2.0, system.level));

  // Flow factors are per correspondence: decided on the central row and
  // shared by all rows of the same point.
  std::vector<double> point_factor;
  if (use_flow_norm) {
    int num_points = 0;
    for (int i = 0; i < n; ++i) num_points = std::max(num_points, system.point_index[i] + 1);
    point_factor.assign(num_points, 1.0);
    for (int i = 0; i < n; ++i) {
      if (!system.valid[i] || !system.is_central[i]) continue;
      const FlowQuery q = query_flow(flow, system.source_px[i], system.level);
      if (!q.valid) continue;
      ++stats.rows_flow_valid;
      CorrespondenceGeometry g;
      g.projected = system.projected_px[i];
      g.flow_position = q.flow_position;
      g.residual = system.residuals[i];
      g.gradient = system.gradient[i];
      g.sigma = sigma_at_level;
      point_factor[system.point_index[i]] = flow_norm_factor(g, params);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!system.valid[i]) {
      system.weights[i] = 0.0;
      continue;
    }
    ++stats.rows_total;
    double w = huber_weight(system.residuals[i], huber_delta);
    if (use_flow_norm) {
      double factor = point_factor[system.point_index[i]];
      if (force_unit_flow_factors) factor = 1.0;
      if (factor < 1.0) ++stats.rows_downweighted;
      if (factor != 1.0) {
        ++stats.rows_flow_applied;
        w *= factor;
      }
    }
    system.weights[i] = w;
  }
  return stats;
}

ComposeStats compose_weights_huber(WeightedSystem& system, double huber_delta) {
  ComposeStats stats;
  for (int i = 0; i < system.rows(); ++i) {
    if (!system.valid[i]) {
      system.weights[i] = 0.0;
      continue;
    }
    ++stats.rows_total;
    system.weights[i] = huber_weight(system.residuals[i], huber_delta);
  }
  return stats;
}

std::vector<bool> classify_1d(const std::vector<Point1D>& points) {
  std::vector<bool> contributing(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    // Individual step direction is -e*g'; neutral samples (zero push)
    // count as contributing.
    const double push = -points[i].residual * points[i].slope;
    contributing[i] = push * points[i].true_direction >= 0.0;
  }
  return contributing;
}

}  // namespace flownorm
