#pragma once

#include <optional>
#include <vector>

#include "flownorm/types.hpp"

namespace flownorm {

struct FlowField;
struct WeightedSystem;

enum class NormMode {
  Canonical,     // descent-cone form; factors always in [min_weight, 1]
  PaperLiteral,  // printed piecewise form verbatim, for A/B comparison
};

const char* to_string(NormMode mode);
NormMode norm_mode_from_string(const std::string& s);

struct FlowNormParams {
  // Radius of the disc (in units of sigma) inside which a correspondence is
  // left unweighted.
  double activation_radius_multiplier = 2.0;
  // Radius (in units of sigma) of the circle whose tangent from the
  // projection defines the consistency cone angle theta0.
  double tangent_radius_multiplier = 1.0;
  // Floor so rows are never silently deleted.
  double min_weight = 0.01;
  NormMode mode = NormMode::Canonical;

  bool valid() const {
    return activation_radius_multiplier > 0.0 && tangent_radius_multiplier > 0.0 &&
           min_weight >= 0.0 && min_weight <= 1.0;
  }
};

// Everything the flow factor needs about one correspondence.
struct CorrespondenceGeometry {
  Vec2 projected = Vec2::Zero();   // p', current reprojection
  Vec2 flow_position = Vec2::Zero();  // p° = p + F
  double residual = 0.0;           // e, intensity units
  Vec2 gradient = Vec2::Zero();    // x = de/dp'
  double sigma = 1.0;              // flow uncertainty, pixels (> 0)
};

// Cosine of the half-angle of the cone tangent to the circle of `radius`
// around the flow position, seen from distance v_norm. Empty when the
// point is inside the circle (no cone exists).
std::optional<double> cos_theta0(double v_norm, double radius);

// The per-correspondence flow factor s_i in [min_weight, 1] (canonical
// mode). Correspondences inside the activation disc, or whose descent
// direction -sign(e)*x falls inside the tangent cone toward the flow
// position, keep weight 1; the rest fall off as (cos(theta)+1)/(cos(theta0)+1).
// Degenerate rows (zero residual, gradient, or gap) carry no directional
// information and keep weight 1.
//
// PaperLiteral mode evaluates the printed table verbatim: v = p' - p°,
// unsigned x, weight 1 when cos(theta) <= cos(theta0) and the ratio
// otherwise, no floor — such factors can exceed 1.
double flow_norm_factor(const CorrespondenceGeometry& g, const FlowNormParams& params);

// Standard IRLS Huber weight: 1 for |e| <= delta, else delta/|e|.
double huber_weight(double residual, double delta);

inline constexpr double kDefaultHuberDelta = 9.0;  // intensity units

struct ComposeStats {
  int rows_total = 0;
  int rows_flow_valid = 0;      // rows where a flow query succeeded
  int rows_downweighted = 0;    // rows whose flow factor ended up < 1
  int rows_flow_applied = 0;    // rows where a non-unit flow factor was multiplied in
};

// Fills system.weights with huber(e_i) * s_i. Flow factors participate only
// when use_flow_norm is set and the flow field answers at the row's source
// point; masked rows keep weight 0. When force_unit_flow_factors is set the
// factor is computed and then replaced by exactly 1.0 (instrumentation for
// the reduction check).
ComposeStats compose_weights(WeightedSystem& system, const FlowField& flow,
                             const FlowNormParams& params, double huber_delta,
                             bool use_flow_norm, bool force_unit_flow_factors = false);

// Huber-only variant used when no flow field exists.
ComposeStats compose_weights_huber(WeightedSystem& system, double huber_delta);

struct Point1D {
  double residual = 0.0;        // g(x+t) - f(x)
  double slope = 0.0;           // g'(x+t)
  double true_direction = 0.0;  // sign of the update that reaches the optimum
};

// One-dimensional alignment classifier: a sample contributes iff its
// individual descent step -e*g' pushes toward the true optimum (zero
// contributions count as neutral-contributing).
std::vector<bool> classify_1d(const std::vector<Point1D>& points);

}  // namespace flownorm
