#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "flownorm/flow.hpp"
#include "flownorm/residuals.hpp"
#include "flownorm/robust_norm.hpp"

using namespace flownorm;

namespace {

CorrespondenceGeometry make_geometry(const Vec2& projected, const Vec2& flow_pos,
                                     double residual, const Vec2& gradient, double sigma) {
  CorrespondenceGeometry g;
  g.projected = projected;
  g.flow_position = flow_pos;
  g.residual = residual;
  g.gradient = gradient;
  g.sigma = sigma;
  return g;
}

// Geometry with a prescribed angle between the descent direction and the
// direction toward the flow position (gap along +x).
CorrespondenceGeometry geometry_with_angle(double theta_rad, double gap_norm, double sigma) {
  const Vec2 projected(0.0, 0.0);
  const Vec2 flow_pos(gap_norm, 0.0);
  const Vec2 descent(std::cos(theta_rad), std::sin(theta_rad));
  // residual +1 makes the descent direction -gradient.
  return make_geometry(projected, flow_pos, 1.0, -descent, sigma);
}

}  // namespace

TEST_CASE("cos_theta0: degenerate circle gives cos = 1") {
  const auto c = cos_theta0(2.0, 0.0);
  REQUIRE(c.has_value());
  CHECK(*c == doctest::Approx(1.0));
}

TEST_CASE("cos_theta0: right-triangle identities") {
  CHECK(*cos_theta0(2.0, std::sqrt(2.0)) == doctest::Approx(std::sqrt(2.0) / 2.0));  // 45 deg
  CHECK(*cos_theta0(2.0, std::sqrt(3.0)) == doctest::Approx(0.5));                   // 60 deg
}

TEST_CASE("cos_theta0: inside the circle means no cone") {
  CHECK_FALSE(cos_theta0(1.0, 1.5).has_value());
  CHECK_FALSE(cos_theta0(1.0, 1.0).has_value());
}

TEST_CASE("flow factor: inside the activation disc keeps weight 1") {
  FlowNormParams params;
  // Gap 1.9 sigma < 2 sigma, descent pointing the wrong way entirely.
  auto g = make_geometry(Vec2(0, 0), Vec2(1.9, 0), 1.0, Vec2(1.0, 0.0), 1.0);
  CHECK(flow_norm_factor(g, params) == 1.0);
}

TEST_CASE("flow factor: descent toward the flow position keeps weight 1") {
  FlowNormParams params;
  const auto g = geometry_with_angle(0.0, 5.0, 1.0);
  CHECK(flow_norm_factor(g, params) == 1.0);
}

TEST_CASE("flow factor: perpendicular descent with a degenerate cone halves the weight") {
  FlowNormParams params;
  params.tangent_radius_multiplier = 1e-12;  // cos(theta0) -> 1
  const auto g = geometry_with_angle(M_PI / 2.0, 5.0, 1.0);
  CHECK(flow_norm_factor(g, params) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("flow factor: descent directly away clamps to the floor") {
  FlowNormParams params;
  const auto g = geometry_with_angle(M_PI, 5.0, 1.0);
  CHECK(flow_norm_factor(g, params) == doctest::Approx(params.min_weight));
}

TEST_CASE("flow factor: degenerate inputs carry no information") {
  FlowNormParams params;
  CHECK(flow_norm_factor(make_geometry(Vec2(0, 0), Vec2(9, 0), 0.0, Vec2(1, 0), 1.0), params) == 1.0);
  CHECK(flow_norm_factor(make_geometry(Vec2(0, 0), Vec2(9, 0), 2.0, Vec2(0, 0), 1.0), params) == 1.0);
  CHECK(flow_norm_factor(make_geometry(Vec2(9, 0), Vec2(9, 0), 2.0, Vec2(1, 0), 1.0), params) == 1.0);
}

TEST_CASE("flow factor: range and disc invariants over a seeded grid") {
  FlowNormParams params;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> coord(-20.0, 20.0), res(-30.0, 30.0),
      sig(0.05, 5.0);
  for (int i = 0; i < 20000; ++i) {
    const auto g = make_geometry(Vec2(coord(rng), coord(rng)), Vec2(coord(rng), coord(rng)),
                                 res(rng), Vec2(coord(rng), coord(rng)), sig(rng));
    const double s = flow_norm_factor(g, params);
    CHECK(s >= params.min_weight);
    CHECK(s <= 1.0);
    if ((g.flow_position - g.projected).norm() <= 2.0 * g.sigma) CHECK(s == 1.0);
  }
}

TEST_CASE("flow factor: continuous at the cone boundary") {
  FlowNormParams params;
  const double gap = 5.0, sigma = 1.0;
  const double cone = *cos_theta0(gap, sigma);
  const double theta0 = std::acos(cone);
  // Just outside the cone: the ratio tends to 1 as cos(theta) -> cos(theta0).
  for (double eps : {1e-7, 1e-8, 1e-9}) {
    const auto g = geometry_with_angle(theta0 + eps, gap, sigma);
    CHECK(std::abs(flow_norm_factor(g, params) - 1.0) < 1e-6);
  }
}

TEST_CASE("flow factor: non-increasing in theta beyond theta0") {
  FlowNormParams params;
  const double gap = 6.0, sigma = 1.5;
  double prev = 2.0;
  for (double theta = 0.0; theta <= M_PI + 1e-9; theta += M_PI / 720.0) {
    const double s = flow_norm_factor(geometry_with_angle(theta, gap, sigma), params);
    CHECK(s <= prev + 1e-12);
    prev = s;
  }
}

TEST_CASE("flow factor: non-decreasing in sigma for fixed geometry") {
  FlowNormParams params;
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> ang(0.0, M_PI);
  for (int i = 0; i < 200; ++i) {
    const double theta = ang(rng);
    double prev = 0.0;
    for (double sigma = 0.05; sigma < 4.0; sigma *= 1.3) {
      const double s = flow_norm_factor(geometry_with_angle(theta, 7.0, sigma), params);
      CHECK(s >= prev - 1e-12);
      prev = s;
    }
  }
}

TEST_CASE("paper-literal mode evaluates the printed table verbatim") {
  FlowNormParams params;
  params.mode = NormMode::PaperLiteral;
  const double gap = 5.0, sigma = 1.0;
  const double cone = *cos_theta0(gap, sigma);

  // Inside the disc: 1.
  CHECK(flow_norm_factor(make_geometry(Vec2(0, 0), Vec2(1.0, 0), 3.0, Vec2(1, 0), 1.0),
                         params) == 1.0);

  // v = p' - p°; x along -v gives cos(theta) = -1 <= cos(theta0) -> 1.
  auto away = make_geometry(Vec2(gap, 0), Vec2(0, 0), 3.0, Vec2(-1.0, 0.0), sigma);
  CHECK(flow_norm_factor(away, params) == 1.0);

  // x along +v gives cos(theta) = 1 > cos(theta0) -> printed ratio, above 1.
  auto along = make_geometry(Vec2(gap, 0), Vec2(0, 0), 3.0, Vec2(1.0, 0.0), sigma);
  CHECK(flow_norm_factor(along, params) == doctest::Approx(2.0 / (cone + 1.0)));
  CHECK(flow_norm_factor(along, params) > 1.0);
}

TEST_CASE("huber weight") {
  CHECK(huber_weight(4.5, 9.0) == 1.0);
  CHECK(huber_weight(18.0, 9.0) == doctest::Approx(0.5));
  CHECK(huber_weight(0.0, 9.0) == 1.0);
  CHECK(huber_weight(-18.0, 9.0) == doctest::Approx(0.5));
}

namespace {

WeightedSystem three_row_system() {
  WeightedSystem sys;
  sys.level = 0;
  const int n = 3;
  sys.residuals = Eigen::VectorXd::Zero(n);
  sys.jacobian = Eigen::Matrix<double, Eigen::Dynamic, 6>::Zero(n, 6);
  sys.depth_jacobian = Eigen::VectorXd::Zero(n);
  sys.weights = Eigen::VectorXd::Zero(n);
  sys.valid.assign(n, 1);
  sys.source_px = {Vec2(10, 10), Vec2(24, 24), Vec2(40, 40)};
  sys.projected_px = {Vec2(11, 10), Vec2(30, 24), Vec2(40, 47)};
  sys.gradient = {Vec2(1, 0), Vec2(0, 2), Vec2(-3, 0)};
  sys.point_index = {0, 1, 2};
  sys.is_central.assign(n, 1);
  sys.residuals << 4.0, 18.0, -12.0;
  return sys;
}

FlowField uniform_flow_field(const Vec2& flow, double sigma) {
  FlowField field(8, 8, 64, 64);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i] = flow;
    field.valid[i] = 1;
  }
  field.sigma = sigma;
  return field;
}

}  // namespace

TEST_CASE("compose: flow norm disabled leaves pure Huber weights") {
  WeightedSystem sys = three_row_system();
  const FlowField field = uniform_flow_field(Vec2(2, 0), 1.0);
  compose_weights(sys, field, FlowNormParams{}, 9.0, /*use_flow_norm=*/false);
  CHECK(sys.weights[0] == 1.0);
  CHECK(sys.weights[1] == doctest::Approx(0.5));
  CHECK(sys.weights[2] == doctest::Approx(0.75));
}

TEST_CASE("compose: projections inside their discs leave pure Huber weights") {
  WeightedSystem sys = three_row_system();
  // Large sigma: every projection is inside its 2-sigma disc.
  const FlowField field = uniform_flow_field(Vec2(2, 0), 50.0);
  compose_weights(sys, field, FlowNormParams{}, 9.0, /*use_flow_norm=*/true);
  CHECK(sys.weights[0] == 1.0);
  CHECK(sys.weights[1] == doctest::Approx(0.5));
  CHECK(sys.weights[2] == doctest::Approx(0.75));
}

TEST_CASE("compose: matches an independent per-row recomputation") {
  WeightedSystem sys = three_row_system();
  const Vec2 flow(2.0, 0.0);
  const double sigma = 1.0;
  const FlowField field = uniform_flow_field(flow, sigma);
  FlowNormParams params;
  compose_weights(sys, field, params, 9.0, /*use_flow_norm=*/true);

  for (int i = 0; i < 3; ++i) {
    // Independent route: explicit angles via atan2 instead of dot products.
    const Vec2 flow_pos = sys.source_px[i] + flow;
    const Vec2 gap = flow_pos - sys.projected_px[i];
    const double abs_e = std::abs(sys.residuals[i]);
    double expected = abs_e <= 9.0 ? 1.0 : 9.0 / abs_e;
    if (gap.norm() > 2.0 * sigma) {
      const Vec2 descent = sys.residuals[i] > 0 ? Vec2(-sys.gradient[i]) : sys.gradient[i];
      const double theta =
          std::abs(std::atan2(descent.y(), descent.x()) - std::atan2(gap.y(), gap.x()));
      const double wrapped = theta > M_PI ? 2.0 * M_PI - theta : theta;
      const double theta0 = std::asin(std::min(1.0, sigma / gap.norm()));
      if (wrapped > theta0) {
        expected *= std::max(params.min_weight,
                             (std::cos(wrapped) + 1.0) / (std::cos(theta0) + 1.0));
      }
    }
    CHECK(sys.weights[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("compose: masked rows stay at weight zero") {
  WeightedSystem sys = three_row_system();
  sys.valid[1] = 0;
  const FlowField field = uniform_flow_field(Vec2(2, 0), 1.0);
  compose_weights(sys, field, FlowNormParams{}, 9.0, true);
  CHECK(sys.weights[1] == 0.0);
}

TEST_CASE("compose: forcing unit factors reproduces Huber-only bitwise") {
  const FlowField field = uniform_flow_field(Vec2(4, 1), 0.5);
  WeightedSystem forced = three_row_system();
  compose_weights(forced, field, FlowNormParams{}, 9.0, /*use_flow_norm=*/true,
                  /*force_unit_flow_factors=*/true);
  WeightedSystem plain = three_row_system();
  compose_weights_huber(plain, 9.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(forced.weights[i] == plain.weights[i]);  // bitwise
  }
}

TEST_CASE("classify_1d: the printed sign cases") {
  const std::vector<Point1D> pts = {
      {1.0, -1.0, 1.0},  // contributes
      {1.0, 1.0, 1.0},   // counteracts
      {0.0, 5.0, 1.0},   // neutral counts as contributing
  };
  const auto flags = classify_1d(pts);
  CHECK(flags[0]);
  CHECK_FALSE(flags[1]);
  CHECK(flags[2]);
}

TEST_CASE("classify_1d: negative true direction flips the test") {
  const auto flags = classify_1d({{1.0, -1.0, -1.0}, {1.0, 1.0, -1.0}});
  CHECK_FALSE(flags[0]);
  CHECK(flags[1]);
}
