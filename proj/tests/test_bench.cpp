#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "flownorm/bench.hpp"
#include "oracles.hpp"

using namespace flownorm;
namespace fs = std::filesystem;
namespace oracle = flownorm::testing;

TEST_CASE("pose_error: identical poses") {
  std::mt19937_64 rng(51);
  const SE3Pose p = oracle::random_pose(rng, 0.7, 2.0);
  const auto [rot, trans] = pose_error(p, p);
  CHECK(rot == doctest::Approx(0.0));
  CHECK(trans == 0.0);
}

TEST_CASE("pose_error: 90 degree z-rotation") {
  const SE3Pose a;
  const SE3Pose b(Eigen::AngleAxisd(M_PI / 2.0, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
  const auto [rot, trans] = pose_error(a, b);
  CHECK(rot == doctest::Approx(90.0));
  CHECK(trans == 0.0);
}

TEST_CASE("pose_error: matches the quaternion-dot-product oracle") {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 100; ++i) {
    const SE3Pose a = oracle::random_pose(rng, 1.2, 2.0);
    const SE3Pose b = oracle::random_pose(rng, 1.2, 2.0);
    const auto [rot, trans] = pose_error(a, b);
    // Independent route: |<q_a, q_b>| = cos(angle / 2).
    const double dot = std::abs(a.rotation().coeffs().dot(b.rotation().coeffs()));
    const double oracle_deg = 2.0 * std::acos(std::min(1.0, dot)) * 180.0 / M_PI;
    CHECK(std::abs(rot - oracle_deg) < 1e-9);
    CHECK(trans == (a.translation() - b.translation()).norm());
  }
}

namespace {

std::vector<SE3Pose> line_trajectory(int n) {
  std::vector<SE3Pose> out;
  for (int i = 0; i < n; ++i) {
    out.emplace_back(Eigen::Quaterniond::Identity(), Vec3(double(i), 0.0, 0.0));
  }
  return out;
}

double trajectory_rmse_after(const std::vector<SE3Pose>& est,
                             const std::vector<SE3Pose>& gt, const Mat33& rot,
                             const Vec3& trans) {
  double sum = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    sum += (gt[i].translation() - (rot * est[i].translation() + trans)).squaredNorm();
  }
  return std::sqrt(sum / est.size());
}

// Deterministic coordinate-descent over SE(3) alignment; independent check
// that the closed form really is the optimum.
double brute_force_best_rmse(const std::vector<SE3Pose>& est, const std::vector<SE3Pose>& gt) {
  Vec6 params = Vec6::Zero();  // rx ry rz tx ty tz
  auto rmse_at = [&](const Vec6& p) {
    const Mat33 rot = (Eigen::AngleAxisd(p[2], Vec3::UnitZ()) *
                       Eigen::AngleAxisd(p[1], Vec3::UnitY()) *
                       Eigen::AngleAxisd(p[0], Vec3::UnitX()))
                          .toRotationMatrix();
    return trajectory_rmse_after(est, gt, rot, p.tail<3>());
  };
  double best = rmse_at(params);
  double step = 0.5;
  while (step > 1e-9) {
    bool improved = false;
    for (int k = 0; k < 6; ++k) {
      for (double dir : {+1.0, -1.0}) {
        Vec6 trial = params;
        trial[k] += dir * step;
        const double r = rmse_at(trial);
        if (r < best) {
          best = r;
          params = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

TEST_CASE("ate_rmse: identical trajectories score zero") {
  const auto traj = line_trajectory(8);
  CHECK(ate_rmse(traj, traj) == doctest::Approx(0.0));
}

TEST_CASE("ate_rmse: invariant to a rigid transform of the estimate") {
  std::mt19937_64 rng(53);
  const auto gt = line_trajectory(8);
  const SE3Pose rigid = oracle::random_pose(rng, 0.8, 3.0);
  std::vector<SE3Pose> est;
  for (const SE3Pose& p : gt) est.push_back(rigid * p);
  CHECK(ate_rmse(est, gt) < 1e-9);
}

TEST_CASE("ate_rmse: a single outlier matches the alignment-aware oracle") {
  const int n = 8;
  const double d = 0.4;
  const auto gt = line_trajectory(n);
  auto est = gt;
  est[3] = SE3Pose(Eigen::Quaterniond::Identity(), est[3].translation() + Vec3(0.0, d, 0.0));

  const double ate = ate_rmse(est, gt);
  // Upper bounds from the algebra: no alignment gives d/sqrt(n); the
  // translation-only optimum gives d*sqrt(n-1)/n.
  CHECK(ate <= d / std::sqrt(double(n)) + 1e-12);
  CHECK(ate <= d * std::sqrt(n - 1.0) / n + 1e-12);
  // Full rigid alignment: agree with an independent numerical minimization.
  const double oracle_best = brute_force_best_rmse(est, gt);
  CHECK(ate == doctest::Approx(oracle_best).epsilon(1e-6));
}

TEST_CASE("ate_rmse: fewer than two poses is an error") {
  const auto traj = line_trajectory(1);
  CHECK_THROWS_AS(ate_rmse(traj, traj), Error);
}

namespace {

BasinTrialSpec small_basin_spec() {
  BasinTrialSpec spec;
  spec.scene.seed = 61;
  spec.scene.model = DepthModelKind::SlantedPlane;
  spec.trial_count = 4;
  spec.seed = 9;
  spec.configs.push_back({"huber", AlignerKind::HuberOnly, {}});
  AlignerConfig fn;
  fn.id = "flownorm-gt";
  fn.kind = AlignerKind::FlowNorm;
  fn.provider.kind = FlowProviderKind::GroundTruth;
  spec.configs.push_back(fn);
  AlignerConfig fi;
  fi.id = "flowinit";
  fi.kind = AlignerKind::FlowInit;
  fi.provider.kind = FlowProviderKind::GroundTruth;
  spec.configs.push_back(fi);
  return spec;
}

}  // namespace

TEST_CASE("run_basin: zero noise succeeds for every configuration") {
  const BasinTrialSpec spec = small_basin_spec();
  const BasinReport report = run_basin(spec);
  REQUIRE(report.records.size() == spec.configs.size() * spec.trial_count);
  for (const ConfigSummary& s : report.summaries) {
    CHECK(s.successes == s.trials);
    CHECK(s.success_rate == 1.0);
  }
}

TEST_CASE("run_basin: records are ordered and seeded deterministically") {
  BasinTrialSpec spec = small_basin_spec();
  spec.rotation_noise_deg = 3.0;
  spec.translation_noise_frac = 0.01;

  BasinTrialSpec spec_parallel = spec;
  spec_parallel.threads = 4;
  spec.threads = 1;

  const BasinReport a = run_basin(spec);
  const BasinReport b = run_basin(spec_parallel);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].config_id == b.records[i].config_id);
    CHECK(a.records[i].trial_id == b.records[i].trial_id);
    CHECK(a.records[i].final_rotation_error_deg == b.records[i].final_rotation_error_deg);
    CHECK(a.records[i].final_translation_error_m == b.records[i].final_translation_error_m);
    CHECK(a.records[i].success == b.records[i].success);
  }
  // Identical perturbations across configs at the same trial id.
  const int t = spec.trial_count;
  CHECK(a.records[0].init_rotation_error_deg == a.records[t].init_rotation_error_deg);
}

TEST_CASE("run_basin CSV: byte-identical across re-runs, no wall-clock columns") {
  BasinTrialSpec spec = small_basin_spec();
  spec.rotation_noise_deg = 2.0;
  const BasinReport a = run_basin(spec);
  const BasinReport b = run_basin(spec);
  const auto pa = fs::temp_directory_path() / "flownorm_basin_a.csv";
  const auto pb = fs::temp_directory_path() / "flownorm_basin_b.csv";
  write_basin_csv(pa.string(), a);
  write_basin_csv(pb.string(), b);
  std::ifstream fa(pa), fb(pb);
  const std::string ba((std::istreambuf_iterator<char>(fa)), {});
  const std::string bb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ba == bb);
  CHECK(ba.find("wall") == std::string::npos);
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("run_skip: a static sequence tracks at every skip") {
  SkipTrialSpec spec;
  spec.scene.seed = 62;
  spec.scene.model = DepthModelKind::SlantedPlane;
  spec.num_frames = 8;
  spec.step_deg = 0.0;  // static camera
  spec.skips = {1, 2, 3};
  spec.runs_per_skip = 2;
  spec.seed = 4;
  spec.configs.push_back({"huber", AlignerKind::HuberOnly, {}});

  const SkipReport report = run_skip(spec);
  CHECK(report.records.size() == spec.skips.size() * spec.runs_per_skip * spec.configs.size());
  REQUIRE(report.summaries.size() == 1);
  CHECK(report.summaries[0].max_skip_without_loss == 3);
  CHECK(report.summaries[0].max_skip_acceptable == 3);
  for (const SkipRunRecord& r : report.records) {
    CHECK_FALSE(r.lost_tracking);
    CHECK(r.ate_rmse_m < 1e-6);
  }
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<int> hits(999, 0);
  parallel_for(999, 7, [&](int i) { hits[i]++; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("summary JSON embeds the resolved config and seed") {
  BasinTrialSpec spec = small_basin_spec();
  const BasinReport report = run_basin(spec);
  const auto path = fs::temp_directory_path() / "flownorm_summary.json";
  write_basin_summary_json(path.string(), spec, report, 1.25);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("\"seed\": 9") != std::string::npos);
  CHECK(text.find("\"huber_delta\"") != std::string::npos);
  CHECK(text.find("\"scene\"") != std::string::npos);
  fs::remove(path);
}
