#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "flownorm/datasets.hpp"
#include "flownorm/flow.hpp"
#include "oracles.hpp"

using namespace flownorm;
namespace oracle = flownorm::testing;

namespace {

CameraIntrinsics small_intrinsics() {
  CameraIntrinsics k;
  k.fx = 100.0;
  k.fy = 100.0;
  k.cx = 159.5;
  k.cy = 119.5;
  k.width = 320;
  k.height = 240;
  return k;
}

}  // namespace

TEST_CASE("ground-truth flow: identity pose gives zero flow") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField field = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 32, 24);
  CHECK(field.valid_count() > 0.8 * 32 * 24);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    if (field.valid[i]) CHECK(field.vectors[i].norm() < 1e-12);
  }
}

TEST_CASE("ground-truth flow: fronto-parallel plane under x-translation is uniform") {
  const CameraIntrinsics k = small_intrinsics();
  const double depth_m = 2.0, tx = 0.1;
  const GrayImage depth(k.width, k.height, depth_m);
  const SE3Pose pose(Eigen::Quaterniond::Identity(), Vec3(tx, 0, 0));
  const FlowField field = ground_truth_flow(depth, nullptr, pose, k, 32, 24);
  const double expected = k.fx * tx / depth_m;  // pinhole arithmetic
  CHECK(field.valid_count() > 0);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    if (!field.valid[i]) continue;
    CHECK(field.vectors[i].x() == doctest::Approx(expected).epsilon(1e-9));
    CHECK(field.vectors[i].y() == doctest::Approx(0.0).scale(1.0));
  }
}

TEST_CASE("ground-truth flow: occluded cells are masked (two-plane z-buffer oracle)") {
  const CameraIntrinsics k = small_intrinsics();
  const double near_z = 1.0, far_z = 3.0, tx = 0.3;

  // Foreground block in the source image.
  const int bx0 = 180, bx1 = 240, by0 = 80, by1 = 160;
  GrayImage depth_s(k.width, k.height, far_z);
  for (int y = by0; y < by1; ++y)
    for (int x = bx0; x < bx1; ++x) depth_s.at(x, y) = near_z;

  // The camera moves +x, so content shifts -x; analytic target depth.
  const SE3Pose pose(Eigen::Quaterniond::Identity(), Vec3(-tx, 0, 0));
  const double near_shift = k.fx * tx / near_z;  // 30 px
  GrayImage depth_t(k.width, k.height, far_z);
  for (int y = by0; y < by1; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (x >= bx0 - near_shift && x < bx1 - near_shift) depth_t.at(x, y) = near_z;
    }
  }

  const FlowField field = ground_truth_flow(depth_s, &depth_t, pose, k, 64, 48);

  // Independent oracle: dense forward z-buffer splat of the source depth.
  GrayImage zbuf(k.width, k.height, 0.0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Projection p = project(Vec2(x, y), pose, 1.0 / depth_s.at(x, y), k);
      if (p.depth < kDepthFloor) continue;
      const int qx = static_cast<int>(std::lround(p.pixel.x()));
      const int qy = static_cast<int>(std::lround(p.pixel.y()));
      if (!zbuf.in_bounds(qx, qy)) continue;
      if (zbuf.at(qx, qy) == 0.0 || p.depth < zbuf.at(qx, qy)) zbuf.at(qx, qy) = p.depth;
    }
  }

  int occluded_cells = 0, compared = 0;
  for (int gy = 0; gy < field.grid_height; ++gy) {
    for (int gx = 0; gx < field.grid_width; ++gx) {
      const Vec2 c = field.cell_center(gx, gy);
      const int px = static_cast<int>(std::lround(c.x()));
      const int py = static_cast<int>(std::lround(c.y()));
      const Projection p = project(Vec2(px, py), pose, 1.0 / depth_s.at(px, py), k);
      if (!p.valid) continue;
      const int qx = static_cast<int>(std::lround(p.pixel.x()));
      const int qy = static_cast<int>(std::lround(p.pixel.y()));
      if (!zbuf.in_bounds(qx, qy) || zbuf.at(qx, qy) == 0.0) continue;
      // Skip cells within 2 px of the occluder's projected boundary where
      // rounding conventions may differ.
      const double left_edge = bx0 - near_shift, right_edge = bx1 - near_shift;
      if (std::abs(p.pixel.x() - left_edge) < 2.0 || std::abs(p.pixel.x() - right_edge) < 2.0 ||
          std::abs(p.pixel.y() - by0) < 2.0 || std::abs(p.pixel.y() - by1) < 2.0) {
        continue;
      }
      const bool oracle_occluded = zbuf.at(qx, qy) < 0.95 * p.depth;
      ++compared;
      if (oracle_occluded) {
        ++occluded_cells;
        CHECK_FALSE(field.valid[field.cell_index(gx, gy)]);
      } else {
        CHECK(field.valid[field.cell_index(gx, gy)]);
      }
    }
  }
  CHECK(compared > 500);
  CHECK(occluded_cells > 20);  // the construction really does occlude something
}

TEST_CASE("noisy oracle: zero noise and bias returns the input") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr,
                                         SE3Pose(Eigen::Quaterniond::Identity(), Vec3(0.05, 0, 0)),
                                         k, 32, 24);
  const FlowField noisy = noisy_oracle_flow(gt, 0.0, Vec2::Zero(), 42);
  for (size_t i = 0; i < gt.vectors.size(); ++i) {
    CHECK(noisy.vectors[i] == gt.vectors[i]);
    CHECK(noisy.valid[i] == gt.valid[i]);
  }
}

TEST_CASE("noisy oracle: empirical RMS matches the injected sigma") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 160, 112);
  REQUIRE(gt.valid_count() > 10000);
  const double sigma = 2.0;
  const FlowField noisy = noisy_oracle_flow(gt, sigma, Vec2::Zero(), 7);
  double sum_sq = 0.0;
  long n = 0;
  for (size_t i = 0; i < gt.vectors.size(); ++i) {
    if (!gt.valid[i]) continue;
    sum_sq += (noisy.vectors[i] - gt.vectors[i]).squaredNorm();
    ++n;
  }
  const double rms = std::sqrt(sum_sq / n);
  CHECK(rms > 1.9 * std::sqrt(2.0));
  CHECK(rms < 2.1 * std::sqrt(2.0));
  // Field sigma records the RMS L2 convention.
  CHECK(noisy.sigma == doctest::Approx(sigma * std::sqrt(2.0)));
}

TEST_CASE("noisy oracle: fixed seed is bit-reproducible") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 32, 24);
  const FlowField a = noisy_oracle_flow(gt, 1.5, Vec2(0.5, -0.25), 99);
  const FlowField b = noisy_oracle_flow(gt, 1.5, Vec2(0.5, -0.25), 99);
  for (size_t i = 0; i < a.vectors.size(); ++i) {
    CHECK(a.vectors[i].x() == b.vectors[i].x());
    CHECK(a.vectors[i].y() == b.vectors[i].y());
  }
}

TEST_CASE("block matching: identical images give zero flow") {
  const GrayImage img = oracle::textured_image(128, 96, 11);
  const PyramidImage pyr = build_pyramid(img, 3);
  BlockMatchingParams cfg;
  cfg.grid_width = 24;
  cfg.grid_height = 18;
  FlowField field = block_matching_flow(pyr, pyr, cfg);
  field.image_width = 128;
  field.image_height = 96;
  REQUIRE(field.valid_count() > 100);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    if (field.valid[i]) CHECK(field.vectors[i].norm() < 0.5);
  }
}

TEST_CASE("block matching: 6-pixel shift is recovered within a pixel") {
  // Content moves 6 px right: target(x) = source(x - 6).
  SyntheticScene scene;
  scene.seed = 13;
  scene.intrinsics.width = 160;
  scene.intrinsics.height = 120;
  GrayImage source(160, 120), target(160, 120);
  const GrayImage big = [&] {
    SyntheticScene wide = scene;
    wide.intrinsics.width = 200;
    return wide.render_texture();
  }();
  for (int y = 0; y < 120; ++y) {
    for (int x = 0; x < 160; ++x) {
      source.at(x, y) = big.at(x + 6, y);
      target.at(x, y) = big.at(x, y);  // source shifted right by 6
    }
  }
  BlockMatchingParams cfg;
  cfg.grid_width = 20;
  cfg.grid_height = 15;
  const FlowField field =
      block_matching_flow(build_pyramid(source, 3), build_pyramid(target, 3), cfg);
  REQUIRE(field.valid_count() > 50);
  std::vector<double> xs;
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    if (field.valid[i]) xs.push_back(field.vectors[i].x());
  }
  std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
  CHECK(std::abs(xs[xs.size() / 2] - 6.0) < 1.0);
}

TEST_CASE("block matching: textureless cells are masked") {
  GrayImage source = oracle::textured_image(128, 96, 17);
  // Flatten the right half.
  for (int y = 0; y < 96; ++y)
    for (int x = 64; x < 128; ++x) source.at(x, y) = 100.0;
  const PyramidImage pyr = build_pyramid(source, 3);
  BlockMatchingParams cfg;
  cfg.grid_width = 16;
  cfg.grid_height = 12;
  const FlowField field = block_matching_flow(pyr, pyr, cfg);
  int masked_right = 0, total_right = 0;
  for (int gy = 2; gy < 10; ++gy) {
    for (int gx = 10; gx < 14; ++gx) {  // safely inside the flat half
      ++total_right;
      masked_right += !field.valid[field.cell_index(gx, gy)];
    }
  }
  CHECK(masked_right == total_right);
}

TEST_CASE("estimate_sigma: exact predictions clamp to the floor") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 32, 24);
  CHECK(estimate_sigma({{gt, gt}}) == kSigmaFloor);
}

TEST_CASE("estimate_sigma: constant 3-px error gives sigma 3") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 32, 24);
  FlowField pred = gt;
  for (size_t i = 0; i < pred.vectors.size(); ++i) pred.vectors[i] += Vec2(3.0, 0.0);
  CHECK(estimate_sigma({{pred, gt}}) == doctest::Approx(3.0));
}

TEST_CASE("estimate_sigma: recovers the noisy-oracle sigma within 5%") {
  const CameraIntrinsics k = small_intrinsics();
  const GrayImage depth(k.width, k.height, 2.0);
  const FlowField gt = ground_truth_flow(depth, nullptr, SE3Pose::identity(), k, 160, 112);
  REQUIRE(gt.valid_count() >= 10000);
  const FlowField noisy = noisy_oracle_flow(gt, 2.0, Vec2::Zero(), 5);
  const double est = estimate_sigma({{noisy, gt}});
  CHECK(est == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("estimate_sigma: empty calibration is an error") {
  const FlowField empty(8, 8, 64, 64);  // all cells invalid
  try {
    estimate_sigma({{empty, empty}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyCalibration);
  }
}

TEST_CASE("query_flow: grid nodes return the stored vector") {
  FlowField field(16, 12, 320, 240);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i] = Vec2(u(rng), u(rng));
    field.valid[i] = 1;
  }
  for (int gy = 1; gy < 11; ++gy) {
    for (int gx = 1; gx < 15; ++gx) {
      const Vec2 p = field.cell_center(gx, gy);
      const FlowQuery q = query_flow(field, p, 0);
      REQUIRE(q.valid);
      CHECK((q.flow_position - (p + field.vectors[field.cell_index(gx, gy)])).norm() < 1e-9);
    }
  }
}

TEST_CASE("query_flow: uniform field scales by the pyramid level") {
  FlowField field(16, 12, 320, 240);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i] = Vec2(6.0, 0.0);
    field.valid[i] = 1;
  }
  const Vec2 p_level1(40.0, 30.0);
  const FlowQuery q = query_flow(field, p_level1, 1);
  REQUIRE(q.valid);
  CHECK((q.flow_position - (p_level1 + Vec2(3.0, 0.0))).norm() < 1e-12);
}

TEST_CASE("query_flow: a masked contributing cell invalidates the query") {
  FlowField field(16, 12, 320, 240);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i] = Vec2(1.0, 0.0);
    field.valid[i] = 1;
  }
  field.valid[field.cell_index(8, 6)] = 0;
  // Query between cells (7,6) and (8,6).
  const Vec2 between = 0.5 * (field.cell_center(7, 6) + field.cell_center(8, 6));
  CHECK_FALSE(query_flow(field, between, 0).valid);
  // Far away it still answers.
  CHECK(query_flow(field, field.cell_center(2, 2), 0).valid);
}

TEST_CASE("FLW1 file: byte-level round trip") {
  namespace fs = std::filesystem;
  FlowField field(16, 12, 320, 240);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i] = Vec2(u(rng), u(rng));
    field.valid[i] = i % 7 != 0;
  }
  field.sigma = 1.25;

  const auto path_a = fs::temp_directory_path() / "flownorm_a.flw";
  const auto path_b = fs::temp_directory_path() / "flownorm_b.flw";
  write_flow_file(path_a.string(), field);
  const FlowField back = read_flow_file(path_a.string());
  write_flow_file(path_b.string(), back);

  std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(bytes_a == bytes_b);
  CHECK(back.grid_width == field.grid_width);
  CHECK(back.sigma == doctest::Approx(1.25));
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    CHECK(back.vectors[i].x() == static_cast<double>(static_cast<float>(field.vectors[i].x())));
    CHECK(back.valid[i] == field.valid[i]);
  }
  fs::remove(path_a);
  fs::remove(path_b);
}

TEST_CASE("flow CSV dump exists and has one row per cell") {
  namespace fs = std::filesystem;
  FlowField field(8, 8, 64, 64);
  const auto path = fs::temp_directory_path() / "flownorm_flow.csv";
  write_flow_csv(path.string(), field);
  std::ifstream in(path);
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2 + 64);  // comment + header + cells
  fs::remove(path);
}

TEST_CASE("ground-truth flow round-trips through project") {
  SyntheticScene scene;
  scene.seed = 29;
  scene.model = DepthModelKind::SlantedPlane;
  const SE3Pose pose = SE3Pose::exp([] {
    Vec6 d;
    d << 0.04, -0.02, 0.01, 0.02, -0.03, 0.01;
    return d;
  }());
  const GrayImage depth = scene.depth_map();
  const FlowField field = ground_truth_flow(depth, nullptr, pose, scene.intrinsics, 40, 28);
  REQUIRE(field.valid_count() > 200);
  for (int gy = 0; gy < field.grid_height; ++gy) {
    for (int gx = 0; gx < field.grid_width; ++gx) {
      if (!field.valid[field.cell_index(gx, gy)]) continue;
      const Vec2 p = field.cell_center(gx, gy);
      const int px = static_cast<int>(std::lround(p.x()));
      const int py = static_cast<int>(std::lround(p.y()));
      const Projection proj = project(p, pose, 1.0 / depth.at(px, py), scene.intrinsics);
      const Vec2 reached = p + field.vectors[field.cell_index(gx, gy)];
      CHECK((reached - proj.pixel).norm() < 1e-6);
    }
  }
}

TEST_CASE("flow cache: keyed by frame pair, missing means not ready") {
  FlowCache cache;
  CHECK_FALSE(cache.get(3, 4).has_value());

  FlowField field(8, 8, 64, 64);
  field.sigma = 2.5;
  std::fill(field.valid.begin(), field.valid.end(), uint8_t{1});
  cache.put(3, 4, field);

  const auto hit = cache.get(3, 4);
  REQUIRE(hit.has_value());
  CHECK(hit->sigma == 2.5);
  CHECK(hit->source_frame_id == 3);
  CHECK(hit->target_frame_id == 4);
  CHECK_FALSE(cache.get(4, 3).has_value());  // direction matters
  CHECK(cache.size() == 1);
}
