#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flownorm/cli.hpp"
#include "flownorm/png_io.hpp"
#include "oracles.hpp"

using namespace flownorm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CapturedRun {
  int exit_code;
  json stdout_json;
};

CapturedRun run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"flownorm"};
  for (const std::string& a : args) argv.push_back(a.c_str());

  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);

  CapturedRun run{code, json()};
  const std::string text = captured.str();
  const auto brace = text.find('{');
  if (brace != std::string::npos) {
    try {
      run.stdout_json = json::parse(text.substr(brace));
    } catch (const json::exception&) {
    }
  }
  return run;
}

struct CliFixture {
  fs::path dir;
  SyntheticScene scene;
  SE3Pose gt;
  std::string scene_path, source_path, target_path, depth_path, target_depth_path, calib_path;
  std::string gt_pose_str;

  CliFixture() : dir(fs::temp_directory_path() / "flownorm_cli_fixture") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    scene.seed = 501;
    scene.model = DepthModelKind::SlantedPlane;
    Vec6 motion;
    motion << 0.05, 0.02, 0.02, 0.03, -0.02, 0.01;
    gt = SE3Pose::exp(motion);

    const RenderedPair pair = render_pair(scene, gt);
    scene_path = (dir / "scene.json").string();
    scene.save(scene_path);
    source_path = (dir / "source.png").string();
    target_path = (dir / "target.png").string();
    depth_path = (dir / "depth.png").string();
    target_depth_path = (dir / "target_depth.png").string();
    calib_path = (dir / "calib.txt").string();
    write_gray_png(source_path, pair.source.gray);
    write_gray_png(target_path, pair.target.gray);
    write_depth_png(depth_path, *pair.source.depth);
    write_depth_png(target_depth_path, *pair.target.depth);
    std::ofstream calib(calib_path);
    calib << scene.intrinsics.fx << " " << scene.intrinsics.fy << " " << scene.intrinsics.cx
          << " " << scene.intrinsics.cy << " " << scene.intrinsics.width << " "
          << scene.intrinsics.height << "\n";

    const auto& q = gt.rotation();
    std::ostringstream pose;
    pose.precision(17);
    pose << gt.translation().x() << " " << gt.translation().y() << " " << gt.translation().z()
         << " " << q.x() << " " << q.y() << " " << q.z() << " " << q.w();
    gt_pose_str = pose.str();
  }
  ~CliFixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("cli: missing input file exits 2 with a machine-readable error") {
  const CapturedRun run = run_cli({"align", "--scene", "/nonexistent/scene.json"});
  CHECK(run.exit_code == kExitInputError);
  CHECK(run.stdout_json.value("error", "") == "missing-file");
}

TEST_CASE("cli: align on a synthetic fixture with ground-truth flow converges") {
  const CliFixture fix;
  const std::string out = (fix.dir / "align_scene").string();
  const CapturedRun run = run_cli({"align", "--scene", fix.scene_path, "--pair-rot",
                                   "1.7,-1.1,0.6", "--pair-trans", "0.05,0.02,0.02",
                                   "--provider", "ground-truth", "--init-noise-rot", "4.0",
                                   "--init-noise-trans", "0.03", "--seed", "11", "--out", out});
  CHECK(run.exit_code == kExitSuccess);
  CHECK(run.stdout_json.value("converged", false));
  CHECK(run.stdout_json.value("rotation_error_deg", 1e9) < 0.1);

  std::ifstream result_file(fs::path(out) / "result.json");
  REQUIRE(result_file.good());
  json result;
  result_file >> result;
  CHECK(result.value("converged", false));
  CHECK(result.contains("config"));
  CHECK(result["config"].contains("flownorm_levels"));
  CHECK(result.value("seed", -1) == 11);
}

TEST_CASE("cli: align on file inputs with a flow file") {
  const CliFixture fix;
  // First produce a flow file with the flow subcommand.
  const std::string flow_path = (fix.dir / "pair.flw").string();
  const CapturedRun flow_run = run_cli(
      {"flow", "--source", fix.source_path, "--target", fix.target_path, "--depth",
       fix.depth_path, "--target-depth", fix.target_depth_path, "--calib", fix.calib_path,
       "--gt-pose", fix.gt_pose_str, "--provider", "ground-truth", "--out", flow_path});
  CHECK(flow_run.exit_code == kExitSuccess);
  CHECK(flow_run.stdout_json.value("sigma", 1.0) == doctest::Approx(1e-3));

  const std::string out = (fix.dir / "align_files").string();
  const CapturedRun run = run_cli({"align", "--source", fix.source_path, "--target",
                                   fix.target_path, "--depth", fix.depth_path, "--calib",
                                   fix.calib_path, "--gt-pose", fix.gt_pose_str, "--flow",
                                   flow_path, "--init-noise-rot", "3.0", "--seed", "3",
                                   "--out", out});
  CHECK(run.exit_code == kExitSuccess);
  CHECK(run.stdout_json.value("rotation_error_deg", 1e9) < 0.1);
  CHECK(fs::exists(fs::path(out) / "trace.csv"));
}

TEST_CASE("cli: the paper-literal norm mode is recorded verbatim in the trace") {
  const CliFixture fix;
  const std::string out = (fix.dir / "align_literal").string();
  const CapturedRun run =
      run_cli({"align", "--scene", fix.scene_path, "--norm-mode", "paper-literal",
               "--provider", "ground-truth", "--out", out});
  CHECK(run.exit_code == kExitSuccess);
  std::ifstream trace(fs::path(out) / "trace.csv");
  std::string first;
  std::getline(trace, first);
  CHECK(first == "# norm_mode=paper-literal");
}

TEST_CASE("cli: flow on identical images via block matching is near zero") {
  const CliFixture fix;
  const std::string flow_path = (fix.dir / "ident.flw").string();
  const CapturedRun run = run_cli({"flow", "--source", fix.source_path, "--target",
                                   fix.source_path, "--depth", fix.depth_path, "--calib",
                                   fix.calib_path, "--provider", "block-matching",
                                   "--bm-radius", "3", "--out", flow_path});
  CHECK(run.exit_code == kExitSuccess);
  CHECK(run.stdout_json.value("median_flow_px", 1e9) < 0.5);
  CHECK(run.stdout_json.value("valid_cells", 0) > 1000);

  // The emitted file is a valid FLW1 payload.
  const FlowField field = read_flow_file(flow_path);
  CHECK(field.grid_width == kDefaultFlowGridWidth);
  CHECK(field.grid_height == kDefaultFlowGridHeight);
}

TEST_CASE("cli: basin command writes deterministic reports") {
  const CliFixture fix;
  const std::string spec_path = (fix.dir / "basin_spec.json").string();
  {
    json spec;
    spec["scene"] = json::parse(fix.scene.to_json());
    spec["pair_rotation_deg"] = {1.5, -1.0, 0.5};
    spec["pair_translation"] = {0.04, 0.02, 0.01};
    spec["trials"] = 3;
    spec["seed"] = 17;
    spec["magnitudes"] = {{{"rotation_noise_deg", 2.0}, {"translation_noise_frac", 0.01}}};
    spec["configs"] = {{{"id", "huber"}, {"kind", "huber"}},
                       {{"id", "flownorm-gt"},
                        {"kind", "flownorm"},
                        {"provider", {{"kind", "ground-truth"}}}}};
    std::ofstream out(spec_path);
    out << spec.dump(2);
  }
  const std::string out_a = (fix.dir / "basin_a").string();
  const std::string out_b = (fix.dir / "basin_b").string();
  CHECK(run_cli({"basin", "--spec", spec_path, "--out", out_a}).exit_code == kExitSuccess);
  CHECK(run_cli({"basin", "--spec", spec_path, "--out", out_b}).exit_code == kExitSuccess);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  const std::string csv_a = slurp(fs::path(out_a) / "basin.csv");
  CHECK_FALSE(csv_a.empty());
  CHECK(csv_a == slurp(fs::path(out_b) / "basin.csv"));
  CHECK(fs::exists(fs::path(out_a) / "summary.json"));
  CHECK(fs::exists(fs::path(out_a) / "basin.svg"));

  json summary;
  std::ifstream sj(fs::path(out_a) / "summary.json");
  sj >> summary;
  CHECK(summary["spec"]["seed"] == 17);
  CHECK(summary["points"][0]["summaries"].size() == 2);
}

TEST_CASE("cli: skip command produces the two headline numbers") {
  const CliFixture fix;
  SyntheticScene scene = fix.scene;
  const std::string spec_path = (fix.dir / "skip_spec.json").string();
  {
    json spec;
    spec["scene"] = json::parse(scene.to_json());
    spec["num_frames"] = 6;
    spec["step_deg"] = 0.8;
    spec["skips"] = {1, 2};
    spec["runs_per_skip"] = 1;
    spec["seed"] = 5;
    spec["configs"] = {{{"id", "huber"}, {"kind", "huber"}}};
    std::ofstream out(spec_path);
    out << spec.dump(2);
  }
  const std::string out = (fix.dir / "skip_out").string();
  CHECK(run_cli({"skip", "--spec", spec_path, "--out", out}).exit_code == kExitSuccess);
  json summary;
  std::ifstream sj(fs::path(out) / "summary.json");
  sj >> summary;
  REQUIRE(summary["summaries"].size() == 1);
  CHECK(summary["summaries"][0].contains("max_skip_acceptable"));
  CHECK(summary["summaries"][0].contains("max_skip_without_loss"));
  CHECK(fs::exists(fs::path(out) / "skip.csv"));
  CHECK(fs::exists(fs::path(out) / "skip.svg"));
}

TEST_CASE("cli: malformed spec JSON exits 2") {
  const CliFixture fix;
  const std::string spec_path = (fix.dir / "broken.json").string();
  {
    std::ofstream out(spec_path);
    out << "{ not json";
  }
  const CapturedRun run = run_cli({"basin", "--spec", spec_path, "--out", (fix.dir / "x").string()});
  CHECK(run.exit_code == kExitInputError);
  CHECK(run.stdout_json.value("error", "") == "malformed-line");
}

TEST_CASE("cli: unknown subcommand exits with an input error") {
  CHECK(run_cli({"frobnicate"}).exit_code == kExitInputError);
}

TEST_CASE("cli: a hopeless alignment exits 1") {
  const CliFixture fix;
  const std::string out = (fix.dir / "align_bad").string();
  // Tiny iteration budget and a far init: cannot converge.
  const CapturedRun run =
      run_cli({"align", "--scene", fix.scene_path, "--no-flow", "--max-iterations", "1",
               "--init", "0.8 0 0  0 0 0 1", "--out", out});
  CHECK(run.exit_code == kExitNonConvergence);
  CHECK_FALSE(run.stdout_json.value("converged", true));
}

TEST_CASE("cli: JSON config file provides defaults that flags override") {
  const CliFixture fix;
  const std::string cfg_path = (fix.dir / "solver.json").string();
  {
    json cfg;
    cfg["huber_delta"] = 4.5;
    cfg["flownorm_levels"] = {1};
    cfg["flow_norm"] = {{"mode", "paper-literal"}, {"min_weight", 0.25}};
    std::ofstream out(cfg_path);
    out << cfg.dump(2);
  }
  const std::string out = (fix.dir / "align_cfg").string();
  // --norm-mode on the command line wins over the config file.
  const CapturedRun run =
      run_cli({"align", "--scene", fix.scene_path, "--config", cfg_path, "--norm-mode",
               "canonical", "--out", out});
  CHECK(run.exit_code == kExitSuccess);
  const json& config = run.stdout_json["config"];
  CHECK(config["huber_delta"] == 4.5);                              // from the file
  CHECK(config["flownorm_levels"] == json::array({1}));             // from the file
  CHECK(config["flow_norm"]["min_weight"] == 0.25);                 // from the file
  CHECK(config["flow_norm"]["mode"] == "canonical");                // flag override
}

TEST_CASE("cli: emitted CSV and SVG artifacts carry the resolved config") {
  const CliFixture fix;
  const std::string spec_path = (fix.dir / "meta_spec.json").string();
  {
    json spec;
    spec["scene"] = json::parse(fix.scene.to_json());
    spec["trials"] = 2;
    spec["seed"] = 8;
    spec["configs"] = {{{"id", "huber"}, {"kind", "huber"}}};
    std::ofstream out(spec_path);
    out << spec.dump(2);
  }
  const std::string out = (fix.dir / "meta_out").string();
  CHECK(run_cli({"basin", "--spec", spec_path, "--out", out}).exit_code == kExitSuccess);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  const std::string csv = slurp(fs::path(out) / "basin.csv");
  CHECK(csv.rfind("# {", 0) == 0);
  CHECK(csv.find("\"seed\":8") != std::string::npos);
  const std::string svg = slurp(fs::path(out) / "basin.svg");
  CHECK(svg.find("<desc>") != std::string::npos);
  CHECK(svg.find("huber_delta") != std::string::npos);
}
