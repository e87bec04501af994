#include "flownorm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flownorm/png_io.hpp"

namespace flownorm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kAssociationWindow = 0.020;  // seconds
constexpr double kQuaternionNormTolerance = 1e-3;

struct StampedPath {
  double timestamp;
  std::string path;
};

struct StampedPose {
  double timestamp;
  SE3Pose pose;
};

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::vector<StampedPath> read_stamped_paths(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + file.string());
  std::vector<StampedPath> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    StampedPath entry;
    if (!(ss >> entry.timestamp >> entry.path)) {
      throw Error(ErrorKind::MalformedLine,
                  file.string() + ":" + std::to_string(line_no) + ": \"" + line + "\"");
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<StampedPose> read_groundtruth(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + file.string());
  std::vector<StampedPose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw Error(ErrorKind::MalformedLine,
                  file.string() + ":" + std::to_string(line_no) + ": \"" + line + "\"");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > kQuaternionNormTolerance) {
      throw Error(ErrorKind::MalformedLine,
                  file.string() + ":" + std::to_string(line_no) +
                      ": quaternion norm " + std::to_string(q.norm()));
    }
    out.push_back({t, SE3Pose(q, Vec3(tx, ty, tz))});
  }
  return out;
}

// Index of the nearest timestamp within the association window, or -1.
template <typename T>
int nearest_within(const std::vector<T>& sorted, double t) {
  if (sorted.empty()) return -1;
  int best = -1;
  double best_gap = kAssociationWindow;
  auto it = std::lower_bound(sorted.begin(), sorted.end(), t,
                             [](const T& a, double v) { return a.timestamp < v; });
  for (auto probe : {it, it == sorted.begin() ? it : std::prev(it)}) {
    if (probe == sorted.end()) continue;
    const double gap = std::abs(probe->timestamp - t);
    if (gap <= best_gap) {
      best_gap = gap;
      best = static_cast<int>(probe - sorted.begin());
    }
  }
  return best;
}

}  // namespace

std::vector<Frame> load_tum_sequence(const std::string& dir) {
  const fs::path root(dir);
  auto rgb = read_stamped_paths(root / "rgb.txt");

  std::vector<StampedPath> depth_entries;
  if (fs::exists(root / "depth.txt")) depth_entries = read_stamped_paths(root / "depth.txt");
  std::vector<StampedPose> gt;
  if (fs::exists(root / "groundtruth.txt")) gt = read_groundtruth(root / "groundtruth.txt");

  auto by_time = [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; };
  std::stable_sort(rgb.begin(), rgb.end(), by_time);
  std::stable_sort(depth_entries.begin(), depth_entries.end(), by_time);
  std::stable_sort(gt.begin(), gt.end(), by_time);

  std::vector<Frame> frames;
  frames.reserve(rgb.size());
  for (const StampedPath& entry : rgb) {
    Frame frame;
    frame.timestamp = entry.timestamp;
    frame.id = static_cast<int>(frames.size());
    frame.gray = read_gray_png((root / entry.path).string());

    const int di = nearest_within(depth_entries, entry.timestamp);
    if (di >= 0) frame.depth = read_depth_png((root / depth_entries[di].path).string());
    const int gi = nearest_within(gt, entry.timestamp);
    if (gi >= 0) frame.gt_world_from_camera = gt[gi].pose;

    frames.push_back(std::move(frame));
  }
  if (frames.empty()) {
    throw Error(ErrorKind::EmptyAssociation, "no frames associated in " + dir);
  }
  return frames;
}

void write_tum_sequence(const std::string& dir, const std::vector<Frame>& frames) {
  const fs::path root(dir);
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "depth");

  std::ofstream rgb_txt(root / "rgb.txt");
  std::ofstream depth_txt(root / "depth.txt");
  std::ofstream gt_txt(root / "groundtruth.txt");
  gt_txt.precision(17);
  rgb_txt << "# timestamp filename\n";
  depth_txt << "# timestamp filename\n";
  gt_txt << "# timestamp tx ty tz qx qy qz qw\n";

  char buf[64];
  for (const Frame& f : frames) {
    std::snprintf(buf, sizeof(buf), "%.6f", f.timestamp);
    const std::string stamp(buf);
    const std::string rgb_name = "rgb/" + stamp + ".png";
    write_gray_png((root / rgb_name).string(), f.gray);
    rgb_txt << stamp << " " << rgb_name << "\n";
    if (f.depth) {
      const std::string depth_name = "depth/" + stamp + ".png";
      write_depth_png((root / depth_name).string(), *f.depth);
      depth_txt << stamp << " " << depth_name << "\n";
    }
    if (f.gt_world_from_camera) {
      const SE3Pose& p = *f.gt_world_from_camera;
      const auto& q = p.rotation();
      gt_txt << stamp << " " << p.translation().x() << " " << p.translation().y() << " "
             << p.translation().z() << " " << q.x() << " " << q.y() << " " << q.z() << " "
             << q.w() << "\n";
    }
  }
}

std::vector<Frame> downsample_sequence(const std::vector<Frame>& frames, int skip) {
  if (skip < 0) throw Error(ErrorKind::InvalidConfig, "negative skip");
  std::vector<Frame> out;
  for (size_t i = 0; i < frames.size(); i += skip + 1) out.push_back(frames[i]);
  return out;
}

const char* to_string(DepthModelKind kind) {
  switch (kind) {
    case DepthModelKind::FrontoParallelPlane: return "fronto-parallel-plane";
    case DepthModelKind::SlantedPlane: return "slanted-plane";
    case DepthModelKind::HeightField: return "height-field";
  }
  return "slanted-plane";
}

DepthModelKind depth_model_from_string(const std::string& s) {
  if (s == "fronto-parallel-plane") return DepthModelKind::FrontoParallelPlane;
  if (s == "slanted-plane") return DepthModelKind::SlantedPlane;
  if (s == "height-field") return DepthModelKind::HeightField;
  throw Error(ErrorKind::InvalidConfig, "unknown depth model: " + s);
}

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice_value(uint64_t seed, int64_t ix, int64_t iy) {
  const uint64_t h = splitmix64(seed ^ splitmix64(static_cast<uint64_t>(ix) * 0x517CC1B727220A95ull) ^
                                splitmix64(static_cast<uint64_t>(iy) * 0x2545F4914F6CDD1Dull));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx);
  const int64_t iy = static_cast<int64_t>(fy);
  const double u = smoothstep(x - fx);
  const double v = smoothstep(y - fy);
  const double v00 = lattice_value(seed, ix, iy);
  const double v10 = lattice_value(seed, ix + 1, iy);
  const double v01 = lattice_value(seed, ix, iy + 1);
  const double v11 = lattice_value(seed, ix + 1, iy + 1);
  return (1.0 - u) * (1.0 - v) * v00 + u * (1.0 - v) * v10 + (1.0 - u) * v * v01 + u * v * v11;
}

double octave_noise(uint64_t seed, double x, double y, double wavelength, int octaves) {
  double sum = 0.0;
  double amp = 1.0;
  double total = 0.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(seed + 1315423911ull * o, x / wavelength, y / wavelength);
    total += amp;
    amp *= 0.5;
    wavelength *= 0.5;
  }
  return sum / total;  // [0,1)
}

Vec3 pixel_ray(const CameraIntrinsics& k, const Vec2& p) {
  return Vec3((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, 1.0);
}

}  // namespace

GrayImage SyntheticScene::render_texture() const {
  GrayImage img(intrinsics.width, intrinsics.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y) = 20.0 + 215.0 * octave_noise(seed, x, y, texture_wavelength, texture_octaves);
    }
  }
  return img;
}

double SyntheticScene::depth_at(const Vec2& pixel) const {
  switch (model) {
    case DepthModelKind::FrontoParallelPlane:
      return base_depth;
    case DepthModelKind::SlantedPlane: {
      const Vec3 n = Vec3(slant_x, slant_y, 1.0).normalized();
      const double c = n.z() * base_depth;  // plane through (0,0,base_depth)
      const double denom = n.dot(pixel_ray(intrinsics, pixel));
      if (denom <= 1e-9) return 0.0;
      return c / denom;
    }
    case DepthModelKind::HeightField:
      return base_depth + height_amplitude *
                              (2.0 * octave_noise(seed ^ 0xD1FF00D5ull, pixel.x(), pixel.y(),
                                                  height_wavelength, 2) -
                               1.0);
  }
  return 0.0;
}

GrayImage SyntheticScene::depth_map() const {
  GrayImage depth(intrinsics.width, intrinsics.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) depth.at(x, y) = depth_at(Vec2(x, y));
  }
  return depth;
}

std::string SyntheticScene::to_json() const {
  json j;
  j["seed"] = seed;
  j["model"] = to_string(model);
  j["base_depth"] = base_depth;
  j["slant_x"] = slant_x;
  j["slant_y"] = slant_y;
  j["height_amplitude"] = height_amplitude;
  j["height_wavelength"] = height_wavelength;
  j["texture_wavelength"] = texture_wavelength;
  j["texture_octaves"] = texture_octaves;
  j["intrinsics"] = {{"fx", intrinsics.fx}, {"fy", intrinsics.fy}, {"cx", intrinsics.cx},
                     {"cy", intrinsics.cy}, {"width", intrinsics.width},
                     {"height", intrinsics.height}};
  return j.dump(2);
}

SyntheticScene SyntheticScene::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedLine, std::string("bad scene JSON: ") + e.what());
  }
  SyntheticScene s;
  s.seed = j.value("seed", s.seed);
  if (j.contains("model")) s.model = depth_model_from_string(j["model"].get<std::string>());
  s.base_depth = j.value("base_depth", s.base_depth);
  s.slant_x = j.value("slant_x", s.slant_x);
  s.slant_y = j.value("slant_y", s.slant_y);
  s.height_amplitude = j.value("height_amplitude", s.height_amplitude);
  s.height_wavelength = j.value("height_wavelength", s.height_wavelength);
  s.texture_wavelength = j.value("texture_wavelength", s.texture_wavelength);
  s.texture_octaves = j.value("texture_octaves", s.texture_octaves);
  if (j.contains("intrinsics")) {
    const json& k = j["intrinsics"];
    s.intrinsics.fx = k.value("fx", s.intrinsics.fx);
    s.intrinsics.fy = k.value("fy", s.intrinsics.fy);
    s.intrinsics.cx = k.value("cx", s.intrinsics.cx);
    s.intrinsics.cy = k.value("cy", s.intrinsics.cy);
    s.intrinsics.width = k.value("width", s.intrinsics.width);
    s.intrinsics.height = k.value("height", s.intrinsics.height);
  }
  return s;
}

SyntheticScene SyntheticScene::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open scene file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void SyntheticScene::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  out << to_json() << "\n";
}

namespace {

// g(lambda) = z-depth of the back-projected point minus the surface depth
// under its source pixel; a root is a surface hit.
struct RayProbe {
  const SyntheticScene& scene;
  Mat33 rot_inv;   // scene-from-view rotation
  Vec3 t_inv;      // scene-from-view translation
  Vec3 dir;        // view-camera ray, z = 1

  // Returns false when the point is unusable (behind the camera or off
  // the texture); fills g otherwise.
  bool eval(double lambda, double& g, Vec2* source_px = nullptr) const {
    const Vec3 x_scene = rot_inv * (lambda * dir) + t_inv;
    if (x_scene.z() < kDepthFloor) return false;
    const CameraIntrinsics& k = scene.intrinsics;
    const Vec2 px(k.fx * x_scene.x() / x_scene.z() + k.cx,
                  k.fy * x_scene.y() / x_scene.z() + k.cy);
    if (px.x() < 1.0 || px.x() > k.width - 2.0 || px.y() < 1.0 || px.y() > k.height - 2.0) {
      return false;
    }
    const double surface = scene.depth_at(px);
    if (surface <= 0.0) return false;
    g = x_scene.z() - surface;
    if (source_px) *source_px = px;
    return true;
  }
};

bool intersect_plane(const SyntheticScene& scene, const RayProbe& probe, double& lambda) {
  Vec3 n(0.0, 0.0, 1.0);
  double c = scene.base_depth;
  if (scene.model == DepthModelKind::SlantedPlane) {
    n = Vec3(scene.slant_x, scene.slant_y, 1.0).normalized();
    c = n.z() * scene.base_depth;
  }
  const Vec3 d_scene = probe.rot_inv * probe.dir;
  const double denom = n.dot(d_scene);
  if (std::abs(denom) < 1e-12) return false;
  lambda = (c - n.dot(probe.t_inv)) / denom;
  return lambda > kDepthFloor;
}

bool intersect_height_field(const RayProbe& probe, double& lambda) {
  // March for the first in-front-to-behind sign change, then bisect.
  constexpr double kNear = 0.2, kFar = 15.0;
  constexpr int kSteps = 96;
  double prev_lambda = 0.0, prev_g = 0.0;
  bool have_prev = false;
  for (int i = 0; i <= kSteps; ++i) {
    const double l = kNear + (kFar - kNear) * i / kSteps;
    double g;
    if (!probe.eval(l, g)) {
      have_prev = false;
      continue;
    }
    if (have_prev && prev_g < 0.0 && g >= 0.0) {
      double lo = prev_lambda, hi = l;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        double gm;
        if (!probe.eval(mid, gm)) break;
        (gm < 0.0 ? lo : hi) = mid;
      }
      lambda = 0.5 * (lo + hi);
      return true;
    }
    prev_lambda = l;
    prev_g = g;
    have_prev = true;
  }
  return false;
}

}  // namespace

RenderedView render_view(const SyntheticScene& scene, const SE3Pose& view_from_scene) {
  const CameraIntrinsics& k = scene.intrinsics;
  const GrayImage texture = scene.render_texture();
  const SE3Pose scene_from_view = view_from_scene.inverse();

  RenderedView out;
  out.image = GrayImage(k.width, k.height, 0.0);
  out.depth = GrayImage(k.width, k.height, 0.0);
  out.mask.assign(static_cast<size_t>(k.width) * k.height, 0);

  RayProbe probe{scene, scene_from_view.rotation_matrix(), scene_from_view.translation(),
                 Vec3::Zero()};

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      probe.dir = pixel_ray(k, Vec2(x, y));
      double lambda;
      bool hit = scene.model == DepthModelKind::HeightField
                     ? intersect_height_field(probe, lambda)
                     : intersect_plane(scene, probe, lambda);
      if (!hit) continue;
      double g;
      Vec2 source_px;
      if (!probe.eval(lambda, g, &source_px)) continue;
      const auto sample = sample_bilinear(texture, source_px);
      if (!sample) continue;
      out.image.at(x, y) = sample->value;
      out.depth.at(x, y) = lambda;  // ray has z = 1, so lambda is the z-depth
      out.mask[static_cast<size_t>(y) * k.width + x] = 1;
    }
  }
  return out;
}

RenderedPair render_pair(const SyntheticScene& scene, const SE3Pose& pose_target_from_source) {
  const CameraIntrinsics& k = scene.intrinsics;

  RenderedPair out;
  out.source.timestamp = 0.0;
  out.source.id = 0;
  out.source.gray = scene.render_texture();
  out.source.depth = scene.depth_map();
  out.source.gt_world_from_camera = SE3Pose::identity();

  RenderedView view = render_view(scene, pose_target_from_source);
  out.target.timestamp = 1.0;
  out.target.id = 1;
  out.target.gray = std::move(view.image);
  out.target.depth = std::move(view.depth);
  out.target.gt_world_from_camera = pose_target_from_source.inverse();

  out.flow = ground_truth_flow(*out.source.depth, &*out.target.depth, pose_target_from_source,
                               k, k.width, k.height);
  out.flow.source_frame_id = 0;
  out.flow.target_frame_id = 1;

  long with_depth = 0;
  for (double d : out.source.depth->values) with_depth += d > 0.0;
  if (with_depth == 0 || out.flow.valid_count() < 0.3 * with_depth) {
    throw Error(ErrorKind::InsufficientOverlap,
                "only " + std::to_string(out.flow.valid_count()) + " of " +
                    std::to_string(with_depth) + " source pixels visible in target");
  }
  return out;
}

namespace {

// Camera fixating the on-axis anchor from a yaw angle on its orbit circle.
Frame orbit_frame(const SyntheticScene& scene, double angle_deg, int index) {
  const Vec3 anchor(0.0, 0.0, scene.base_depth);
  const double angle = angle_deg * M_PI / 180.0;
  const Mat33 rot = Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
  const SE3Pose world_from_camera(rot, anchor - rot * anchor);

  Frame frame;
  frame.timestamp = index * 0.1;
  frame.id = index;
  RenderedView view = render_view(scene, world_from_camera.inverse());
  frame.gray = std::move(view.image);
  frame.depth = std::move(view.depth);
  frame.gt_world_from_camera = world_from_camera;
  return frame;
}

}  // namespace

std::vector<Frame> make_orbit_sequence(const SyntheticScene& scene, int num_frames,
                                       double step_deg, double accel_deg) {
  std::vector<Frame> frames;
  frames.reserve(num_frames);
  double angle_deg = 0.0;
  for (int i = 0; i < num_frames; ++i) {
    if (i > 0) angle_deg += step_deg + accel_deg * (i - 1);
    frames.push_back(orbit_frame(scene, angle_deg, i));
  }
  return frames;
}

std::vector<Frame> make_swing_sequence(const SyntheticScene& scene, int num_frames,
                                       double amplitude_deg, double period_frames) {
  if (period_frames <= 0.0) {
    throw Error(ErrorKind::InvalidConfig, "swing period must be positive");
  }
  std::vector<Frame> frames;
  frames.reserve(num_frames);
  for (int i = 0; i < num_frames; ++i) {
    frames.push_back(orbit_frame(scene, amplitude_deg * std::sin(2.0 * M_PI * i / period_frames), i));
  }
  return frames;
}

}  // namespace flownorm
