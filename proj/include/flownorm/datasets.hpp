#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flownorm/flow.hpp"
#include "flownorm/geometry.hpp"
#include "flownorm/image.hpp"

namespace flownorm {

struct Frame {
  double timestamp = 0.0;
  int id = 0;
  GrayImage gray;
  std::optional<GrayImage> depth;  // meters, 0 = no depth
  std::optional<SE3Pose> gt_world_from_camera;
};

// TUM RGB-D directory layout: rgb.txt plus optional depth.txt and
// groundtruth.txt. rgb/depth entries are "timestamp path"; ground truth is
// "timestamp tx ty tz qx qy qz qw". Entries associate by nearest timestamp
// within 20 ms; 16-bit depth PNGs decode at 5000 units per meter.
// Quaternions off unit norm by more than 1e-3 are malformed; smaller
// deviations are normalized silently.
std::vector<Frame> load_tum_sequence(const std::string& dir);

// Inverse of load_tum_sequence for fixtures: writes rgb.txt / depth.txt /
// groundtruth.txt and the referenced PNGs.
void write_tum_sequence(const std::string& dir, const std::vector<Frame>& frames);

// Keeps every (skip+1)-th frame; skip = 0 is the identity.
std::vector<Frame> downsample_sequence(const std::vector<Frame>& frames, int skip);

enum class DepthModelKind { FrontoParallelPlane, SlantedPlane, HeightField };

const char* to_string(DepthModelKind kind);
DepthModelKind depth_model_from_string(const std::string& s);

// Procedurally textured surface expressed in the source camera frame.
// Texture is seeded value noise (several octaves, smoothstep-interpolated),
// so gradients cover the image and point selection cannot degenerate.
struct SyntheticScene {
  uint64_t seed = 1;
  CameraIntrinsics intrinsics{250.0, 250.0, 159.5, 119.5, 320, 240};
  DepthModelKind model = DepthModelKind::SlantedPlane;
  double base_depth = 2.0;       // meters, depth of the surface at the optical axis
  double slant_x = 0.25;         // plane normal components (SlantedPlane)
  double slant_y = 0.1;
  double height_amplitude = 0.25;  // meters (HeightField)
  double height_wavelength = 64.0; // pixels (HeightField)
  double texture_wavelength = 24.0;  // coarsest octave, pixels
  int texture_octaves = 3;

  GrayImage render_texture() const;
  // z-depth of the surface along the ray of the (continuous) source pixel.
  double depth_at(const Vec2& pixel) const;
  GrayImage depth_map() const;

  std::string to_json() const;
  static SyntheticScene from_json(const std::string& json_text);
  static SyntheticScene load(const std::string& path);
  void save(const std::string& path) const;
};

struct RenderedView {
  GrayImage image;          // masked pixels hold 0
  GrayImage depth;          // z-depth, 0 where masked
  std::vector<uint8_t> mask;  // 1 = observed
};

// Renders the scene from view_from_scene by per-pixel ray intersection
// (closed form for planes, bracketed bisection for the height field) and
// bilinear sampling of the scene texture.
RenderedView render_view(const SyntheticScene& scene, const SE3Pose& view_from_scene);

struct RenderedPair {
  Frame source;
  Frame target;
  FlowField flow;  // dense (pixel-resolution grid), occlusion-masked
};

// Source frame straight from the scene, target frame rendered at
// pose_target_from_source, plus the exact dense flow between them.
// Throws InsufficientOverlap when fewer than 30% of the source pixels
// with depth stay visible in the target.
RenderedPair render_pair(const SyntheticScene& scene, const SE3Pose& pose_target_from_source);

// Camera orbiting the scene's on-axis anchor point at base_depth, yawing
// step_deg per frame while fixating the anchor. A nonzero accel_deg grows
// the step linearly (step_deg + accel_deg * i before frame i+1), which
// breaks constant-velocity initialization once frames are skipped. Frame 0
// is the scene's own view; every frame carries depth and ground truth.
std::vector<Frame> make_orbit_sequence(const SyntheticScene& scene, int num_frames,
                                       double step_deg, double accel_deg = 0.0);

// Sinusoidal yaw swing about the anchor: angle_i = amplitude *
// sin(2*pi*i/period). Bounded excursion with strongly varying inter-frame
// motion, so constant-velocity initialization degrades sharply under
// frame skipping.
std::vector<Frame> make_swing_sequence(const SyntheticScene& scene, int num_frames,
                                       double amplitude_deg, double period_frames);

}  // namespace flownorm
