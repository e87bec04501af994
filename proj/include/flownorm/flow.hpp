#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flownorm/geometry.hpp"
#include "flownorm/image.hpp"

namespace flownorm {

inline constexpr int kDefaultFlowGridWidth = 160;
inline constexpr int kDefaultFlowGridHeight = 112;
inline constexpr double kSigmaFloor = 1e-3;  // pixels

// Coarse flow map on a regular grid spanning the full-resolution image.
// Vectors are in full-resolution pixel units regardless of grid size.
// sigma is one scalar per field: the RMS of the per-cell L2 flow error
// (documented convention; see estimate_sigma).
struct FlowField {
  int grid_width = 0;
  int grid_height = 0;
  std::vector<Vec2> vectors;      // row-major, grid_width * grid_height
  std::vector<uint8_t> valid;
  double sigma = kSigmaFloor;

  // Full-resolution image size the grid spans. Not part of the wire
  // format; attach after loading from disk.
  int image_width = 0;
  int image_height = 0;

  int source_frame_id = -1;
  int target_frame_id = -1;

  FlowField() = default;
  FlowField(int gw, int gh, int img_w, int img_h)
      : grid_width(gw), grid_height(gh),
        vectors(static_cast<size_t>(gw) * gh, Vec2::Zero()),
        valid(static_cast<size_t>(gw) * gh, 0),
        image_width(img_w), image_height(img_h) {}

  size_t cell_index(int gx, int gy) const { return static_cast<size_t>(gy) * grid_width + gx; }

  // Center of grid cell (gx, gy) in full-resolution pixel coordinates.
  Vec2 cell_center(int gx, int gy) const {
    return Vec2((gx + 0.5) * image_width / grid_width - 0.5,
                (gy + 0.5) * image_height / grid_height - 0.5);
  }

  int valid_count() const;
};

struct FlowQuery {
  Vec2 flow_position = Vec2::Zero();  // p° at the queried level
  bool valid = false;
};

// Bilinear interpolation of the flow grid at pixel p given in `level`
// coordinates; the result is p° at that level (vectors scale by 2^-level).
// Invalid when any contributing cell is masked or p falls off the grid.
FlowQuery query_flow(const FlowField& field, const Vec2& p, int level);

enum class FlowProviderKind { GroundTruth, NoisyOracle, BlockMatching };

const char* to_string(FlowProviderKind kind);
FlowProviderKind flow_provider_from_string(const std::string& s);

struct BlockMatchingParams {
  int patch_size = 7;            // odd
  int search_radius = 4;         // per pyramid level, pixels
  double min_score = 0.5;        // ZNCC acceptance threshold
  int grid_width = kDefaultFlowGridWidth;
  int grid_height = kDefaultFlowGridHeight;
};

struct FlowProviderConfig {
  FlowProviderKind kind = FlowProviderKind::GroundTruth;
  double noise_sigma = 0.0;      // per-component, NoisyOracle only
  Vec2 bias = Vec2::Zero();      // constant offset, NoisyOracle only
  uint64_t seed = 0;
  BlockMatchingParams block_matching;
};

// Exact flow from source depth and the ground-truth relative pose. Cells
// are masked when the projection fails or, if a target depth map is given,
// when the projected depth disagrees with it by more than 5% (occlusion).
// sigma is the kSigmaFloor nominal value.
FlowField ground_truth_flow(const GrayImage& depth_source, const GrayImage* depth_target,
                            const SE3Pose& pose_target_from_source,
                            const CameraIntrinsics& intrinsics,
                            int grid_width = kDefaultFlowGridWidth,
                            int grid_height = kDefaultFlowGridHeight);

// Seeded i.i.d. Gaussian noise per component plus an optional constant
// bias on every valid cell. The field sigma becomes the true RMS L2 error
// sqrt(2*noise_sigma^2 + |bias|^2), floored at kSigmaFloor.
FlowField noisy_oracle_flow(const FlowField& ground_truth, double noise_sigma,
                            const Vec2& bias = Vec2::Zero(), uint64_t seed = 0);

// Classical coarse-to-fine ZNCC block matching between the two pyramids.
// Cells whose best correlation stays under cfg.min_score are masked. A
// fully masked field is legal.
FlowField block_matching_flow(const PyramidImage& source, const PyramidImage& target,
                              const BlockMatchingParams& cfg = {});

// sigma = sqrt(mean over cells valid in both fields of |F_pred - F_gt|^2),
// floored at kSigmaFloor. Throws EmptyCalibration when no pair contributes.
double estimate_sigma(const std::vector<std::pair<FlowField, FlowField>>& predicted_vs_gt);

// Flat binary format: magic "FLW1", u32 grid width, u32 grid height,
// f32 sigma, then row-major per cell f32 fx, f32 fy, u8 valid.
void write_flow_file(const std::string& path, const FlowField& field);
FlowField read_flow_file(const std::string& path);

void write_flow_csv(const std::string& path, const FlowField& field);

// Keyframe flow buffer keyed by (source id, target id). Thread-safe, so a
// producer thread can publish fields while a tracker consumes them; a
// missing entry is the not-ready signal and callers degrade to Huber-only.
class FlowCache {
 public:
  void put(int source_frame_id, int target_frame_id, FlowField field);
  // nullopt when the pair has not been computed (yet).
  std::optional<FlowField> get(int source_frame_id, int target_frame_id) const;
  int size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<int, int>, FlowField> fields_;
};

}  // namespace flownorm
