#include "flownorm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace flownorm {

int FlowField::valid_count() const {
  int n = 0;
  for (uint8_t v : valid) n += v != 0;
  return n;
}

const char* to_string(FlowProviderKind kind) {
  switch (kind) {
    case FlowProviderKind::GroundTruth: return "ground-truth";
    case FlowProviderKind::NoisyOracle: return "noisy-oracle";
    case FlowProviderKind::BlockMatching: return "block-matching";
  }
  return "ground-truth";
}

FlowProviderKind flow_provider_from_string(const std::string& s) {
  if (s == "ground-truth") return FlowProviderKind::GroundTruth;
  if (s == "noisy-oracle") return FlowProviderKind::NoisyOracle;
  if (s == "block-matching") return FlowProviderKind::BlockMatching;
  throw Error(ErrorKind::InvalidConfig, "unknown flow provider: " + s);
}

FlowQuery query_flow(const FlowField& field, const Vec2& p, int level) {
  FlowQuery out;
  if (field.grid_width < 2 || field.grid_height < 2 || field.image_width <= 0 ||
      field.image_height <= 0) {
    return out;
  }

  const Vec2 p0 = pixel_to_level(p, level, 0);
  const double gx = (p0.x() + 0.5) * field.grid_width / field.image_width - 0.5;
  const double gy = (p0.y() + 0.5) * field.grid_height / field.image_height - 0.5;
  if (gx < 0.0 || gy < 0.0 || gx > field.grid_width - 1.0 || gy > field.grid_height - 1.0) {
    return out;
  }

  const int x0 = std::min(static_cast<int>(gx), field.grid_width - 2);
  const int y0 = std::min(static_cast<int>(gy), field.grid_height - 2);
  const double fx = gx - x0;
  const double fy = gy - y0;

  const size_t i00 = field.cell_index(x0, y0);
  const size_t i10 = field.cell_index(x0 + 1, y0);
  const size_t i01 = field.cell_index(x0, y0 + 1);
  const size_t i11 = field.cell_index(x0 + 1, y0 + 1);
  if (!field.valid[i00] || !field.valid[i10] || !field.valid[i01] || !field.valid[i11]) {
    return out;
  }

  const Vec2 flow = (1.0 - fx) * (1.0 - fy) * field.vectors[i00] +
                    fx * (1.0 - fy) * field.vectors[i10] +
                    (1.0 - fx) * fy * field.vectors[i01] + fx * fy * field.vectors[i11];
  out.flow_position = p + flow / std::pow(2.0, level);
  out.valid = true;
  return out;
}

FlowField ground_truth_flow(const GrayImage& depth_source, const GrayImage* depth_target,
                            const SE3Pose& pose_target_from_source,
                            const CameraIntrinsics& intrinsics, int grid_width,
                            int grid_height) {
  if (depth_source.width != intrinsics.width || depth_source.height != intrinsics.height) {
    throw Error(ErrorKind::MissingDepth, "source depth does not match intrinsics");
  }

  FlowField field(grid_width, grid_height, intrinsics.width, intrinsics.height);
  field.sigma = kSigmaFloor;  // nominal: the flow is exact

  for (int gy = 0; gy < grid_height; ++gy) {
    for (int gx = 0; gx < grid_width; ++gx) {
      const Vec2 p = field.cell_center(gx, gy);
      const int px = static_cast<int>(std::lround(p.x()));
      const int py = static_cast<int>(std::lround(p.y()));
      if (!depth_source.in_bounds(px, py)) continue;
      const double depth = depth_source.at(px, py);
      if (depth <= 0.0) continue;

      const Projection proj = project(p, pose_target_from_source, 1.0 / depth, intrinsics);
      if (!proj.valid) continue;

      if (depth_target) {
        const int qx = static_cast<int>(std::lround(proj.pixel.x()));
        const int qy = static_cast<int>(std::lround(proj.pixel.y()));
        if (!depth_target->in_bounds(qx, qy)) continue;
        const double observed = depth_target->at(qx, qy);
        // Occlusion: the target frame sees a different (nearer) surface here.
        if (observed <= 0.0 || std::abs(proj.depth - observed) > 0.05 * observed) continue;
      }

      const size_t idx = field.cell_index(gx, gy);
      field.vectors[idx] = proj.pixel - p;
      field.valid[idx] = 1;
    }
  }
  return field;
}

FlowField noisy_oracle_flow(const FlowField& ground_truth, double noise_sigma,
                            const Vec2& bias, uint64_t seed) {
  FlowField out = ground_truth;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t i = 0; i < out.vectors.size(); ++i) {
    if (!out.valid[i]) continue;
    if (noise_sigma > 0.0) {
      out.vectors[i].x() += noise_sigma * gauss(rng);
      out.vectors[i].y() += noise_sigma * gauss(rng);
    }
    out.vectors[i] += bias;
  }
  // True RMS L2 error of this field against its source.
  out.sigma = std::max(kSigmaFloor,
                       std::sqrt(2.0 * noise_sigma * noise_sigma + bias.squaredNorm()));
  return out;
}

namespace {

struct Patch {
  std::vector<double> values;
  double mean = 0.0;
  double norm = 0.0;  // sqrt of centered sum of squares

  bool textured() const { return norm > 1e-9; }
};

bool extract_patch(const GrayImage& img, int cx, int cy, int half, Patch& out) {
  if (cx - half < 0 || cy - half < 0 || cx + half >= img.width || cy + half >= img.height) {
    return false;
  }
  const int n = (2 * half + 1) * (2 * half + 1);
  out.values.resize(n);
  double sum = 0.0;
  int k = 0;
  for (int y = cy - half; y <= cy + half; ++y) {
    for (int x = cx - half; x <= cx + half; ++x) {
      out.values[k] = img.at(x, y);
      sum += out.values[k];
      ++k;
    }
  }
  out.mean = sum / n;
  double ss = 0.0;
  for (double v : out.values) ss += (v - out.mean) * (v - out.mean);
  out.norm = std::sqrt(ss);
  return true;
}

double zncc(const Patch& a, const Patch& b) {
  double dot = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    dot += (a.values[i] - a.mean) * (b.values[i] - b.mean);
  }
  return dot / (a.norm * b.norm);
}

double parabola_offset(double s_minus, double s_0, double s_plus) {
  const double denom = s_minus - 2.0 * s_0 + s_plus;
  if (denom >= 0.0) return 0.0;  // not a concave peak
  return std::clamp(0.5 * (s_minus - s_plus) / denom, -0.5, 0.5);
}

}  // namespace

FlowField block_matching_flow(const PyramidImage& source, const PyramidImage& target,
                              const BlockMatchingParams& cfg) {
  if (cfg.patch_size % 2 == 0) {
    throw Error(ErrorKind::InvalidConfig, "block-matching patch size must be odd");
  }
  const GrayImage& full = source.levels[0];
  FlowField field(cfg.grid_width, cfg.grid_height, full.width, full.height);

  const int half = cfg.patch_size / 2;
  const size_t cells = field.vectors.size();
  std::vector<Vec2> estimate(cells, Vec2::Zero());  // full-resolution units
  std::vector<uint8_t> alive(cells, 1);
  std::vector<double> best_score(cells, -1.0);

  for (int level = source.num_levels() - 1; level >= 0; --level) {
    const GrayImage& src = source.levels[level];
    const GrayImage& tgt = target.levels[level];
    const double to_full = std::pow(2.0, level);

    for (size_t ci = 0; ci < cells; ++ci) {
      if (!alive[ci]) continue;
      const int gx = static_cast<int>(ci % cfg.grid_width);
      const int gy = static_cast<int>(ci / cfg.grid_width);
      const Vec2 c_level = pixel_to_level(field.cell_center(gx, gy), 0, level);
      const int sx = static_cast<int>(std::lround(c_level.x()));
      const int sy = static_cast<int>(std::lround(c_level.y()));

      Patch src_patch;
      if (!extract_patch(src, sx, sy, half, src_patch) || !src_patch.textured()) {
        alive[ci] = 0;
        continue;
      }

      const Vec2 guess = estimate[ci] / to_full;
      const int bx = sx + static_cast<int>(std::lround(guess.x()));
      const int by = sy + static_cast<int>(std::lround(guess.y()));

      double best = -2.0;
      int best_dx = 0, best_dy = 0;
      Patch tgt_patch;
      for (int dy = -cfg.search_radius; dy <= cfg.search_radius; ++dy) {
        for (int dx = -cfg.search_radius; dx <= cfg.search_radius; ++dx) {
          if (!extract_patch(tgt, bx + dx, by + dy, half, tgt_patch) || !tgt_patch.textured()) {
            continue;
          }
          const double score = zncc(src_patch, tgt_patch);
          if (score > best) {
            best = score;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      if (best < -1.5) {
        alive[ci] = 0;
        continue;
      }

      // Parabolic subpixel refinement per axis where neighbors exist.
      Vec2 refined(bx + best_dx - sx, by + best_dy - sy);
      Patch pm, pp;
      if (std::abs(best_dx) < cfg.search_radius &&
          extract_patch(tgt, bx + best_dx - 1, by + best_dy, half, pm) && pm.textured() &&
          extract_patch(tgt, bx + best_dx + 1, by + best_dy, half, pp) && pp.textured()) {
        refined.x() += parabola_offset(zncc(src_patch, pm), best, zncc(src_patch, pp));
      }
      if (std::abs(best_dy) < cfg.search_radius &&
          extract_patch(tgt, bx + best_dx, by + best_dy - 1, half, pm) && pm.textured() &&
          extract_patch(tgt, bx + best_dx, by + best_dy + 1, half, pp) && pp.textured()) {
        refined.y() += parabola_offset(zncc(src_patch, pm), best, zncc(src_patch, pp));
      }

      estimate[ci] = refined * to_full;
      best_score[ci] = best;
    }
  }

  for (size_t ci = 0; ci < cells; ++ci) {
    if (alive[ci] && best_score[ci] >= cfg.min_score) {
      field.vectors[ci] = estimate[ci];
      field.valid[ci] = 1;
    }
  }
  field.sigma = 1.0;  // nominal; callers calibrate via estimate_sigma when gt exists
  return field;
}

double estimate_sigma(const std::vector<std::pair<FlowField, FlowField>>& predicted_vs_gt) {
  double sum_sq = 0.0;
  long count = 0;
  for (const auto& [pred, gt] : predicted_vs_gt) {
    if (pred.grid_width != gt.grid_width || pred.grid_height != gt.grid_height) {
      throw Error(ErrorKind::InvalidConfig, "flow grids differ between prediction and gt");
    }
    for (size_t i = 0; i < pred.vectors.size(); ++i) {
      if (!pred.valid[i] || !gt.valid[i]) continue;
      sum_sq += (pred.vectors[i] - gt.vectors[i]).squaredNorm();
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorKind::EmptyCalibration, "no overlapping valid cells to calibrate sigma");
  }
  return std::max(kSigmaFloor, std::sqrt(sum_sq / count));
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_flow_file(const std::string& path, const FlowField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  out.write("FLW1", 4);
  write_raw<uint32_t>(out, static_cast<uint32_t>(field.grid_width));
  write_raw<uint32_t>(out, static_cast<uint32_t>(field.grid_height));
  write_raw<float>(out, static_cast<float>(field.sigma));
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    write_raw<float>(out, static_cast<float>(field.vectors[i].x()));
    write_raw<float>(out, static_cast<float>(field.vectors[i].y()));
    write_raw<uint8_t>(out, field.valid[i]);
  }
}

FlowField read_flow_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open flow file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FLW1", 4) != 0) {
    throw Error(ErrorKind::MalformedLine, "bad flow file magic in " + path);
  }
  const auto gw = read_raw<uint32_t>(in);
  const auto gh = read_raw<uint32_t>(in);
  const auto sigma = read_raw<float>(in);
  if (!in || gw < 8 || gh < 8 || gw > 1 << 20 || gh > 1 << 20) {
    throw Error(ErrorKind::MalformedLine, "bad flow grid header in " + path);
  }
  FlowField field(static_cast<int>(gw), static_cast<int>(gh), 0, 0);
  field.sigma = sigma;
  for (size_t i = 0; i < field.vectors.size(); ++i) {
    field.vectors[i].x() = read_raw<float>(in);
    field.vectors[i].y() = read_raw<float>(in);
    field.valid[i] = read_raw<uint8_t>(in);
  }
  if (!in) throw Error(ErrorKind::MalformedLine, "truncated flow file: " + path);
  return field;
}

void FlowCache::put(int source_frame_id, int target_frame_id, FlowField field) {
  field.source_frame_id = source_frame_id;
  field.target_frame_id = target_frame_id;
  std::lock_guard<std::mutex> lock(mutex_);
  fields_[{source_frame_id, target_frame_id}] = std::move(field);
}

std::optional<FlowField> FlowCache::get(int source_frame_id, int target_frame_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = fields_.find({source_frame_id, target_frame_id});
  if (it == fields_.end()) return std::nullopt;
  return it->second;
}

int FlowCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return static_cast<int>(fields_.size());
}

void write_flow_csv(const std::string& path, const FlowField& field) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);
  std::fprintf(f, "# sigma=%.9g grid=%dx%d image=%dx%d\n", field.sigma, field.grid_width,
               field.grid_height, field.image_width, field.image_height);
  std::fprintf(f, "gx,gy,flow_x,flow_y,valid\n");
  for (int gy = 0; gy < field.grid_height; ++gy) {
    for (int gx = 0; gx < field.grid_width; ++gx) {
      const size_t i = field.cell_index(gx, gy);
      std::fprintf(f, "%d,%d,%.9g,%.9g,%d\n", gx, gy, field.vectors[i].x(),
                   field.vectors[i].y(), field.valid[i] ? 1 : 0);
    }
  }
  std::fclose(f);
}

}  // namespace flownorm
