#pragma once

#include <optional>
#include <vector>

#include "flownorm/types.hpp"

namespace flownorm {

// Row-major single-channel image, intensities nominally in [0, 255].
// Also reused for depth maps (meters, 0 = no depth).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

struct Sample {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  // derivative of the bilinear surface
};

// Bilinear sample at subpixel position p. The gradient is the derivative of
// the interpolated surface itself, so it is consistent with the sampled
// value (finite differences of the sample reproduce it inside a cell).
// Valid region is [1, width-2] x [1, height-2].
std::optional<Sample> sample_bilinear(const GrayImage& img, const Vec2& p);

struct PyramidImage {
  std::vector<GrayImage> levels;   // level 0 finest
  std::vector<GrayImage> grad_x;   // central differences, per level
  std::vector<GrayImage> grad_y;
  std::vector<GrayImage> grad_mag;

  int num_levels() const { return static_cast<int>(levels.size()); }
};

inline constexpr int kDefaultPyramidLevels = 4;

// Level k+1 is the 2x2 box-filter downsample of level k (odd trailing
// row/column dropped). Throws TooSmallImage if the image cannot support
// the requested level count.
PyramidImage build_pyramid(const GrayImage& img, int levels = kDefaultPyramidLevels);

// Pixel-center-preserving coordinate changes between pyramid levels.
inline Vec2 pixel_to_level(const Vec2& p, int from_level, int to_level) {
  const double scale = std::pow(2.0, from_level - to_level);
  return Vec2((p.x() + 0.5) * scale - 0.5, (p.y() + 0.5) * scale - 0.5);
}

double rec601_gray(double r, double g, double b);

}  // namespace flownorm
