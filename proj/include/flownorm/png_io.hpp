#pragma once

#include <string>

#include "flownorm/image.hpp"

namespace flownorm {

inline constexpr double kTumDepthScale = 5000.0;  // 16-bit units per meter

// 8-bit grayscale or RGB(A) PNG -> GrayImage in [0,255]; RGB is converted
// with Rec.601 luma weights. 16-bit input is scaled down to [0,255].
GrayImage read_gray_png(const std::string& path);

// 16-bit PNG depth map -> meters (value / units_per_meter); 0 stays 0,
// meaning "no depth".
GrayImage read_depth_png(const std::string& path, double units_per_meter = kTumDepthScale);

// Rounds to the nearest 8-bit value, clamping to [0,255].
void write_gray_png(const std::string& path, const GrayImage& img);

// Meters -> 16-bit units, clamped to [0, 65535].
void write_depth_png(const std::string& path, const GrayImage& depth,
                     double units_per_meter = kTumDepthScale);

}  // namespace flownorm
