#include "flownorm/image.hpp"

#include <cmath>

namespace flownorm {

std::optional<Sample> sample_bilinear(const GrayImage& img, const Vec2& p) {
  if (!(p.x() >= 1.0 && p.x() <= img.width - 2.0 && p.y() >= 1.0 &&
        p.y() <= img.height - 2.0)) {
    return std::nullopt;
  }
  const int x0 = static_cast<int>(std::floor(p.x()));
  const int y0 = static_cast<int>(std::floor(p.y()));
  const double fx = p.x() - x0;
  const double fy = p.y() - y0;

  const double i00 = img.at(x0, y0);
  const double i10 = img.at(x0 + 1, y0);
  const double i01 = img.at(x0, y0 + 1);
  const double i11 = img.at(x0 + 1, y0 + 1);

  Sample s;
  s.value = (1.0 - fx) * (1.0 - fy) * i00 + fx * (1.0 - fy) * i10 +
            (1.0 - fx) * fy * i01 + fx * fy * i11;
  s.gradient.x() = (1.0 - fy) * (i10 - i00) + fy * (i11 - i01);
  s.gradient.y() = (1.0 - fx) * (i01 - i00) + fx * (i11 - i10);
  return s;
}

namespace {

GrayImage downsample2x(const GrayImage& in) {
  GrayImage out(in.width / 2, in.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = 0.25 * (in.at(2 * x, 2 * y) + in.at(2 * x + 1, 2 * y) +
                             in.at(2 * x, 2 * y + 1) + in.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

}  // namespace

PyramidImage build_pyramid(const GrayImage& img, int levels) {
  if (levels < 1) throw Error(ErrorKind::InvalidConfig, "pyramid needs >= 1 level");
  const int min_dim = 1 << (levels - 1);
  if (img.width < min_dim || img.height < min_dim) {
    throw Error(ErrorKind::TooSmallImage,
                "image too small for " + std::to_string(levels) + " pyramid levels");
  }

  PyramidImage pyr;
  pyr.levels.reserve(levels);
  pyr.levels.push_back(img);
  for (int l = 1; l < levels; ++l) pyr.levels.push_back(downsample2x(pyr.levels[l - 1]));

  for (const GrayImage& level : pyr.levels) {
    GrayImage gx(level.width, level.height);
    GrayImage gy(level.width, level.height);
    GrayImage gm(level.width, level.height);
    for (int y = 1; y + 1 < level.height; ++y) {
      for (int x = 1; x + 1 < level.width; ++x) {
        const double dx = 0.5 * (level.at(x + 1, y) - level.at(x - 1, y));
        const double dy = 0.5 * (level.at(x, y + 1) - level.at(x, y - 1));
        gx.at(x, y) = dx;
        gy.at(x, y) = dy;
        gm.at(x, y) = std::sqrt(dx * dx + dy * dy);
      }
    }
    pyr.grad_x.push_back(std::move(gx));
    pyr.grad_y.push_back(std::move(gy));
    pyr.grad_mag.push_back(std::move(gm));
  }
  return pyr;
}

double rec601_gray(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace flownorm
