#include "flownorm/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace flownorm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngRead {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWrite {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() { png_destroy_write_struct(&png, &info); }
};

// Reads any PNG as 16-bit gray rows (RGB converted via Rec.601) together
// with the source bit depth, so callers can pick their own scaling.
void read_png_gray16(const std::string& path, int& width, int& height,
                     int& src_bit_depth, std::vector<uint16_t>& out) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::MissingFile, "cannot open PNG: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw Error(ErrorKind::MalformedLine, "not a PNG file: " + path);
  }

  PngRead ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png))) {
    throw Error(ErrorKind::MalformedLine, "PNG decode failed: " + path);
  }
  png_init_io(ctx.png, file.get());
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  width = png_get_image_width(ctx.png, ctx.info);
  height = png_get_image_height(ctx.png, ctx.info);
  src_bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && src_bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  png_set_strip_alpha(ctx.png);
  if (src_bit_depth == 16) png_set_swap(ctx.png);  // PNG is big-endian on disk
  png_read_update_info(ctx.png, ctx.info);

  const int channels = png_get_channels(ctx.png, ctx.info);
  const int depth = png_get_bit_depth(ctx.png, ctx.info);
  const size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);

  std::vector<png_byte> rowbuf(rowbytes);
  out.assign(static_cast<size_t>(width) * height, 0);
  for (int y = 0; y < height; ++y) {
    png_read_row(ctx.png, rowbuf.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      double v;
      if (depth == 16) {
        const uint16_t* row16 = reinterpret_cast<const uint16_t*>(rowbuf.data());
        if (channels >= 3) {
          v = rec601_gray(row16[x * channels], row16[x * channels + 1], row16[x * channels + 2]);
        } else {
          v = row16[x * channels];
        }
      } else {
        if (channels >= 3) {
          v = rec601_gray(rowbuf[x * channels], rowbuf[x * channels + 1], rowbuf[x * channels + 2]);
        } else {
          v = rowbuf[x * channels];
        }
      }
      out[static_cast<size_t>(y) * width + x] = static_cast<uint16_t>(std::lround(v));
    }
  }
  png_read_end(ctx.png, nullptr);
}

void write_png16_or_8(const std::string& path, int width, int height, int bit_depth,
                      const std::vector<uint16_t>& values) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorKind::MissingFile, "cannot open for write: " + path);

  PngWrite ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png))) {
    throw Error(ErrorKind::Internal, "PNG encode failed: " + path);
  }
  png_init_io(ctx.png, file.get());
  png_set_IHDR(ctx.png, ctx.info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  if (bit_depth == 16) {
    std::vector<png_byte> row(static_cast<size_t>(width) * 2);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const uint16_t v = values[static_cast<size_t>(y) * width + x];
        row[x * 2] = static_cast<png_byte>(v >> 8);
        row[x * 2 + 1] = static_cast<png_byte>(v & 0xff);
      }
      png_write_row(ctx.png, row.data());
    }
  } else {
    std::vector<png_byte> row(width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        row[x] = static_cast<png_byte>(values[static_cast<size_t>(y) * width + x]);
      }
      png_write_row(ctx.png, row.data());
    }
  }
  png_write_end(ctx.png, nullptr);
}

}  // namespace

GrayImage read_gray_png(const std::string& path) {
  int w, h, depth;
  std::vector<uint16_t> raw;
  read_png_gray16(path, w, h, depth, raw);
  GrayImage img(w, h);
  const double scale = depth == 16 ? 255.0 / 65535.0 : 1.0;
  for (size_t i = 0; i < raw.size(); ++i) img.values[i] = raw[i] * scale;
  return img;
}

GrayImage read_depth_png(const std::string& path, double units_per_meter) {
  int w, h, depth;
  std::vector<uint16_t> raw;
  read_png_gray16(path, w, h, depth, raw);
  GrayImage img(w, h);
  for (size_t i = 0; i < raw.size(); ++i) img.values[i] = raw[i] / units_per_meter;
  return img;
}

void write_gray_png(const std::string& path, const GrayImage& img) {
  std::vector<uint16_t> raw(img.values.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<uint16_t>(std::clamp(std::lround(img.values[i]), 0l, 255l));
  }
  write_png16_or_8(path, img.width, img.height, 8, raw);
}

void write_depth_png(const std::string& path, const GrayImage& depth, double units_per_meter) {
  std::vector<uint16_t> raw(depth.values.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<uint16_t>(std::clamp(std::lround(depth.values[i] * units_per_meter), 0l, 65535l));
  }
  write_png16_or_8(path, depth.width, depth.height, 16, raw);
}

}  // namespace flownorm
