#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "anchorreg/errors.hpp"

namespace anchorreg {

// Interleaved 8-bit image, row-major, origin top-left.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c = 3)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Single-channel float image; depth maps store metres with 0 = invalid.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Center-aligned bilinear resampling (destination pixel centers map to
// source coordinates, matching Intrinsics::scaled).
inline ImageU8 resize_bilinear(const ImageU8& src, int w, int h) {
  if (src.width < 1 || src.height < 1) throw DegenerateInput("resize_bilinear: empty image");
  ImageU8 dst(w, h, src.channels);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
        const double bot = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
        const double v = (1.0 - wy) * top + wy * bot;
        dst.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return dst;
}

// Nearest-neighbour resampling; keeps invalid (zero) depth pixels sharp.
inline ImageF resize_nearest(const ImageF& src, int w, int h) {
  if (src.width < 1 || src.height < 1) throw DegenerateInput("resize_nearest: empty image");
  ImageF dst(w, h);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const int ys = std::clamp(static_cast<int>(std::floor((y + 0.5) * sy)), 0, src.height - 1);
    for (int x = 0; x < w; ++x) {
      const int xs = std::clamp(static_cast<int>(std::floor((x + 0.5) * sx)), 0, src.width - 1);
      dst.at(x, y) = src.at(xs, ys);
    }
  }
  return dst;
}

inline double luminance(const ImageU8& img, int x, int y) {
  if (img.channels == 1) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

namespace detail {

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  explicit PngReader(const std::string& path) {
    fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open PNG for reading: " + path);
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      close();
      throw IoError("libpng allocation failed for " + path);
    }
  }
  void close() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
    png = nullptr;
    info = nullptr;
    fp = nullptr;
  }
  ~PngReader() { close(); }
};

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  explicit PngWriter(const std::string& path) {
    fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open PNG for writing: " + path);
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      close();
      throw IoError("libpng allocation failed for " + path);
    }
  }
  void close() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
    png = nullptr;
    info = nullptr;
    fp = nullptr;
  }
  ~PngWriter() { close(); }
};

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

}  // namespace detail

inline ImageU8 read_png_rgb8(const std::string& path) {
  detail::PngReader r(path);
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png))) {
    throw IoError("libpng failed while reading " + path);
  }
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (bit_depth == 16) png_set_strip_16(r.png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(r.png);
  }
  png_read_update_info(r.png, r.info);
  img = ImageU8(static_cast<int>(w), static_cast<int>(h), 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * 3;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

inline void write_png_rgb8(const std::string& path, const ImageU8& img) {
  if (img.channels != 3 || img.width < 1 || img.height < 1) {
    throw DegenerateInput("write_png_rgb8: expected a non-empty 3-channel image");
  }
  detail::PngWriter w(path);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
        img.data.data() + static_cast<std::size_t>(y) * img.width * 3);
  }
  if (setjmp(png_jmpbuf(w.png))) {
    throw IoError("libpng failed while writing " + path);
  }
  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

// 16-bit grayscale depth PNG; pixel value = metres * depth_scale, rounded.
inline ImageF read_png_depth16(const std::string& path, double depth_scale) {
  if (depth_scale <= 0.0) throw DegenerateInput("read_png_depth16: depth_scale must be positive");
  detail::PngReader r(path);
  std::vector<std::uint16_t> raw;
  std::vector<png_bytep> rows;
  ImageF img;
  if (setjmp(png_jmpbuf(r.png))) {
    throw IoError("libpng failed while reading " + path);
  }
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError("depth PNG must be 16-bit grayscale: " + path);
  }
  if (detail::host_is_little_endian()) png_set_swap(r.png);
  png_read_update_info(r.png, r.info);
  raw.resize(static_cast<std::size_t>(w) * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * w);
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  img = ImageF(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.data[i] = static_cast<float>(raw[i] / depth_scale);
  }
  return img;
}

inline void write_png_depth16(const std::string& path, const ImageF& img, double depth_scale) {
  if (img.width < 1 || img.height < 1) throw DegenerateInput("write_png_depth16: empty image");
  if (depth_scale <= 0.0) throw DegenerateInput("write_png_depth16: depth_scale must be positive");
  std::vector<std::uint16_t> raw(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::lround(static_cast<double>(img.data[i]) * depth_scale);
    raw[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  detail::PngWriter w(path);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * img.width);
  }
  if (setjmp(png_jmpbuf(w.png))) {
    throw IoError("libpng failed while writing " + path);
  }
  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (detail::host_is_little_endian()) png_set_swap(w.png);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

}  // namespace anchorreg
