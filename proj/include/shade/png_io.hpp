#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "shade/error.hpp"
#include "shade/image.hpp"

namespace shade::png {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;  // 8-bit samples, interleaved
};

// Decodes any PNG into 8-bit gray or RGB samples (alpha dropped, 16-bit
// stripped, palettes expanded).
inline Decoded decode(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  require(file != nullptr, "io", "cannot open " + path);
  png_byte sig[8];
  require(std::fread(sig, 1, 8, file.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, "format", path + " is not a PNG");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("format", "corrupt PNG " + path);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.data.resize(stride * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline void encode(const std::string& path, int width, int height, int color_type, int depth,
                   const std::vector<std::uint8_t>& bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  require(file != nullptr, "io", "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("io", "PNG encoding failed for " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / height;
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline RgbImage read_rgb(const std::string& path) {
  auto d = detail::decode(path);
  RgbImage img(d.width, d.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (d.channels >= 3)
      img.pixels[i] = {d.data[i * d.channels], d.data[i * d.channels + 1], d.data[i * d.channels + 2]};
    else
      img.pixels[i] = {d.data[i * d.channels], d.data[i * d.channels], d.data[i * d.channels]};
  }
  return img;
}

/// Reads a binary image; a pixel is set when its first channel exceeds 127.
inline Mask read_mask(const std::string& path) {
  auto d = detail::decode(path);
  Mask m(d.width, d.height);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = d.data[i * d.channels] > 127 ? 1 : 0;
  return m;
}

/// Reads a 16-bit (or 8-bit, rescaled) grayscale PNG as values in [0, 1].
inline FloatMap read_unit_gray(const std::string& path) {
  detail::FilePtr file(std::fopen(path.c_str(), "rb"));
  require(file != nullptr, "io", "cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("format", "corrupt PNG " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  FloatMap out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(x) * channels;
      if (out_depth == 16) {
        const std::uint8_t* p = data.data() + y * stride + 2 * i;
        out(x, y) = (p[0] | (p[1] << 8)) / 65535.0;
      } else {
        out(x, y) = data[y * stride + i] / 255.0;
      }
    }
  return out;
}

inline void write_rgb(const std::string& path, const RgbImage& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(img.pixels.size() * 3);
  for (const auto& p : img.pixels) {
    bytes.push_back(p.r);
    bytes.push_back(p.g);
    bytes.push_back(p.b);
  }
  detail::encode(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

/// Writes a binary map as 0/255.
inline void write_mask(const std::string& path, const Mask& m) {
  std::vector<std::uint8_t> bytes(m.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = m.pixels[i] ? 255 : 0;
  detail::encode(path, m.width, m.height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

/// Writes 16-bit grayscale, big-endian per the PNG format.
inline void write_gray16(const std::string& path, const Raster<std::uint16_t>& m) {
  std::vector<std::uint8_t> bytes(m.pixels.size() * 2);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(m.pixels[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(m.pixels[i] & 0xff);
  }
  detail::encode(path, m.width, m.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

/// Values in [0, 1] (clamped) scaled by 65535 and rounded.
inline void write_unit16(const std::string& path, const FloatMap& m) {
  Raster<std::uint16_t> q(m.width, m.height);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) {
    const double v = std::clamp(m.pixels[i], 0.0, 1.0);
    q.pixels[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_gray16(path, q);
}

}  // namespace shade::png
