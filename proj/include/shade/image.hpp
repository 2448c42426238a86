#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shade/error.hpp"

namespace shade {

/// Single-channel raster, row-major.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Raster() = default;
  Raster(int w, int h, T fill = T{}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  T& operator()(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Binary per-pixel flags (Canny output, shadow-edge groundtruth, masks).
using EdgeMap = Raster<std::uint8_t>;
using Mask = Raster<std::uint8_t>;
using LabelMap = Raster<int>;
using FloatMap = Raster<double>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB image, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  Rgb& operator()(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& operator()(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  require(a.width == b.width && a.height == b.height, "size_mismatch",
          std::string(what) + ": " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
              std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline std::size_t count_set(const EdgeMap& e) {
  std::size_t n = 0;
  for (auto v : e.pixels) n += v != 0;
  return n;
}

}  // namespace shade
