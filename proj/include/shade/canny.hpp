#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "shade/color.hpp"
#include "shade/error.hpp"
#include "shade/image.hpp"

namespace shade {

struct CannyParams {
  double sigma = 1.4;
  /// Hysteresis thresholds as fractions of the maximum gradient magnitude.
  double low = 0.1;
  double high = 0.2;

  void validate() const {
    require(sigma > 0.0, "config", "canny sigma must be > 0");
    require(low > 0.0 && low < high && high <= 1.0, "config", "canny thresholds need 0 < low < high <= 1");
  }
};

namespace detail {

inline FloatMap gaussian_blur(const FloatMap& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= sum;

  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
  FloatMap tmp(in.width, in.height), out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in(clampi(x + i, 0, in.width - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(x, clampi(y + i, 0, in.height - 1));
      out(x, y) = acc;
    }
  return out;
}

}  // namespace detail

inline FloatMap to_gray(const RgbImage& img) {
  FloatMap g(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) g.pixels[i] = luminance(img.pixels[i]);
  return g;
}

/// Canny edge detector: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression along the (interpolated) gradient direction, then 8-connected
/// hysteresis. The outermost pixel ring is never marked.
inline EdgeMap canny(const RgbImage& image, const CannyParams& params = {}) {
  params.validate();
  const int w = image.width, h = image.height;
  EdgeMap edges(w, h);
  if (w < 3 || h < 3) return edges;

  const FloatMap smooth = detail::gaussian_blur(to_gray(image), params.sigma);
  FloatMap gx(w, h), gy(w, h), mag(w, h);
  double max_mag = 0.0;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double dx = (smooth(x + 1, y - 1) + 2 * smooth(x + 1, y) + smooth(x + 1, y + 1)) -
                        (smooth(x - 1, y - 1) + 2 * smooth(x - 1, y) + smooth(x - 1, y + 1));
      const double dy = (smooth(x - 1, y + 1) + 2 * smooth(x, y + 1) + smooth(x + 1, y + 1)) -
                        (smooth(x - 1, y - 1) + 2 * smooth(x, y - 1) + smooth(x + 1, y - 1));
      gx(x, y) = dx;
      gy(x, y) = dy;
      mag(x, y) = std::hypot(dx, dy);
      max_mag = std::max(max_mag, mag(x, y));
    }
  // A constant image has only roundoff gradients.
  if (max_mag < 1e-6) return edges;

  // Suppression compares against the magnitude linearly interpolated one
  // pixel along the gradient direction on each side. A pixel survives when
  // it is strictly above the "before" side and not below the "after" side,
  // so a symmetric ridge straddling two pixels stays one pixel wide.
  auto sample = [&](double fx, double fy) {
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0, ty = fy - y0;
    auto at = [&](int x, int y) { return mag(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    return (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x0 + 1, y0)) +
           ty * ((1 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1));
  };
  FloatMap nms(w, h);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double m = mag(x, y);
      if (m <= 0.0) continue;
      const double ux = gx(x, y) / m, uy = gy(x, y) / m;
      const double before = sample(x - ux, y - uy), after = sample(x + ux, y + uy);
      if (m > before && m >= after) nms(x, y) = m;
    }

  const double hi = params.high * max_mag, lo = params.low * max_mag;
  std::vector<int> stack;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x)
      if (nms(x, y) >= hi && !edges(x, y)) {
        edges(x, y) = 1;
        stack.push_back(y * w + x);
        while (!stack.empty()) {
          const int p = stack.back();
          stack.pop_back();
          const int px = p % w, py = p / w;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int qx = px + dx, qy = py + dy;
              if (qx < 1 || qy < 1 || qx >= w - 1 || qy >= h - 1 || edges(qx, qy)) continue;
              if (nms(qx, qy) >= lo) {
                edges(qx, qy) = 1;
                stack.push_back(qy * w + qx);
              }
            }
        }
      }
  return edges;
}

}  // namespace shade
