#pragma once

#include <algorithm>
#include <vector>

#include "shade/dataprep.hpp"
#include "shade/image.hpp"
#include "shade/strcnn.hpp"

namespace shade {

/// Fused shadow-edge probabilities. Only Canny pixels receive votes.
struct EdgeProbabilityMap {
  FloatMap probability;
  Raster<int> votes;

  int width() const { return probability.width; }
  int height() const { return probability.height; }
};

/// Runs the model on every Canny pixel that admits a full patch and averages,
/// per Canny pixel, the cell probabilities of every patch whose label window
/// covers it. Accumulation follows row-major centre order.
inline EdgeProbabilityMap predict_structured(const cnn::CnnModel& model, const RgbImage& image,
                                             const EdgeMap& canny_edges) {
  require_same_size(image, canny_edges, "predict_structured");
  model.validate();
  const int w = image.width, h = image.height;
  EdgeProbabilityMap out{FloatMap(w, h), Raster<int>(w, h)};
  FloatMap sum(w, h);
  const int half = model.label_size / 2;
  for (int cy = 0; cy < h; ++cy)
    for (int cx = 0; cx < w; ++cx) {
      if (!canny_edges(cx, cy) || !valid_center(cx, cy, w, h)) continue;
      Tensor patch = extract_patch(image, cx, cy);
      normalize_patch(patch, model.norm);
      const auto p = cnn::forward(model, patch);
      for (int j = 0; j < model.label_size; ++j)
        for (int i = 0; i < model.label_size; ++i) {
          const int qx = cx - half + i, qy = cy - half + j;
          if (!canny_edges(qx, qy)) continue;
          sum(qx, qy) += p[static_cast<std::size_t>(j * model.label_size + i)];
          out.votes(qx, qy) += 1;
        }
    }
  for (std::size_t i = 0; i < sum.pixels.size(); ++i)
    if (out.votes.pixels[i] > 0) out.probability.pixels[i] = sum.pixels[i] / out.votes.pixels[i];
  return out;
}

/// Marks voted pixels whose probability reaches t (t clamped to [0, 1]).
inline EdgeMap threshold_edges(const EdgeProbabilityMap& map, double t) {
  t = std::clamp(t, 0.0, 1.0);
  EdgeMap e(map.width(), map.height());
  for (std::size_t i = 0; i < e.pixels.size(); ++i)
    e.pixels[i] = map.votes.pixels[i] >= 1 && map.probability.pixels[i] >= t;
  return e;
}

/// Number of set pixels with no set 8-neighbour.
inline std::size_t count_isolated_pixels(const EdgeMap& e) {
  std::size_t n = 0;
  for (int y = 0; y < e.height; ++y)
    for (int x = 0; x < e.width; ++x) {
      if (!e(x, y)) continue;
      bool alone = true;
      for (int dy = -1; dy <= 1 && alone; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if ((dx || dy) && e.inside(x + dx, y + dy) && e(x + dx, y + dy)) {
            alone = false;
            break;
          }
      n += alone;
    }
  return n;
}

}  // namespace shade
