#pragma once

// Nearly regular superpixels: grid-seeded k-means in (Lab, x, y) followed by
// connectivity enforcement, plus the shadow/bright boundary classification
// of superpixels lying on detected shadow edges.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "shade/color.hpp"
#include "shade/error.hpp"
#include "shade/image.hpp"

namespace shade {

struct SuperpixelSegmentation {
  LabelMap labels;
  int count = 0;
  std::vector<Lab> mean_lab;
  std::vector<std::array<double, 2>> centroid;  // x, y
  std::vector<int> area;
  /// Sorted neighbour ids per superpixel (4-adjacency of pixels).
  std::vector<std::vector<int>> neighbors;

  int width() const { return labels.width; }
  int height() const { return labels.height; }

  /// Unordered adjacent pairs (i < j), sorted.
  std::vector<std::pair<int, int>> adjacent_pairs() const {
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < count; ++i)
      for (int j : neighbors[i])
        if (i < j) pairs.emplace_back(i, j);
    return pairs;
  }
};

/// Statistics and adjacency for a given label map. Ids must be 0..N-1.
inline SuperpixelSegmentation make_segmentation(const RgbImage& image, LabelMap labels) {
  require_same_size(image, labels, "make_segmentation");
  SuperpixelSegmentation seg;
  int n = 0;
  for (int v : labels.pixels) {
    require(v >= 0, "labels", "negative superpixel id");
    n = std::max(n, v + 1);
  }
  seg.count = n;
  seg.mean_lab.assign(n, Lab{0, 0, 0});
  seg.centroid.assign(n, {0.0, 0.0});
  seg.area.assign(n, 0);
  std::vector<std::set<int>> adj(n);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const int l = labels(x, y);
      const Lab c = srgb_to_lab(image(x, y));
      for (int k = 0; k < 3; ++k) seg.mean_lab[l][k] += c[k];
      seg.centroid[l][0] += x;
      seg.centroid[l][1] += y;
      seg.area[l] += 1;
      if (x + 1 < labels.width && labels(x + 1, y) != l) {
        adj[l].insert(labels(x + 1, y));
        adj[labels(x + 1, y)].insert(l);
      }
      if (y + 1 < labels.height && labels(x, y + 1) != l) {
        adj[l].insert(labels(x, y + 1));
        adj[labels(x, y + 1)].insert(l);
      }
    }
  for (int i = 0; i < n; ++i) {
    require(seg.area[i] > 0, "labels", "superpixel id " + std::to_string(i) + " is empty");
    for (auto& v : seg.mean_lab[i]) v /= seg.area[i];
    seg.centroid[i][0] /= seg.area[i];
    seg.centroid[i][1] /= seg.area[i];
    seg.neighbors.emplace_back(adj[i].begin(), adj[i].end());
  }
  seg.labels = std::move(labels);
  return seg;
}

struct SegmentParams {
  int region_size = 14;
  double compactness = 10.0;
  int iterations = 10;

  void validate() const {
    require(region_size >= 4, "config", "region_size must be >= 4");
    require(compactness > 0.0, "config", "compactness must be > 0");
    require(iterations >= 1, "config", "slic_iterations must be >= 1");
  }
};

namespace detail {

// Relabels so that every superpixel is 4-connected: each label keeps its
// largest component, every other component joins the largest adjacent
// superpixel (by current pixel count). Ids come out contiguous, ordered by
// their old id.
inline LabelMap enforce_connectivity(const LabelMap& in) {
  const int w = in.width, h = in.height;
  Raster<int> comp(w, h, -1);
  std::vector<int> comp_label, comp_size;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (comp(x, y) >= 0) continue;
      const int id = static_cast<int>(comp_label.size());
      const int l = in(x, y);
      comp_label.push_back(l);
      comp_size.push_back(0);
      comp(x, y) = id;
      stack.push_back(y * w + x);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++comp_size[id];
        const int px = p % w, py = p / w;
        const int nx[] = {px + 1, px - 1, px, px}, ny[] = {py, py, py + 1, py - 1};
        for (int k = 0; k < 4; ++k)
          if (in.inside(nx[k], ny[k]) && comp(nx[k], ny[k]) < 0 && in(nx[k], ny[k]) == l) {
            comp(nx[k], ny[k]) = id;
            stack.push_back(ny[k] * w + nx[k]);
          }
      }
    }
  const int ncomp = static_cast<int>(comp_label.size());
  std::map<int, int> main_comp;  // label -> its largest component
  for (int c = 0; c < ncomp; ++c) {
    auto it = main_comp.find(comp_label[c]);
    if (it == main_comp.end() || comp_size[c] > comp_size[it->second]) main_comp[comp_label[c]] = c;
  }
  std::vector<std::set<int>> comp_adj(ncomp);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w && comp(x + 1, y) != comp(x, y)) {
        comp_adj[comp(x, y)].insert(comp(x + 1, y));
        comp_adj[comp(x + 1, y)].insert(comp(x, y));
      }
      if (y + 1 < h && comp(x, y + 1) != comp(x, y)) {
        comp_adj[comp(x, y)].insert(comp(x, y + 1));
        comp_adj[comp(x, y + 1)].insert(comp(x, y));
      }
    }

  std::vector<int> final_label(ncomp, -1);
  std::map<int, int> label_size;
  for (auto [l, c] : main_comp) {
    final_label[c] = l;
    label_size[l] = comp_size[c];
  }
  // Orphans attach only to components whose final label is settled, so the
  // merged region stays connected. Repeat until every orphan is placed.
  bool pending = true;
  while (pending) {
    pending = false;
    for (int c = 0; c < ncomp; ++c) {
      if (final_label[c] >= 0) continue;
      int best = -1;
      for (int nb : comp_adj[c]) {
        const int l = final_label[nb];
        if (l < 0) continue;
        if (best < 0 || label_size[l] > label_size[best] || (label_size[l] == label_size[best] && l < best)) best = l;
      }
      if (best < 0) {
        pending = true;
        continue;
      }
      final_label[c] = best;
      label_size[best] += comp_size[c];
    }
  }
  std::map<int, int> remap;
  for (auto& [l, size] : label_size) remap.emplace(l, static_cast<int>(remap.size()));
  LabelMap out(w, h);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = remap[final_label[comp.pixels[i]]];
  return out;
}

}  // namespace detail

/// Grid-seeded (Lab, position) clustering. Distance is
/// sqrt(d_lab^2 + (d_xy / S)^2 * m^2) with S = region_size, m = compactness;
/// each centre searches a 2S x 2S window.
inline SuperpixelSegmentation segment(const RgbImage& image, const SegmentParams& params = {}) {
  params.validate();
  const int w = image.width, h = image.height;
  require(w > 0 && h > 0, "size", "cannot segment an empty image");
  const int S = params.region_size;
  std::vector<Lab> lab(image.pixels.size());
  for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = srgb_to_lab(image.pixels[i]);

  const int nx = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) / S)));
  const int ny = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) / S)));
  struct Center {
    Lab c;
    double x, y;
  };
  std::vector<Center> centers;
  auto grad = [&](int x, int y) {
    if (x < 1 || y < 1 || x >= w - 1 || y >= h - 1) return std::numeric_limits<double>::infinity();
    return std::pow(lab_distance(lab[y * w + x + 1], lab[y * w + x - 1]), 2) +
           std::pow(lab_distance(lab[(y + 1) * w + x], lab[(y - 1) * w + x]), 2);
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int sx = std::min(w - 1, static_cast<int>((i + 0.5) * w / nx));
      int sy = std::min(h - 1, static_cast<int>((j + 0.5) * h / ny));
      // Move the seed to the lowest-gradient pixel of its 3x3 neighbourhood.
      int bx = sx, by = sy;
      double bg = grad(sx, sy);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (grad(sx + dx, sy + dy) < bg) {
            bg = grad(sx + dx, sy + dy);
            bx = sx + dx;
            by = sy + dy;
          }
      centers.push_back({lab[by * w + bx], static_cast<double>(bx), static_cast<double>(by)});
    }

  const double spatial = (params.compactness / S) * (params.compactness / S);
  LabelMap labels(w, h, -1);
  std::vector<double> dist(image.pixels.size());
  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.pixels.begin(), labels.pixels.end(), -1);
    for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
      const auto& c = centers[k];
      const int x0 = std::max(0, static_cast<int>(c.x) - S), x1 = std::min(w - 1, static_cast<int>(c.x) + S);
      const int y0 = std::max(0, static_cast<int>(c.y) - S), y1 = std::min(h - 1, static_cast<int>(c.y) + S);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double dc = lab_distance(lab[y * w + x], c.c);
          const double dx = x - c.x, dy = y - c.y;
          const double d = dc * dc + (dx * dx + dy * dy) * spatial;
          if (d < dist[y * w + x]) {
            dist[y * w + x] = d;
            labels(x, y) = k;
          }
        }
    }
    // Pixels outside every window go to the spatially nearest centre.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (labels(x, y) >= 0) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
          const double d = std::hypot(x - centers[k].x, y - centers[k].y);
          if (d < best) {
            best = d;
            labels(x, y) = k;
          }
        }
      }
    std::vector<std::array<double, 6>> acc(centers.size(), {0, 0, 0, 0, 0, 0});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        auto& a = acc[labels(x, y)];
        const Lab& c = lab[y * w + x];
        a[0] += c[0], a[1] += c[1], a[2] += c[2], a[3] += x, a[4] += y, a[5] += 1;
      }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (acc[k][5] == 0) continue;
      centers[k] = {{acc[k][0] / acc[k][5], acc[k][1] / acc[k][5], acc[k][2] / acc[k][5]},
                    acc[k][3] / acc[k][5],
                    acc[k][4] / acc[k][5]};
    }
  }
  return make_segmentation(image, detail::enforce_connectivity(labels));
}

struct BoundarySets {
  std::vector<int> shd;
  std::vector<int> lit;
  std::vector<int> ambiguous;
};

struct BoundaryParams {
  /// A superpixel is on a shadow edge when at least
  /// max(min_pixels, min_fraction * area) edge pixels lie inside it or on
  /// its outer 8-neighbour ring.
  int min_pixels = 10;
  double min_fraction = 0.02;
  /// Two adjacent superpixels face each other across the edge when at least
  /// this fraction of their common border pixel pairs touch the edge.
  double shared_fraction = 0.5;
  int min_shared_pairs = 3;
};

/// Splits superpixels on shadow edges into shadow-side (darker than every
/// superpixel facing it across the edge), bright-side (brighter than every
/// one) and ambiguous. Lightness is the mean Lab L.
inline BoundarySets classify_boundaries(const SuperpixelSegmentation& seg, const EdgeMap& shadow_edges,
                                        const BoundaryParams& params = {}) {
  require_same_size(seg.labels, shadow_edges, "classify_boundaries");
  const int w = seg.width(), h = seg.height();
  const auto& L = seg.labels;

  std::vector<int> edge_count(seg.count, 0);
  std::vector<int> seen;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!shadow_edges(x, y)) continue;
      seen.clear();
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (L.inside(x + dx, y + dy)) seen.push_back(L(x + dx, y + dy));
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      for (int l : seen) ++edge_count[l];
    }
  std::vector<bool> at_edge(seg.count);
  for (int i = 0; i < seg.count; ++i)
    at_edge[i] = edge_count[i] >= std::max<double>(params.min_pixels, params.min_fraction * seg.area[i]);

  // Edge pixels plus their 4-neighbours absorb one pixel of misalignment
  // between the edge trace and the superpixel border.
  EdgeMap near(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (shadow_edges(x, y)) {
        near(x, y) = 1;
        if (x > 0) near(x - 1, y) = 1;
        if (x + 1 < w) near(x + 1, y) = 1;
        if (y > 0) near(x, y - 1) = 1;
        if (y + 1 < h) near(x, y + 1) = 1;
      }
  std::map<std::pair<int, int>, std::pair<int, int>> border;  // (i<j) -> (touching, total)
  auto visit = [&](int ax, int ay, int bx, int by) {
    const int a = L(ax, ay), b = L(bx, by);
    if (a == b) return;
    auto& e = border[{std::min(a, b), std::max(a, b)}];
    e.second += 1;
    e.first += near(ax, ay) || near(bx, by);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) visit(x, y, x + 1, y);
      if (y + 1 < h) visit(x, y, x, y + 1);
    }
  std::vector<std::vector<int>> facing(seg.count);
  for (const auto& [key, counts] : border) {
    const auto [touching, total] = counts;
    if (touching >= params.min_shared_pairs && touching >= params.shared_fraction * total) {
      facing[key.first].push_back(key.second);
      facing[key.second].push_back(key.first);
    }
  }

  BoundarySets sets;
  for (int p = 0; p < seg.count; ++p) {
    if (!at_edge[p]) continue;
    if (facing[p].empty()) {
      sets.ambiguous.push_back(p);
      continue;
    }
    bool darker = true, brighter = true;
    for (int q : facing[p]) {
      darker = darker && seg.mean_lab[p][0] < seg.mean_lab[q][0];
      brighter = brighter && seg.mean_lab[p][0] > seg.mean_lab[q][0];
    }
    (darker ? sets.shd : brighter ? sets.lit : sets.ambiguous).push_back(p);
  }
  return sets;
}

/// Label map as 16-bit values (ids above 65535 saturate).
inline Raster<std::uint16_t> label_raster(const LabelMap& labels) {
  Raster<std::uint16_t> r(labels.width, labels.height);
  for (std::size_t i = 0; i < r.pixels.size(); ++i)
    r.pixels[i] = static_cast<std::uint16_t>(std::min(labels.pixels[i], 65535));
  return r;
}

}  // namespace shade
