#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shade/canny.hpp"
#include "shade/error.hpp"
#include "shade/image.hpp"
#include "shade/patch.hpp"
#include "shade/random.hpp"
#include "shade/strcnn.hpp"

namespace shade {

/// Marks every pixel whose 4-neighbourhood (itself included) holds both mask
/// values, i.e. both sides of each region transition.
inline EdgeMap region_mask_to_edge_gt(const Mask& mask) {
  EdgeMap e(mask.width, mask.height);
  constexpr int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const bool v = mask(x, y) != 0;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (mask.inside(nx, ny) && (mask(nx, ny) != 0) != v) {
          e(x, y) = 1;
          break;
        }
      }
    }
  return e;
}

/// Morphological dilation with the disc {dx^2 + dy^2 <= r^2}.
inline EdgeMap dilate(const EdgeMap& edges, int radius) {
  require(radius >= 0, "config", "dilation radius must be >= 0");
  if (radius == 0) return edges;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
  EdgeMap out(edges.width, edges.height);
  for (int y = 0; y < edges.height; ++y)
    for (int x = 0; x < edges.width; ++x) {
      if (!edges(x, y)) continue;
      for (auto [dx, dy] : offsets)
        if (out.inside(x + dx, y + dy)) out(x + dx, y + dy) = 1;
    }
  return out;
}

/// True when a 28x28 patch centred at (x, y) fits with the border margin.
inline bool valid_center(int x, int y, int width, int height) {
  return x >= kBorderMargin && y >= kBorderMargin && x <= width - 1 - kBorderMargin &&
         y <= height - 1 - kBorderMargin;
}

/// Raw RGB crop spanning [c - 14, c + 13] on both axes, values 0..255.
inline Tensor extract_patch(const RgbImage& image, int cx, int cy) {
  require(cx - kPatchHalf >= 0 && cy - kPatchHalf >= 0 && cx + kPatchHalf - 1 < image.width &&
              cy + kPatchHalf - 1 < image.height,
          "range", "patch at (" + std::to_string(cx) + "," + std::to_string(cy) + ") leaves the image");
  Tensor t({kPatchSize, kPatchSize, 3});
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x) {
      const Rgb& p = image(cx - kPatchHalf + x, cy - kPatchHalf + y);
      t.at(y, x, 0) = p.r;
      t.at(y, x, 1) = p.g;
      t.at(y, x, 2) = p.b;
    }
  return t;
}

inline void normalize_patch(Tensor& t, const cnn::Normalization& n) {
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - n.mean[i % 3]) / n.stddev[i % 3];
}

struct SamplingParams {
  int n_max = 400;
  int grid = 3;
  int dilation = 2;

  void validate() const {
    require(n_max >= 1 && n_max <= 800, "config", "sample_max must lie in [1, 800]");
    require(grid >= 1, "config", "sampling grid must be >= 1");
    require(dilation >= 0, "config", "gt_dilation must be >= 0");
  }
};

/// Balanced patch sampling around Canny edges.
///
/// Candidate centres are Canny pixels on the lattice anchored at (0, 0) with
/// spacing `grid`, far enough from the border for a full patch. Centres on
/// the dilated groundtruth are positives (labels: 5x5 crop of `gt_edges`),
/// the rest negatives (all-zero labels). At most n_max positives are drawn,
/// and never more negatives than positives.
inline std::vector<LabeledPatch> sample_patches(const RgbImage& image, const EdgeMap& canny_edges,
                                                const EdgeMap& gt_edges, const SamplingParams& params,
                                                std::uint64_t seed, int image_id = 0) {
  params.validate();
  require_same_size(image, canny_edges, "sample_patches canny");
  require_same_size(image, gt_edges, "sample_patches groundtruth");
  const EdgeMap near_gt = dilate(gt_edges, params.dilation);

  std::vector<std::pair<int, int>> pos, neg;
  for (int y = 0; y < image.height; y += params.grid)
    for (int x = 0; x < image.width; x += params.grid) {
      if (!canny_edges(x, y) || !valid_center(x, y, image.width, image.height)) continue;
      (near_gt(x, y) ? pos : neg).emplace_back(x, y);
    }
  Rng rng(seed);
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));
  pos.resize(std::min<std::size_t>(pos.size(), params.n_max));
  neg.resize(std::min(neg.size(), pos.size()));

  std::vector<LabeledPatch> out;
  out.reserve(pos.size() + neg.size());
  auto emit = [&](int x, int y, bool positive) {
    LabeledPatch p;
    p.x = extract_patch(image, x, y);
    p.cx = x;
    p.cy = y;
    p.image_id = image_id;
    if (positive)
      for (int j = 0; j < kLabelSize; ++j)
        for (int i = 0; i < kLabelSize; ++i)
          p.y[j * kLabelSize + i] = gt_edges(x - kLabelSize / 2 + i, y - kLabelSize / 2 + j) ? 1 : 0;
    out.push_back(std::move(p));
  };
  for (auto [x, y] : pos) emit(x, y, true);
  for (auto [x, y] : neg) emit(x, y, false);
  return out;
}

inline constexpr double kStdFloor = 1e-8;

/// Per-channel mean and standard deviation over every pixel of every sample.
inline cnn::Normalization compute_normalization(std::span<const LabeledPatch> samples) {
  require(!samples.empty(), "data", "normalization needs at least one sample");
  std::array<double, 3> sum{}, count{};
  for (const auto& s : samples) {
    const auto v = s.x.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i % 3] += v[i];
      count[i % 3] += 1.0;
    }
  }
  cnn::Normalization n;
  for (int c = 0; c < 3; ++c) n.mean[c] = sum[c] / count[c];
  std::array<double, 3> sq{};
  for (const auto& s : samples) {
    const auto v = s.x.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - n.mean[i % 3];
      sq[i % 3] += d * d;
    }
  }
  for (int c = 0; c < 3; ++c) n.stddev[c] = std::max(std::sqrt(sq[c] / count[c]), kStdFloor);
  return n;
}

inline std::vector<LabeledPatch> apply_normalization(std::vector<LabeledPatch> samples, const cnn::Normalization& n) {
  for (auto& s : samples) normalize_patch(s.x, n);
  return samples;
}

struct ManifestEntry {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> edges;
};

struct DatasetManifest {
  std::string split = "train";
  std::vector<ManifestEntry> entries;
  /// One JSON object per line: {"warning": ..., "stem": ..., "path": ...}.
  std::vector<std::string> warnings;
};

/// Pairs `<root>/images/*.png` with `<root>/masks/*.png` (and optional
/// `<root>/edges/*.png`) by file stem. Images without a mask are skipped
/// and reported.
inline DatasetManifest load_manifest(const std::filesystem::path& root, std::string split = "train") {
  namespace fs = std::filesystem;
  DatasetManifest m;
  m.split = std::move(split);
  require(fs::is_directory(root), "io", "dataset root " + root.string() + " is not a directory");
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) return m;

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& img : files) {
    const std::string stem = img.stem().string();
    const fs::path mask = root / "masks" / (stem + ".png");
    const fs::path edges = root / "edges" / (stem + ".png");
    if (!fs::is_regular_file(mask)) {
      m.warnings.push_back(
          nlohmann::json{{"warning", "missing_mask"}, {"stem", stem}, {"path", img.string()}}.dump());
      continue;
    }
    ManifestEntry entry{stem, img, mask, std::nullopt};
    if (fs::is_regular_file(edges)) entry.edges = edges;
    m.entries.push_back(std::move(entry));
  }
  return m;
}

}  // namespace shade
