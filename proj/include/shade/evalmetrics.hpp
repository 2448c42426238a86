#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shade/error.hpp"
#include "shade/image.hpp"
#include "shade/measures.hpp"

namespace shade {

inline constexpr const char* kToolVersion = "0.1.0";

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  /// Not applicable (nullopt) when the groundtruth has no shadow pixel.
  std::optional<double> shadow_accuracy() const {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  std::optional<double> nonshadow_accuracy() const {
    if (tn + fp == 0) return std::nullopt;
    return static_cast<double>(tn) / static_cast<double>(tn + fp);
  }
  std::optional<double> overall() const {
    if (total() == 0) return std::nullopt;
    return static_cast<double>(tp + tn) / static_cast<double>(total());
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Pixels outside `valid` (when given) are not counted.
inline ConfusionCounts confusion(const Mask& pred, const Mask& gt, const Mask* valid = nullptr) {
  require_same_size(pred, gt, "confusion");
  if (valid) require_same_size(*valid, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    if (valid && !valid->pixels[i]) continue;
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

struct RocPoint {
  double threshold;  // +inf for the closing (0, 0) point, -inf for a forced (1, 1)
  double fpr, tpr;
};

struct RocResult {
  /// One point per grid threshold k/(n-1), ascending, then the (0, 0) point.
  /// FPR and TPR are 0 when their class is absent.
  std::vector<RocPoint> curve;
  /// Trapezoid area under the exact curve over all distinct scores.
  std::optional<double> auc;
  /// Trapezoid area under the grid curve.
  std::optional<double> auc_grid;
};

inline double trapezoid(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  double a = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    a += (pts[k].first - pts[k - 1].first) * (pts[k].second + pts[k - 1].second) / 2.0;
  return a;
}

/// Scores are taken as they are; pixels predicted shadow when score >= t.
/// AUC is not applicable when the groundtruth holds one class only.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& gt, int n_thresholds = 256) {
  require(n_thresholds >= 2, "config", "roc needs at least 2 thresholds");
  require(scores.size() == gt.size(), "shape", "score and groundtruth sizes differ");
  for (double s : scores) require(std::isfinite(s), "non_finite", "soft map holds a non-finite score");
  std::uint64_t pos = 0;
  for (auto g : gt) pos += g != 0;
  const std::uint64_t neg = gt.size() - pos;
  auto rate = [](std::uint64_t k, std::uint64_t n) { return n ? static_cast<double>(k) / n : 0.0; };

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  // Grid curve: count positives above each threshold from the sorted order.
  std::vector<std::pair<double, double>> grid;
  {
    std::vector<RocPoint> pts(n_thresholds);
    std::size_t k = 0;
    std::uint64_t tp = 0, fp = 0;
    for (int i = n_thresholds - 1; i >= 0; --i) {
      const double t = static_cast<double>(i) / (n_thresholds - 1);
      while (k < order.size() && scores[order[k]] >= t) {
        (gt[order[k]] ? tp : fp) += 1;
        ++k;
      }
      pts[i] = {t, rate(fp, neg), rate(tp, pos)};
    }
    // Scores below 0 never pass the grid; open the curve at (1, 1) anyway.
    if (pts.front().fpr != 1.0 || pts.front().tpr != 1.0)
      r.curve.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
    r.curve.insert(r.curve.end(), pts.begin(), pts.end());
    r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (const auto& p : r.curve) grid.emplace_back(p.fpr, p.tpr);
  }
  if (pos == 0 || neg == 0) return r;

  std::vector<std::pair<double, double>> exact{{0.0, 0.0}};
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (gt[order[k]] ? tp : fp) += 1;
      ++k;
    }
    exact.emplace_back(rate(fp, neg), rate(tp, pos));
  }
  r.auc = std::clamp(trapezoid(std::move(exact)), 0.0, 1.0);
  r.auc_grid = std::clamp(trapezoid(std::move(grid)), 0.0, 1.0);
  return r;
}

inline RocResult roc_auc(const FloatMap& soft, const Mask& gt, int n_thresholds = 256) {
  require_same_size(soft, gt, "roc_auc");
  return roc_auc(soft.pixels, gt.pixels, n_thresholds);
}

inline std::string roc_csv(const RocResult& r) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : r.curve)
    out += (std::isfinite(p.threshold) ? format_number(p.threshold) : std::string(p.threshold > 0 ? "inf" : "-inf")) + "," +
           format_number(p.fpr) + "," + format_number(p.tpr) + "\n";
  return out;
}

struct ImageMetrics {
  std::string stem;
  ConfusionCounts counts;
  std::optional<double> auc, auc_grid;

  bool operator==(const ImageMetrics&) const = default;
};

struct MeanMetrics {
  std::optional<double> overall, shadow_accuracy, nonshadow_accuracy, auc;
  bool operator==(const MeanMetrics&) const = default;
};

/// Per-image rows, their unweighted means (over images where each value is
/// applicable) and the pixel-pooled aggregate.
struct Metrics {
  std::vector<ImageMetrics> images;
  MeanMetrics mean;
  std::optional<ImageMetrics> pooled;

  bool empty() const { return images.empty(); }
  bool operator==(const Metrics&) const = default;
};

inline MeanMetrics mean_metrics(const std::vector<ImageMetrics>& images) {
  auto avg = [&](auto get) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (const auto& m : images)
      if (auto v = get(m)) {
        s += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return s / n;
  };
  return {avg([](const ImageMetrics& m) { return m.counts.overall(); }),
          avg([](const ImageMetrics& m) { return m.counts.shadow_accuracy(); }),
          avg([](const ImageMetrics& m) { return m.counts.nonshadow_accuracy(); }),
          avg([](const ImageMetrics& m) { return m.auc; })};
}

namespace detail {

inline nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ImageMetrics& m) {
  return {{"stem", m.stem},
          {"tp", m.counts.tp},
          {"fp", m.counts.fp},
          {"tn", m.counts.tn},
          {"fn", m.counts.fn},
          {"overall_accuracy", detail::opt(m.counts.overall())},
          {"shadow_accuracy", detail::opt(m.counts.shadow_accuracy())},
          {"nonshadow_accuracy", detail::opt(m.counts.nonshadow_accuracy())},
          {"auc", detail::opt(m.auc)},
          {"auc_grid", detail::opt(m.auc_grid)}};
}

inline ImageMetrics image_metrics_from_json(const nlohmann::json& j) {
  ImageMetrics m;
  m.stem = j.at("stem").get<std::string>();
  m.counts = {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(),
              j.at("fn").get<std::uint64_t>()};
  m.auc = detail::get_opt(j, "auc");
  m.auc_grid = detail::get_opt(j, "auc_grid");
  return m;
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& im : m.images) j["per_image"].push_back(to_json(im));
  j["per_image_mean"] = {{"overall_accuracy", detail::opt(m.mean.overall)},
                         {"shadow_accuracy", detail::opt(m.mean.shadow_accuracy)},
                         {"nonshadow_accuracy", detail::opt(m.mean.nonshadow_accuracy)},
                         {"auc", detail::opt(m.mean.auc)}};
  j["pooled"] = m.pooled ? to_json(*m.pooled) : nlohmann::ordered_json(nullptr);
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  for (const auto& im : j.at("per_image")) m.images.push_back(image_metrics_from_json(im));
  const auto& mean = j.at("per_image_mean");
  m.mean = {detail::get_opt(mean, "overall_accuracy"), detail::get_opt(mean, "shadow_accuracy"),
            detail::get_opt(mean, "nonshadow_accuracy"), detail::get_opt(mean, "auc")};
  if (!j.at("pooled").is_null()) m.pooled = image_metrics_from_json(j.at("pooled"));
  return m;
}

/// Evaluates one image; the soft map is optional (no AUC without it).
inline ImageMetrics evaluate_image(std::string stem, const Mask& pred, const Mask& gt, const FloatMap* soft,
                                   int n_thresholds = 256) {
  ImageMetrics m{std::move(stem), confusion(pred, gt), std::nullopt, std::nullopt};
  if (soft) {
    const auto r = roc_auc(*soft, gt, n_thresholds);
    m.auc = r.auc;
    m.auc_grid = r.auc_grid;
  }
  return m;
}

/// Published overall pixel accuracies of the reference method, for context.
inline nlohmann::ordered_json literature_reference() {
  return {{"label", "literature reference, not measured here"},
          {"method", "SCNN-LinearOpt"},
          {"metric", "overall pixel accuracy"},
          {"values",
           nlohmann::ordered_json::array({{{"dataset", "UCF"}, {"value", 0.931}, {"source", "published table"}},
                                          {{"dataset", "UIUC"}, {"value", 0.934}, {"source", "published table"}},
                                          {{"dataset", "CMU"}, {"value", 0.940}, {"source", "published table"}}})}};
}

inline nlohmann::ordered_json report(const Metrics& metrics, const nlohmann::ordered_json& config) {
  nlohmann::ordered_json j;
  j["tool"] = "shade";
  j["version"] = kToolVersion;
  j["config"] = config;
  if (!metrics.empty()) j["metrics"] = to_json(metrics);
  j["literature_reference"] = literature_reference();
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), "io", "cannot open " + path + " for writing");
  f << text;
  f.close();
  require(static_cast<bool>(f), "io", "write failed for " + path);
}

inline void write_report(const std::string& path, const Metrics& metrics, const nlohmann::ordered_json& config) {
  write_text(path, report(metrics, config).dump(2) + "\n");
}

}  // namespace shade
