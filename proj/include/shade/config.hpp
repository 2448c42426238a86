#pragma once

// Flat `key = value` configuration shared by every command.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "shade/canny.hpp"
#include "shade/dataprep.hpp"
#include "shade/error.hpp"
#include "shade/measures.hpp"
#include "shade/shadowopt.hpp"
#include "shade/strcnn.hpp"
#include "shade/superpix.hpp"

namespace shade {

struct Config {
  double canny_sigma = 1.4;
  double canny_low = 0.1;
  double canny_high = 0.2;
  int gt_dilation = 2;
  int sample_max = 400;
  int sample_grid = 3;

  double learning_rate = 0.05;
  double lr_decay = 0.95;
  int epochs = 40;
  int batch_size = 16;
  double init_scale = 1.0;
  std::uint64_t seed = 1;
  int label_size = 5;

  double vote_threshold = 0.5;

  int region_size = 14;
  double compactness = 10.0;
  int slic_iterations = 10;
  int edge_min_pixels = 10;
  double edge_min_fraction = 0.02;
  double edge_shared_fraction = 0.5;
  int edge_min_shared_pairs = 3;

  double sigma_clr = 5.0;
  double sigma_con = 1.0;
  double sigma_app = 10.0;
  double sigma_spa_fraction = 0.25;
  bool con_squared = false;

  double lambda = 0.001;
  double mu = 0.1;
  double ridge = 1e-9;
  double mask_threshold = 0.5;

  int roc_thresholds = 256;

  CannyParams canny_params() const { return {canny_sigma, canny_low, canny_high}; }
  SamplingParams sampling_params() const { return {sample_max, sample_grid, gt_dilation}; }
  cnn::TrainConfig train_config() const { return {learning_rate, lr_decay, epochs, batch_size, seed, init_scale}; }
  SegmentParams segment_params() const { return {region_size, compactness, slic_iterations}; }
  BoundaryParams boundary_params() const {
    return {edge_min_pixels, edge_min_fraction, edge_shared_fraction, edge_min_shared_pairs};
  }
  /// sigma_spa scales with the image diagonal.
  MeasureParams measure_params(int width, int height) const {
    return {sigma_clr, sigma_con, sigma_app, sigma_spa_fraction * std::hypot(width, height), con_squared};
  }
  OptParams opt_params() const { return {lambda, mu, sigma_clr, ridge}; }

  void validate() const;
};

namespace config_detail {

using Member = std::variant<double Config::*, int Config::*, bool Config::*, std::uint64_t Config::*>;

struct Field {
  const char* key;
  Member member;
  double lo, hi;
  bool lo_open, hi_open;
  const char* help;
};

inline constexpr double kBig = std::numeric_limits<double>::max();

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"canny_sigma", &Config::canny_sigma, 0, 20, true, false, "Canny Gaussian sigma (px)"},
      {"canny_low", &Config::canny_low, 0, 1, true, false, "Canny low threshold (fraction of max gradient)"},
      {"canny_high", &Config::canny_high, 0, 1, true, false, "Canny high threshold (fraction of max gradient)"},
      {"gt_dilation", &Config::gt_dilation, 0, 10, false, false, "groundtruth edge dilation radius (px)"},
      {"sample_max", &Config::sample_max, 1, 800, false, false, "max positive patches per image"},
      {"sample_grid", &Config::sample_grid, 1, 14, false, false, "sampling lattice spacing (px)"},
      {"learning_rate", &Config::learning_rate, 0, 10, true, false, "SGD learning rate"},
      {"lr_decay", &Config::lr_decay, 0, 1, true, false, "per-epoch learning-rate factor"},
      {"epochs", &Config::epochs, 1, 100000, false, false, "training epochs"},
      {"batch_size", &Config::batch_size, 1, 1 << 20, false, false, "minibatch size"},
      {"init_scale", &Config::init_scale, 0, 100, true, false, "weight init scale"},
      {"seed", &Config::seed, 0, 0, false, false, "random seed"},
      {"label_size", &Config::label_size, 1, 5, false, false, "output window: 5 (structured) or 1 (ablation)"},
      {"vote_threshold", &Config::vote_threshold, 0, 1, false, false, "edge probability threshold"},
      {"region_size", &Config::region_size, 4, 1000, false, false, "superpixel grid step (px)"},
      {"compactness", &Config::compactness, 0, 1000, true, false, "superpixel compactness"},
      {"slic_iterations", &Config::slic_iterations, 1, 100, false, false, "superpixel clustering iterations"},
      {"edge_min_pixels", &Config::edge_min_pixels, 1, 1e6, false, false, "min edge pixels for a boundary superpixel"},
      {"edge_min_fraction", &Config::edge_min_fraction, 0, 1, false, false, "min edge pixels as a fraction of area"},
      {"edge_shared_fraction", &Config::edge_shared_fraction, 0, 1, true, false,
       "fraction of a common border on the edge for two superpixels to face each other"},
      {"edge_min_shared_pairs", &Config::edge_min_shared_pairs, 1, 1e6, false, false,
       "min common border pairs on the edge"},
      {"sigma_clr", &Config::sigma_clr, 0, kBig, true, false, "geodesic affinity sigma (Lab)"},
      {"sigma_con", &Config::sigma_con, 0, kBig, true, false, "connectivity falloff sigma"},
      {"sigma_app", &Config::sigma_app, 0, kBig, true, false, "global appearance sigma (Lab)"},
      {"sigma_spa_fraction", &Config::sigma_spa_fraction, 0, kBig, true, false,
       "global spatial sigma as a fraction of the image diagonal"},
      {"con_squared", &Config::con_squared, 0, 1, false, false, "square con in the local measure (ablation)"},
      {"lambda", &Config::lambda, 0, kBig, false, false, "anchor weight"},
      {"mu", &Config::mu, 0, kBig, false, false, "smoothness offset"},
      {"ridge", &Config::ridge, 0, 1, true, false, "diagonal regulariser"},
      {"mask_threshold", &Config::mask_threshold, 0, 1, false, false, "shadow mask threshold"},
      {"roc_thresholds", &Config::roc_thresholds, 2, 65536, false, false, "ROC threshold levels"},
  };
  return f;
}

inline const Field* find(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw Error("config", key + ": not a number: '" + v + "'");
  }
  require(used == v.size() && std::isfinite(d), "config", key + ": not a finite number: '" + v + "'");
  return d;
}

// Shortest text that reads back to the same double.
inline std::string format(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace config_detail

/// Sets one key from its textual value. Range checks happen in validate().
inline void set_value(Config& c, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const Field* f = find(key);
  require(f != nullptr, "config", "unknown key '" + key + "'");
  const std::string v = trim(raw);
  require(!v.empty(), "config", key + ": empty value");
  std::visit(
      [&](auto m) {
        using T = std::remove_cvref_t<decltype(c.*m)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1")
            c.*m = true;
          else if (v == "false" || v == "0")
            c.*m = false;
          else
            throw Error("config", key + ": expected true/false, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          require(v.find_first_not_of("0123456789") == std::string::npos && v.size() <= 20, "config",
                  key + ": expected a non-negative integer, got '" + v + "'");
          try {
            c.*m = std::stoull(v);
          } catch (const std::exception&) {
            throw Error("config", key + ": out of range: '" + v + "'");
          }
        } else if constexpr (std::is_same_v<T, int>) {
          const double d = parse_double(key, v);
          require(d == std::floor(d) && std::abs(d) < 2e9, "config", key + ": expected an integer, got '" + v + "'");
          c.*m = static_cast<int>(d);
        } else {
          c.*m = parse_double(key, v);
        }
      },
      f->member);
}

inline std::string get_value(const Config& c, const config_detail::Field& f) {
  return std::visit(
      [&](auto m) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*m)>;
        if constexpr (std::is_same_v<T, bool>)
          return c.*m ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>)
          return config_detail::format(c.*m);
        else
          return std::to_string(c.*m);
      },
      f.member);
}

inline void Config::validate() const {
  using namespace config_detail;
  for (const auto& f : fields()) {
    if (std::holds_alternative<std::uint64_t Config::*>(f.member) || std::holds_alternative<bool Config::*>(f.member))
      continue;
    const double v = std::visit([&](auto m) { return static_cast<double>(this->*m); }, f.member);
    const bool lo_ok = f.lo_open ? v > f.lo : v >= f.lo;
    const bool hi_ok = f.hi_open ? v < f.hi : v <= f.hi;
    require(lo_ok && hi_ok, "config",
            std::string(f.key) + " = " + get_value(*this, f) + " outside " + (f.lo_open ? "(" : "[") +
                format(f.lo) + ", " + (f.hi == kBig ? std::string("inf") : format(f.hi)) + (f.hi_open ? ")" : "]"));
  }
  require(label_size == 1 || label_size == 5, "config", "label_size must be 1 or 5");
  require(canny_low < canny_high, "config", "canny_low must be below canny_high");
}

/// Parses `key = value` lines; `#` starts a comment. Later lines win.
inline void apply_text(Config& c, const std::string& text, const std::string& origin = "config") {
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config",
            origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    try {
      set_value(c, key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error("config", origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "io", "cannot read config " + path);
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Config c;
  apply_text(c, text, path);
  return c;
}

/// Every key in declaration order; parses back to the same Config.
inline std::string to_text(const Config& c) {
  std::string out;
  for (const auto& f : config_detail::fields()) out += std::string(f.key) + " = " + get_value(c, f) + "\n";
  return out;
}

inline nlohmann::ordered_json to_json(const Config& c) {
  nlohmann::ordered_json j;
  for (const auto& f : config_detail::fields())
    std::visit([&](auto m) { j[f.key] = c.*m; }, f.member);
  return j;
}

inline bool operator==(const Config& a, const Config& b) { return to_text(a) == to_text(b); }

}  // namespace shade
