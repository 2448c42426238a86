#pragma once

// The `shade` command line: synth, train, detect-edges, detect, optimize,
// eval and gradcheck. run_cli() is usable in-process (tests call it).

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "shade/config.hpp"
#include "shade/dataprep.hpp"
#include "shade/error.hpp"
#include "shade/evalmetrics.hpp"
#include "shade/model_io.hpp"
#include "shade/pipeline.hpp"
#include "shade/png_io.hpp"
#include "shade/synthgen.hpp"

namespace shade::cli {

namespace fs = std::filesystem;

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckEps = 1e-5;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline void log_config(const Config& c, Streams io, const std::string& command) {
  io.err << "[shade " << command << "] resolved config:\n";
  std::istringstream lines(to_text(c));
  for (std::string line; std::getline(lines, line);) io.err << "  " << line << "\n";
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), "io", "cannot create directory " + dir.string());
}

inline void write_config(const fs::path& dir, const Config& c) { write_text((dir / "config.txt").string(), to_text(c)); }

/// PNG files of a directory (sorted), or the single file itself.
inline std::vector<fs::path> list_pngs(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  require(fs::is_directory(p), "io", "no such file or directory: " + p.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// A dataset root holds masks/; otherwise the directory itself is used.
inline fs::path mask_dir(const fs::path& p) { return fs::is_directory(p / "masks") ? p / "masks" : p; }

inline std::string csv_superpixels(const ShadowResult& r) {
  const auto shd = membership(r.seg.count, r.bounds.shd), lit = membership(r.seg.count, r.bounds.lit),
             amb = membership(r.seg.count, r.bounds.ambiguous);
  std::string out = "id,area,centroid_x,centroid_y,L,a,b,boundary,s\n";
  for (int i = 0; i < r.seg.count; ++i) {
    const char* cls = shd[i] ? "shd" : lit[i] ? "lit" : amb[i] ? "ambiguous" : "none";
    out += std::to_string(i) + "," + std::to_string(r.seg.area[i]) + "," + format_number(r.seg.centroid[i][0]) + "," +
           format_number(r.seg.centroid[i][1]) + "," + format_number(r.seg.mean_lab[i][0]) + "," +
           format_number(r.seg.mean_lab[i][1]) + "," + format_number(r.seg.mean_lab[i][2]) + "," + cls + "," +
           format_number(r.map.s[i]) + "\n";
  }
  return out;
}

/// Writes the optimisation artifacts for one image and returns its report.
inline nlohmann::ordered_json write_shadow_outputs(const fs::path& out, const std::string& stem, const RgbImage& image,
                                                   const EdgeMap& shadow_edges, const ShadowResult& r,
                                                   const Config& config, const std::optional<fs::path>& gt_path) {
  const auto file = [&](const std::string& suffix) { return (out / (stem + suffix)).string(); };
  png::write_mask(file("_mask.png"), r.map.mask);
  png::write_unit16(file("_soft.png"), r.map.soft);
  png::write_gray16(file("_labels.png"), label_raster(r.seg.labels));
  write_text(file("_superpixels.csv"), csv_superpixels(r));
  write_text(file("_measures.csv"), measures_csv(r.measures));

  nlohmann::ordered_json j;
  j["tool"] = "shade";
  j["version"] = kToolVersion;
  j["stem"] = stem;
  j["config"] = to_json(config);
  j["image"] = {{"width", image.width}, {"height", image.height}};
  j["shadow_edge_pixels"] = count_set(shadow_edges);
  j["superpixels"] = r.seg.count;
  j["boundary"] = {{"shd", r.bounds.shd}, {"lit", r.bounds.lit}, {"ambiguous", r.bounds.ambiguous}};
  j["energy"] = r.energy;
  j["shadow_pixels"] = count_set(r.map.mask);
  j["outputs"] = {stem + "_mask.png", stem + "_soft.png", stem + "_labels.png", stem + "_superpixels.csv",
                  stem + "_measures.csv", stem + "_report.json"};
  if (gt_path) {
    const Mask gt = png::read_mask(gt_path->string());
    require_same_size(gt, r.map.mask, "groundtruth");
    j["metrics"] = to_json(evaluate_image(stem, r.map.mask, gt, &r.map.soft, config.roc_thresholds));
  }
  j["literature_reference"] = literature_reference();
  write_text(file("_report.json"), j.dump(2) + "\n");
  return j;
}

inline std::optional<fs::path> find_gt(const std::optional<fs::path>& gt, const std::string& stem, bool single) {
  if (!gt) return std::nullopt;
  if (single && fs::is_regular_file(*gt)) return *gt;
  const fs::path p = mask_dir(*gt) / (stem + ".png");
  return fs::is_regular_file(p) ? std::optional<fs::path>(p) : std::nullopt;
}

// ---------------------------------------------------------------- commands

inline int cmd_synth(int count, const fs::path& out, const Config& c, Streams io) {
  ensure_dir(out);
  const auto manifest = synth::generate_suite(count, c.seed, out);
  write_config(out, c);
  nlohmann::ordered_json m;
  m["split"] = manifest.split;
  m["seed"] = c.seed;
  m["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries)
    m["entries"].push_back({{"stem", e.stem},
                            {"image", fs::relative(e.image, out).generic_string()},
                            {"mask", fs::relative(e.mask, out).generic_string()},
                            {"edges", e.edges ? fs::relative(*e.edges, out).generic_string() : ""}});
  write_text((out / "manifest.json").string(), m.dump(2) + "\n");
  io.out << "wrote " << manifest.entries.size() << " scenes to " << out.string() << "\n";
  return 0;
}

inline int cmd_train(const fs::path& data, const fs::path& out, const Config& c, Streams io) {
  const auto manifest = load_manifest(data);
  for (const auto& w : manifest.warnings) io.err << w << "\n";
  require(!manifest.entries.empty(), "data", "no image/mask pairs under " + data.string());
  std::vector<LabeledPatch> samples;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    const RgbImage image = png::read_rgb(e.image.string());
    const Mask mask = png::read_mask(e.mask.string());
    require_same_size(image, mask, e.stem.c_str());
    const EdgeMap gt = e.edges ? png::read_mask(e.edges->string()) : region_mask_to_edge_gt(mask);
    require_same_size(image, gt, e.stem.c_str());
    auto s = sample_patches(image, canny(image, c.canny_params()), gt, c.sampling_params(), c.seed ^ i,
                            static_cast<int>(i));
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  require(!samples.empty(), "data", "no training patches could be sampled");
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.positive();
  io.err << "[shade train] " << samples.size() << " patches (" << positives << " positive) from "
         << manifest.entries.size() << " images\n";

  const auto norm = compute_normalization(samples);
  samples = apply_normalization(std::move(samples), norm);
  auto model = cnn::make_model(c.label_size, norm, c.init_scale, c.seed);
  const auto result = cnn::sgd_train(std::move(model), samples, c.train_config(), [&](int epoch, double loss) {
    io.err << "[shade train] epoch " << epoch + 1 << "/" << c.epochs << " loss " << format_number(loss) << "\n";
  });

  ensure_dir(out);
  cnn::save_model(result.model, (out / "model.scnn").string());
  std::string curve = "epoch,loss\n";
  for (std::size_t k = 0; k < result.loss_curve.size(); ++k)
    curve += std::to_string(k + 1) + "," + format_number(result.loss_curve[k]) + "\n";
  write_text((out / "loss.csv").string(), curve);
  write_config(out, c);
  io.out << "model " << (out / "model.scnn").string() << " cell_accuracy "
         << format_number(cnn::cell_accuracy(result.model, samples)) << "\n";
  return 0;
}

inline int cmd_detect_edges(const fs::path& model_path, const fs::path& input, const fs::path& out, const Config& c,
                            Streams io) {
  const auto model = cnn::load_model(model_path.string());
  ensure_dir(out);
  for (const auto& path : list_pngs(input)) {
    const std::string stem = path.stem().string();
    const auto image = png::read_rgb(path.string());
    const auto d = detect_edges(model, image, c);
    png::write_unit16((out / (stem + "_edges_soft.png")).string(), d.probability.probability);
    png::write_mask((out / (stem + "_edges.png")).string(), d.edges);
    io.out << stem << " canny " << count_set(d.canny) << " shadow_edges " << count_set(d.edges) << " isolated "
           << count_isolated_pixels(d.edges) << "\n";
  }
  write_config(out, c);
  return 0;
}

inline int cmd_detect(const fs::path& model_path, const fs::path& input, const fs::path& out,
                      const std::optional<fs::path>& gt, const Config& c, Streams io) {
  const auto model = cnn::load_model(model_path.string());
  ensure_dir(out);
  const auto inputs = list_pngs(input);
  for (const auto& path : inputs) {
    const std::string stem = path.stem().string();
    const auto image = png::read_rgb(path.string());
    const auto d = detect_edges(model, image, c);
    png::write_unit16((out / (stem + "_edges_soft.png")).string(), d.probability.probability);
    png::write_mask((out / (stem + "_edges.png")).string(), d.edges);
    const auto r = optimize_from_edges(image, d.edges, c);
    auto j = write_shadow_outputs(out, stem, image, d.edges, r, c, find_gt(gt, stem, inputs.size() == 1));
    io.out << stem << " superpixels " << r.seg.count << " shd " << r.bounds.shd.size() << " lit "
           << r.bounds.lit.size() << " shadow_pixels " << count_set(r.map.mask);
    if (j.contains("metrics")) io.out << " accuracy " << j["metrics"]["overall_accuracy"].dump();
    io.out << "\n";
  }
  write_config(out, c);
  return 0;
}

inline int cmd_optimize(const fs::path& input, const fs::path& edges, const fs::path& out,
                        const std::optional<fs::path>& gt, const Config& c, Streams io) {
  ensure_dir(out);
  const auto inputs = list_pngs(input);
  for (const auto& path : inputs) {
    const std::string stem = path.stem().string();
    const fs::path edge_path = fs::is_regular_file(edges) ? edges : edges / (stem + ".png");
    require(fs::is_regular_file(edge_path), "io", "no edge map for " + stem + " at " + edge_path.string());
    const auto image = png::read_rgb(path.string());
    const EdgeMap e = png::read_mask(edge_path.string());
    const auto r = optimize_from_edges(image, e, c);
    auto j = write_shadow_outputs(out, stem, image, e, r, c, find_gt(gt, stem, inputs.size() == 1));
    io.out << stem << " superpixels " << r.seg.count << " shd " << r.bounds.shd.size() << " lit "
           << r.bounds.lit.size() << " shadow_pixels " << count_set(r.map.mask);
    if (j.contains("metrics")) io.out << " accuracy " << j["metrics"]["overall_accuracy"].dump();
    io.out << "\n";
  }
  write_config(out, c);
  return 0;
}

/// Matches `<gt>/<stem>.png` with `<pred>/<stem>_mask.png` (or
/// `<pred>/<stem>.png`) and, when present, `<pred>/<stem>_soft.png`.
inline int cmd_eval(const fs::path& pred, const fs::path& gt, const fs::path& out, const Config& c, Streams io) {
  require(fs::is_directory(pred), "io", "prediction directory " + pred.string() + " not found");
  ensure_dir(out);
  ensure_dir(out / "roc");
  Metrics metrics;
  ConfusionCounts pooled;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_gt;
  bool all_soft = true;
  for (const auto& gt_path : list_pngs(mask_dir(gt))) {
    const std::string stem = gt_path.stem().string();
    fs::path mask_path = pred / (stem + "_mask.png");
    if (!fs::is_regular_file(mask_path)) mask_path = pred / (stem + ".png");
    if (!fs::is_regular_file(mask_path)) {
      io.err << nlohmann::json{{"warning", "missing_prediction"}, {"stem", stem}}.dump() << "\n";
      continue;
    }
    const Mask g = png::read_mask(gt_path.string());
    const Mask p = png::read_mask(mask_path.string());
    require_same_size(p, g, stem.c_str());
    std::optional<FloatMap> soft;
    if (const fs::path sp = pred / (stem + "_soft.png"); fs::is_regular_file(sp)) {
      soft = png::read_unit_gray(sp.string());
      require_same_size(*soft, g, stem.c_str());
      write_text((out / "roc" / (stem + ".csv")).string(), roc_csv(roc_auc(*soft, g, c.roc_thresholds)));
      pooled_scores.insert(pooled_scores.end(), soft->pixels.begin(), soft->pixels.end());
      pooled_gt.insert(pooled_gt.end(), g.pixels.begin(), g.pixels.end());
    } else {
      all_soft = false;
    }
    metrics.images.push_back(evaluate_image(stem, p, g, soft ? &*soft : nullptr, c.roc_thresholds));
    pooled += metrics.images.back().counts;
  }
  require(!metrics.images.empty(), "data", "no predictions matched the groundtruth stems");
  metrics.mean = mean_metrics(metrics.images);
  ImageMetrics pool{"pooled", pooled, std::nullopt, std::nullopt};
  if (all_soft) {
    const auto r = roc_auc(pooled_scores, pooled_gt, c.roc_thresholds);
    pool.auc = r.auc;
    pool.auc_grid = r.auc_grid;
    write_text((out / "roc.csv").string(), roc_csv(r));
  }
  metrics.pooled = pool;
  write_report((out / "eval.json").string(), metrics, to_json(c));
  write_config(out, c);
  auto show = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("n/a"); };
  io.out << "images " << metrics.images.size() << " mean_accuracy " << show(metrics.mean.overall)
         << " mean_shadow_accuracy " << show(metrics.mean.shadow_accuracy) << " mean_nonshadow_accuracy "
         << show(metrics.mean.nonshadow_accuracy) << " mean_auc " << show(metrics.mean.auc) << " pooled_accuracy "
         << show(pool.counts.overall()) << " pooled_auc " << show(pool.auc) << "\n";
  return 0;
}

/// Random model and random patch per seed; seeds are base, base+1, ...
inline double gradcheck_max_error(std::uint64_t base, int seeds, int label_size, double init_scale, Streams* io) {
  double worst = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t s = base + static_cast<std::uint64_t>(k);
    const auto model = cnn::make_model(label_size, {}, init_scale, s);
    LabeledPatch sample;
    Rng rng(derive_seed(s, 7));
    for (double& v : sample.x.values()) v = rng.normal();
    for (auto& y : sample.y) y = rng.below(2);
    const auto rep = cnn::grad_check(model, sample, kGradCheckEps, s);
    if (io)
      io->out << "seed " << s << " max_relative_error " << format_number(rep.max_relative_error) << " worst "
              << rep.worst_parameter << " coordinates " << rep.coordinates << " reduced_steps "
              << rep.step_reductions << " kinks_skipped " << rep.kinks_skipped << "\n";
    worst = std::max(worst, rep.max_relative_error);
  }
  return worst;
}

inline int cmd_gradcheck(int seeds, const Config& c, Streams io) {
  require(seeds >= 1, "config", "--seeds must be >= 1");
  const double worst = gradcheck_max_error(c.seed, seeds, c.label_size, c.init_scale, &io);
  io.out << "max_relative_error " << format_number(worst) << "\n";
  require(worst < kGradCheckTolerance, "gradcheck_failed",
          "max relative error " + format_number(worst) + " >= " + format_number(kGradCheckTolerance));
  return 0;
}

// ---------------------------------------------------------------- parsing

inline std::string error_line(const std::string& code, const std::string& message) {
  return nlohmann::json{{"error", code}, {"message", message}}.dump();
}

struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

inline void add_config_options(CLI::App* app, ConfigOptions& opts) {
  app->add_option("--config", opts.file, "key = value config file (command-line flags override it)");
  const Config defaults;
  for (const auto& f : config_detail::fields()) {
    auto* o = app->add_option(std::string("--") + f.key, opts.values[f.key], f.help);
    const char* type = std::visit(
        [](auto m) {
          using T = std::remove_cvref_t<decltype(Config{}.*m)>;
          if constexpr (std::is_same_v<T, double>) return "FLOAT";
          if constexpr (std::is_same_v<T, int>) return "INT";
          if constexpr (std::is_same_v<T, bool>) return "BOOL";
          return "UINT";
        },
        f.member);
    o->default_str(get_value(defaults, f))->type_name(type)->group("Config");
    opts.options[f.key] = o;
  }
}

inline Config resolve_config(const ConfigOptions& opts) {
  Config c;
  if (!opts.file.empty()) c = load_config(opts.file);
  for (const auto& [key, opt] : opts.options)
    if (opt->count() > 0) set_value(c, key, opts.values.at(key));
  c.validate();
  return c;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  Streams io{out, err};
  CLI::App app{"shade: single-image shadow detection from structured edge predictions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Sub {
    CLI::App* app;
    ConfigOptions config;
  };
  std::map<std::string, Sub> subs;
  auto sub = [&](const std::string& name, const std::string& help) -> Sub& {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, help);
    add_config_options(s.app, s.config);
    return s;
  };

  int count = 0, seeds = 10;
  std::string out_dir, data, model, image, edges, pred, gt;

  auto& synth = sub("synth", "generate a synthetic dataset (images/, masks/, edges/); seed from --seed");
  synth.app->add_option("--count", count, "number of scenes")->required()->check(CLI::PositiveNumber);
  synth.app->add_option("--out", out_dir, "output directory")->required();

  auto& train = sub("train", "sample patches and train the edge network; writes model.scnn, loss.csv");
  train.app->add_option("--data", data, "dataset root with images/ and masks/ (edges/ optional)")->required();
  train.app->add_option("--out", out_dir, "output directory")->required();

  auto& dedges = sub("detect-edges", "structured shadow-edge prediction; writes soft and binary edge maps");
  dedges.app->add_option("--model", model, "model file")->required();
  dedges.app->add_option("--image", image, "PNG image or directory of PNGs")->required();
  dedges.app->add_option("--out", out_dir, "output directory")->required();

  auto& detect = sub("detect", "full pipeline: edges, superpixels, measures, shadow optimisation");
  detect.app->add_option("--model", model, "model file")->required();
  detect.app->add_option("--image", image, "PNG image or directory of PNGs")->required();
  detect.app->add_option("--out", out_dir, "output directory")->required();
  detect.app->add_option("--gt", gt, "optional groundtruth mask (file, directory or dataset root)");

  auto& optimize = sub("optimize", "shadow optimisation from a given binary shadow-edge map");
  optimize.app->add_option("--image", image, "PNG image or directory of PNGs")->required();
  optimize.app->add_option("--edges", edges, "edge PNG, or directory with <stem>.png")->required();
  optimize.app->add_option("--out", out_dir, "output directory")->required();
  optimize.app->add_option("--gt", gt, "optional groundtruth mask (file, directory or dataset root)");

  auto& eval = sub("eval", "accuracy, class accuracies and ROC/AUC over matched stems");
  eval.app->add_option("--pred", pred, "directory with <stem>_mask.png and optional <stem>_soft.png")->required();
  eval.app->add_option("--gt", gt, "groundtruth mask directory or dataset root")->required();
  eval.app->add_option("--out", out_dir, "output directory")->required();

  auto& gradcheck = sub("gradcheck", "finite-difference check of the network gradients");
  gradcheck.app->add_option("--seeds", seeds, "number of seeds, starting at --seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what()) << "\n";
    return 2;
  }

  for (auto& [name, s] : subs) {
    if (!s.app->parsed()) continue;
    try {
      const Config c = resolve_config(s.config);
      log_config(c, io, name);
      const auto opt_gt = gt.empty() ? std::nullopt : std::optional<fs::path>(gt);
      if (name == "synth") return cmd_synth(count, out_dir, c, io);
      if (name == "train") return cmd_train(data, out_dir, c, io);
      if (name == "detect-edges") return cmd_detect_edges(model, image, out_dir, c, io);
      if (name == "detect") return cmd_detect(model, image, out_dir, opt_gt, c, io);
      if (name == "optimize") return cmd_optimize(image, edges, out_dir, opt_gt, c, io);
      if (name == "eval") return cmd_eval(pred, gt, out_dir, c, io);
      if (name == "gradcheck") return cmd_gradcheck(seeds, c, io);
    } catch (const Error& e) {
      err << error_line(e.code(), e.what()) << "\n";
      return 1;
    } catch (const std::exception& e) {
      err << error_line("internal", e.what()) << "\n";
      return 1;
    }
  }
  err << error_line("usage", "no subcommand") << "\n";
  return 2;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace shade::cli
