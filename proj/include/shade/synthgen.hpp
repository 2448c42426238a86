#pragma once

// Synthetic cast-shadow scenes with exact groundtruth.
//
// The shadow region is the union of the occluders translated by the light
// offset, minus the occluders themselves. Lit pixels carry the background
// albedo, shadowed pixels the albedo times the attenuation, and a linear
// ramp of `penumbra` pixels straddles the geometric shadow boundary.
// Markings and texture change the albedo only, so they never enter the
// groundtruth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "shade/color.hpp"
#include "shade/dataprep.hpp"
#include "shade/error.hpp"
#include "shade/image.hpp"
#include "shade/png_io.hpp"
#include "shade/random.hpp"

namespace shade::synth {

struct Point {
  double x = 0.0, y = 0.0;
};

/// A disc (radius > 0) or, when `vertices` is non-empty, a convex polygon
/// with counter-clockwise or clockwise vertex order.
struct Occluder {
  Point center;
  double radius = 0.0;
  std::vector<Point> vertices;

  static Occluder disc(double cx, double cy, double r) { return {{cx, cy}, r, {}}; }
  static Occluder polygon(std::vector<Point> v) {
    Occluder o;
    o.vertices = std::move(v);
    for (const auto& p : o.vertices) {
      o.center.x += p.x / o.vertices.size();
      o.center.y += p.y / o.vertices.size();
    }
    return o;
  }

  /// Signed distance, positive inside.
  double signed_distance(double x, double y) const {
    if (vertices.empty()) return radius - std::hypot(x - center.x, y - center.y);
    double best = std::numeric_limits<double>::infinity();
    bool inside = true;
    const std::size_t n = vertices.size();
    double orientation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = vertices[i];
      const Point& b = vertices[(i + 1) % n];
      orientation += (b.x - a.x) * (b.y + a.y);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = vertices[i];
      const Point& b = vertices[(i + 1) % n];
      const double ex = b.x - a.x, ey = b.y - a.y;
      const double len2 = ex * ex + ey * ey;
      const double t = std::clamp(((x - a.x) * ex + (y - a.y) * ey) / len2, 0.0, 1.0);
      best = std::min(best, std::hypot(x - (a.x + t * ex), y - (a.y + t * ey)));
      const double cross = ex * (y - a.y) - ey * (x - a.x);
      if ((orientation < 0 ? cross < 0 : cross > 0)) inside = false;
    }
    return inside ? best : -best;
  }
};

struct Marking {
  Occluder shape;
  Rgb color;
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  std::vector<Occluder> occluders;
  Point light_offset{30.0, 30.0};
  double attenuation = 0.5;
  double penumbra = 0.0;
  Rgb background{180, 170, 150};
  Rgb object{60, 90, 170};
  double noise = 0.0;
  /// Flat albedo patches painted on the ground; they receive shadow like the
  /// background but are not part of the groundtruth.
  std::vector<Marking> markings;
  /// Multiplicative albedo texture: a Gaussian-smoothed white-noise field
  /// (smoothing sigma `texture_scale`) rescaled to standard deviation
  /// `texture`.
  double texture = 0.0;
  double texture_scale = 1.5;

  void validate() const {
    require(width >= 1 && height >= 1, "config", "scene canvas must be non-empty");
    require(!occluders.empty(), "config", "scene needs at least one occluder");
    require(attenuation > 0.0 && attenuation < 1.0, "config", "attenuation must lie in (0, 1)");
    require(penumbra >= 0.0, "config", "penumbra must be >= 0");
    require(noise >= 0.0, "config", "noise must be >= 0");
    require(texture >= 0.0 && texture_scale > 0.0, "config", "texture amplitude must be >= 0 and scale > 0");
  }
};

struct Scene {
  RgbImage image;
  Mask shadow;
  EdgeMap edges;
};

inline double union_distance(const std::vector<Occluder>& shapes, double x, double y) {
  double d = -std::numeric_limits<double>::infinity();
  for (const auto& o : shapes) d = std::max(d, o.signed_distance(x, y));
  return d;
}

inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  Scene s{RgbImage(w, h), Mask(w, h), EdgeMap(w, h)};
  FloatMap shade_factor(w, h, 1.0);
  Mask occluder(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double occ = union_distance(spec.occluders, x, y);
      const double cast = union_distance(spec.occluders, x - spec.light_offset.x, y - spec.light_offset.y);
      occluder(x, y) = occ >= 0.0;
      s.shadow(x, y) = cast >= 0.0 && occ < 0.0;
      double ramp;
      if (spec.penumbra > 0.0)
        ramp = std::clamp(0.5 + cast / spec.penumbra, 0.0, 1.0);
      else
        ramp = cast >= 0.0 ? 1.0 : 0.0;
      shade_factor(x, y) = 1.0 - (1.0 - spec.attenuation) * ramp;
    }
  require(count_set(s.shadow) > 0, "degenerate_scene", "shadow falls entirely outside the canvas or under occluders");

  Rng rng(seed);
  FloatMap grain(w, h, 1.0);
  if (spec.texture > 0.0) {
    FloatMap white(w, h);
    for (double& v : white.pixels) v = rng.normal();
    grain = shade::detail::gaussian_blur(white, spec.texture_scale);
    double var = 0.0;
    for (double v : grain.pixels) var += v * v;
    const double sd = std::sqrt(var / grain.pixels.size());
    for (double& v : grain.pixels) v = std::max(0.0, 1.0 + spec.texture * v / sd);
  }
  auto channel = [&](double v) {
    if (spec.noise > 0.0) v += spec.noise * rng.normal();
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Rgb albedo = spec.background;
      for (const auto& m : spec.markings)
        if (m.shape.signed_distance(x, y) >= 0.0) albedo = m.color;
      if (occluder(x, y)) albedo = spec.object;
      const double f = (occluder(x, y) ? 1.0 : shade_factor(x, y)) * grain(x, y);
      s.image(x, y) = {channel(albedo.r * f), channel(albedo.g * f), channel(albedo.b * f)};
    }
  s.edges = region_mask_to_edge_gt(s.shadow);
  return s;
}

namespace detail {

inline Rgb random_color(Rng& rng, int lo, int hi) {
  return {static_cast<std::uint8_t>(lo + rng.below(hi - lo + 1)), static_cast<std::uint8_t>(lo + rng.below(hi - lo + 1)),
          static_cast<std::uint8_t>(lo + rng.below(hi - lo + 1))};
}

// The object colour must not pass for a shadowed (or brightened) copy of the
// background, otherwise occluder outlines would be genuine shadow-like edges.
inline bool distinct_from_background(Rgb object, Rgb background) {
  const Lab o = srgb_to_lab(object);
  for (double a = 0.2; a <= 1.5; a += 0.05) {
    auto scale = [a](std::uint8_t v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * a), 0L, 255L)); };
    if (lab_distance(o, srgb_to_lab({scale(background.r), scale(background.g), scale(background.b)})) < 30.0)
      return false;
  }
  return true;
}

inline Occluder random_shape(Rng& rng, double cx, double cy, double r) {
  if (rng.uniform() < 0.5) return Occluder::disc(cx, cy, r);
  const int n = 3 + static_cast<int>(rng.below(4));
  std::vector<double> angles(n);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  for (int i = 0; i < n; ++i) angles[i] = phase + 6.283185307179586 * (i + rng.uniform(0.15, 0.85)) / n;
  std::vector<Point> v;
  for (double a : angles) v.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  return Occluder::polygon(std::move(v));
}

}  // namespace detail

/// Randomized scene drawn from the suite distribution: one to three cast
/// shadows, detached from their occluders and clear of the patch border
/// margin, on a textured ground with up to six painted markings.
inline SceneSpec random_scene_spec(std::uint64_t seed, int width = 160, int height = 160) {
  Rng rng(seed);
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.background = detail::random_color(rng, 120, 235);
  do {
    spec.object = detail::random_color(rng, 20, 235);
  } while (!detail::distinct_from_background(spec.object, spec.background));
  spec.attenuation = rng.uniform(0.4, 0.6);
  spec.penumbra = rng.uniform(0.0, 2.0);
  spec.noise = rng.uniform(1.5, 3.5);
  spec.texture = Rng(derive_seed(seed, 3)).uniform(0.05, 0.12);

  const int count = 1 + static_cast<int>(rng.below(3));
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double margin = kBorderMargin + 4.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    spec.occluders.clear();
    std::vector<double> radii;
    for (int i = 0; i < count; ++i) radii.push_back(rng.uniform(16.0, 36.0));
    const double rmax = *std::max_element(radii.begin(), radii.end());
    const double dist = 2.0 * rmax + rng.uniform(6.0, 14.0);
    spec.light_offset = {dist * std::cos(angle), dist * std::sin(angle)};
    bool ok = true;
    // Occluders may sit partly or wholly outside the canvas.
    for (int i = 0; i < count && ok; ++i) {
      const double r = radii[i];
      if (width - 2 * (margin + r) < 0 || height - 2 * (margin + r) < 0) {
        ok = false;
        break;
      }
      const double sx = rng.uniform(margin + r, width - margin - r), sy = rng.uniform(margin + r, height - margin - r);
      spec.occluders.push_back(detail::random_shape(rng, sx - spec.light_offset.x, sy - spec.light_offset.y, r));
    }
    if (!ok) continue;
    // Every shadow must stay at least 4 px away from every occluder.
    for (int y = 0; y < height && ok; ++y)
      for (int x = 0; x < width && ok; ++x)
        if (union_distance(spec.occluders, x - spec.light_offset.x, y - spec.light_offset.y) >= -1.0 &&
            union_distance(spec.occluders, x, y) >= -4.0)
          ok = false;
    if (!ok) continue;
    // Markings come from their own stream so occluder placement does not
    // depend on them.
    Rng mrng(derive_seed(seed, 2));
    const int n_mark = static_cast<int>(mrng.below(7));
    for (int i = 0; i < n_mark; ++i) {
      const double r = mrng.uniform(4.0, 12.0);
      const double x = mrng.uniform(0.0, width), y = mrng.uniform(0.0, height);
      // Per-channel factors: some markings look like a plain darkening.
      std::array<double, 3> f;
      for (double& v : f) v = mrng.uniform(0.55, 1.2);
      auto scale = [](std::uint8_t v, double k) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * k), 0L, 255L)); };
      const Rgb c{scale(spec.background.r, f[0]), scale(spec.background.g, f[1]), scale(spec.background.b, f[2])};
      spec.markings.push_back({detail::random_shape(mrng, x, y, r), c});
    }
    return spec;
  }
  throw Error("degenerate_scene", "could not place occluders for seed " + std::to_string(seed));
}

inline std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", index);
  return buf;
}

/// Writes `count` scenes in the dataset layout (images/, masks/, edges/).
/// Scene i uses spec and noise seeds derived from (base_seed, i).
inline DatasetManifest generate_suite(int count, std::uint64_t base_seed, const std::filesystem::path& out_dir,
                                      int width = 160, int height = 160) {
  namespace fs = std::filesystem;
  require(count >= 1, "config", "suite count must be >= 1");
  std::error_code ec;
  for (const char* sub : {"images", "masks", "edges"}) {
    fs::create_directories(out_dir / sub, ec);
    require(!ec && fs::is_directory(out_dir / sub), "io", "cannot create " + (out_dir / sub).string());
  }
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
    const Scene scene = generate_scene(random_scene_spec(seed, width, height), derive_seed(seed, 1));
    const std::string name = scene_stem(i) + ".png";
    png::write_rgb((out_dir / "images" / name).string(), scene.image);
    png::write_mask((out_dir / "masks" / name).string(), scene.shadow);
    png::write_mask((out_dir / "edges" / name).string(), scene.edges);
  }
  return load_manifest(out_dir);
}

}  // namespace shade::synth
