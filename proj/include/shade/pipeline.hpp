#pragma once

// Image -> shadow edges -> superpixels -> measures -> shadow map.

#include "shade/canny.hpp"
#include "shade/config.hpp"
#include "shade/measures.hpp"
#include "shade/shadowopt.hpp"
#include "shade/strcnn.hpp"
#include "shade/structvote.hpp"
#include "shade/superpix.hpp"

namespace shade {

struct EdgeDetection {
  EdgeMap canny;
  EdgeProbabilityMap probability;
  EdgeMap edges;
};

inline EdgeDetection detect_edges(const cnn::CnnModel& model, const RgbImage& image, const Config& config) {
  EdgeDetection d;
  d.canny = canny(image, config.canny_params());
  d.probability = predict_structured(model, image, d.canny);
  d.edges = threshold_edges(d.probability, config.vote_threshold);
  return d;
}

struct ShadowResult {
  SuperpixelSegmentation seg;
  BoundarySets bounds;
  MeasureSet measures;
  EnergyWeights weights;
  ShadowMap map;
  double energy = 0.0;
};

/// Everything after the shadow edges are known.
inline ShadowResult optimize_from_edges(const RgbImage& image, const EdgeMap& shadow_edges, const Config& config) {
  require_same_size(image, shadow_edges, "optimize_from_edges");
  ShadowResult r;
  r.seg = segment(image, config.segment_params());
  r.bounds = classify_boundaries(r.seg, shadow_edges, config.boundary_params());
  r.measures = compute_measures(r.seg, r.bounds, config.measure_params(image.width, image.height));
  r.weights = build_weights(r.measures, r.seg, r.bounds, config.opt_params());
  const auto sys = assemble_system(r.weights);
  const Eigen::VectorXd s = solve(sys.A, sys.b);
  r.energy = energy(r.weights, s);
  r.map = rasterize(std::vector<double>(s.data(), s.data() + s.size()), r.seg, config.mask_threshold);
  return r;
}

}  // namespace shade
