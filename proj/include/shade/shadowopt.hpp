#pragma once

// Least-squares shadow values over superpixels:
//
//   E(s) = sum_i w_shd_i s_i^2 + sum_i w_brt_i (1 - s_i)^2
//        + sum_{adjacent i<j} w_ij (s_i - s_j)^2
//        + lambda sum_{i in shd u lit} (s_i - anchor_i)^2
//
// Setting the gradient to zero gives A s = b with
//   A = diag(w_shd + w_brt + lambda [anchored] + ridge) + Laplacian(w_ij)
//   b = w_brt + lambda anchor.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "shade/error.hpp"
#include "shade/image.hpp"
#include "shade/measures.hpp"
#include "shade/superpix.hpp"

namespace shade {

struct PairWeight {
  int i, j;
  double w;
};

struct EnergyWeights {
  std::vector<double> w_shd, w_brt;
  std::vector<PairWeight> pairs;
  double lambda = 0.001;
  /// Anchor value per superpixel, set on shd (1) and lit (0) members only.
  std::vector<std::optional<double>> anchor;
  double ridge = 1e-9;

  int size() const { return static_cast<int>(w_shd.size()); }

  void validate() const {
    const auto n = w_shd.size();
    require(w_brt.size() == n && anchor.size() == n, "shape", "energy weight vectors differ in length");
    require(lambda >= 0.0, "config", "lambda must be >= 0");
    require(ridge > 0.0, "config", "ridge must be > 0");
    for (std::size_t i = 0; i < n; ++i)
      require(w_shd[i] >= 0.0 && w_brt[i] >= 0.0, "config", "unary weights must be >= 0");
    for (const auto& p : pairs) {
      require(p.w >= 0.0, "config", "smoothness weights must be >= 0");
      require(p.i >= 0 && p.j >= 0 && p.i < static_cast<int>(n) && p.j < static_cast<int>(n) && p.i != p.j,
              "shape", "smoothness pair out of range");
    }
  }
};

struct OptParams {
  double lambda = 0.001;
  double mu = 0.1;
  double sigma_clr = 5.0;
  double ridge = 1e-9;
};

/// Unary weights are the global measures; smoothness on adjacent pairs is
/// exp(-d_app^2 / (2 sigma_clr^2)) + mu.
inline EnergyWeights build_weights(const MeasureSet& measures, const SuperpixelSegmentation& seg,
                                   const BoundarySets& bounds, const OptParams& params) {
  require(measures.size() == seg.count, "shape", "measure set does not match the segmentation");
  EnergyWeights w;
  w.w_shd = measures.Gamma_shd;
  w.w_brt = measures.Gamma_lit;
  w.lambda = params.lambda;
  w.ridge = params.ridge;
  w.anchor.assign(seg.count, std::nullopt);
  for (int i : bounds.shd) w.anchor[i] = 1.0;
  for (int i : bounds.lit) w.anchor[i] = 0.0;
  for (auto [i, j] : seg.adjacent_pairs()) {
    const double d = lab_distance(seg.mean_lab[i], seg.mean_lab[j]);
    w.pairs.push_back({i, j, std::exp(-d * d / (2.0 * params.sigma_clr * params.sigma_clr)) + params.mu});
  }
  w.validate();
  return w;
}

struct LinearSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
};

inline LinearSystem assemble_system(const EnergyWeights& w) {
  w.validate();
  const int n = w.size();
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd diag(n), b(n);
  for (int i = 0; i < n; ++i) {
    diag[i] = w.w_shd[i] + w.w_brt[i] + w.ridge;
    b[i] = w.w_brt[i];
    if (w.anchor[i]) {
      diag[i] += w.lambda;
      b[i] += w.lambda * *w.anchor[i];
    }
  }
  for (const auto& p : w.pairs) {
    diag[p.i] += p.w;
    diag[p.j] += p.w;
    t.emplace_back(p.i, p.j, -p.w);
    t.emplace_back(p.j, p.i, -p.w);
  }
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, diag[i]);
  LinearSystem sys{Eigen::SparseMatrix<double>(n, n), b};
  sys.A.setFromTriplets(t.begin(), t.end());
  return sys;
}

inline double energy(const EnergyWeights& w, const Eigen::VectorXd& s) {
  require(s.size() == w.size(), "shape", "shadow vector length mismatch");
  double e = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    e += w.w_shd[i] * s[i] * s[i] + w.w_brt[i] * (1.0 - s[i]) * (1.0 - s[i]);
    if (w.anchor[i]) e += w.lambda * (s[i] - *w.anchor[i]) * (s[i] - *w.anchor[i]);
  }
  for (const auto& p : w.pairs) e += p.w * (s[p.i] - s[p.j]) * (s[p.i] - s[p.j]);
  return e;
}

inline constexpr double kResidualTolerance = 1e-8;
inline constexpr int kDirectSolveLimit = 5000;

/// Sparse LDL^T for up to 5000 unknowns, conjugate gradient beyond. A few
/// refinement steps follow so that ||A s - b||_inf < 1e-8.
inline Eigen::VectorXd solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b) {
  require(A.rows() == A.cols() && A.rows() == b.size(), "shape", "system dimensions disagree");
  for (Eigen::Index k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      require(std::isfinite(it.value()), "non_finite", "system matrix has a non-finite entry");
  require(b.allFinite(), "non_finite", "right-hand side has a non-finite entry");
  if (A.rows() == 0) return Eigen::VectorXd();

  Eigen::VectorXd s;
  auto residual = [&](const Eigen::VectorXd& x) { return (A * x - b).lpNorm<Eigen::Infinity>(); };
  if (A.rows() <= kDirectSolveLimit) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    require(ldlt.info() == Eigen::Success, "solve", "factorization failed (matrix not positive definite)");
    s = ldlt.solve(b);
    for (int k = 0; k < 3 && residual(s) >= kResidualTolerance; ++k) s += ldlt.solve(b - A * s);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg(A);
    cg.setTolerance(1e-14);
    cg.setMaxIterations(static_cast<Eigen::Index>(10 * A.rows()));
    s = cg.solve(b);
    for (int k = 0; k < 3 && residual(s) >= kResidualTolerance; ++k) s = cg.solveWithGuess(b, s);
  }
  require(s.allFinite(), "solve", "solution has non-finite entries");
  require(residual(s) < kResidualTolerance, "solve",
          "residual " + std::to_string(residual(s)) + " above tolerance");
  return s;
}

struct ShadowMap {
  std::vector<double> s;  // per superpixel, unclamped
  FloatMap soft;          // per pixel, clamped to [0, 1]
  Mask mask;
  double threshold = 0.5;
};

inline ShadowMap rasterize(const std::vector<double>& s, const SuperpixelSegmentation& seg, double threshold = 0.5) {
  require(threshold >= 0.0 && threshold <= 1.0, "config", "mask threshold must lie in [0, 1]");
  require(static_cast<int>(s.size()) == seg.count, "shape", "shadow vector does not match the segmentation");
  ShadowMap m{s, FloatMap(seg.width(), seg.height()), Mask(seg.width(), seg.height()), threshold};
  for (std::size_t i = 0; i < m.soft.pixels.size(); ++i) {
    const double v = std::clamp(s[seg.labels.pixels[i]], 0.0, 1.0);
    m.soft.pixels[i] = v;
    m.mask.pixels[i] = v >= threshold;
  }
  return m;
}

/// Assemble, solve and rasterize in one call.
inline ShadowMap optimize_shadows(const MeasureSet& measures, const SuperpixelSegmentation& seg,
                                  const BoundarySets& bounds, const OptParams& params, double threshold = 0.5) {
  const auto weights = build_weights(measures, seg, bounds, params);
  const auto sys = assemble_system(weights);
  const Eigen::VectorXd s = solve(sys.A, sys.b);
  return rasterize(std::vector<double>(s.data(), s.data() + s.size()), seg, threshold);
}

inline std::string shadow_values_csv(const ShadowMap& m, const SuperpixelSegmentation& seg) {
  std::string out = "id,s,area,centroid_x,centroid_y\n";
  for (int i = 0; i < seg.count; ++i)
    out += std::to_string(i) + "," + format_number(m.s[i]) + "," + std::to_string(seg.area[i]) + "," +
           format_number(seg.centroid[i][0]) + "," + format_number(seg.centroid[i][1]) + "\n";
  return out;
}

}  // namespace shade
