#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "shade/shadowopt.hpp"
#include "test_util.hpp"

using namespace shade;

namespace {

Eigen::MatrixXd dense(const Eigen::SparseMatrix<double>& a) { return Eigen::MatrixXd(a); }

EnergyWeights plain(int n) {
  EnergyWeights w;
  w.w_shd.assign(n, 0.0);
  w.w_brt.assign(n, 0.0);
  w.anchor.assign(n, std::nullopt);
  return w;
}

}  // namespace

TEST(Weights, DefaultsAndSmoothness) {
  SuperpixelSegmentation seg;
  seg.count = 3;
  seg.labels = LabelMap(3, 1);
  seg.labels.pixels = {0, 1, 2};
  seg.mean_lab = {{50, 0, 0}, {50, 0, 0}, {90, 0, 0}};
  seg.centroid = {{0, 0}, {1, 0}, {2, 0}};
  seg.area = {1, 1, 1};
  seg.neighbors = {{1}, {0}, {}};
  MeasureSet m;
  m.Gamma_shd = {0.1, 0.2, 0.3};
  m.Gamma_lit = {0.9, 0.8, 0.7};
  m.con_shd.assign(3, 0.0);
  BoundarySets b;
  b.shd = {0};
  b.lit = {2};
  const OptParams params;
  EXPECT_EQ(params.lambda, 0.001);
  const auto w = build_weights(m, seg, b, params);
  ASSERT_EQ(w.pairs.size(), 1u);  // 0-1 only; 2 has no neighbours
  EXPECT_NEAR(w.pairs[0].w, 1.1, 1e-15);
  EXPECT_EQ(w.w_shd, m.Gamma_shd);
  EXPECT_EQ(w.w_brt, m.Gamma_lit);
  EXPECT_EQ(w.anchor[0], 1.0);
  EXPECT_FALSE(w.anchor[1].has_value());
  EXPECT_EQ(w.anchor[2], 0.0);
}

TEST(System, GradientOracle) {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(12));
    const auto w = oracle::random_energy(rng, n);
    const auto sys = assemble_system(w);
    const Eigen::MatrixXd A = dense(sys.A);
    EXPECT_EQ(A, A.transpose());
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = rng.uniform(-1, 2);
    const Eigen::VectorXd g = A * s - sys.b;
    const Eigen::VectorXd fd = oracle::half_fd_gradient(w, s);
    EXPECT_LT((g - fd).lpNorm<Eigen::Infinity>(), 1e-8) << rep;
    // library energy omits only the ridge term
    EXPECT_NEAR(energy(w, s) + w.ridge * s.squaredNorm(), oracle::energy_with_ridge(w, s), 1e-12);
  }
}

TEST(System, PureBrightPull) {
  auto w = plain(4);
  w.w_brt.assign(4, 1.0);
  const auto sys = assemble_system(w);
  EXPECT_TRUE(dense(sys.A).isApprox(Eigen::MatrixXd::Identity(4, 4) * (1 + w.ridge)));
  EXPECT_EQ(sys.b, Eigen::VectorXd::Ones(4));
  const auto s = solve(sys.A, sys.b);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s[i], 1.0, 1e-8);
}

TEST(Solve, IdentityAndHandSystem) {
  Eigen::SparseMatrix<double> I(3, 3);
  I.setIdentity();
  const Eigen::Vector3d v(0.3, -2, 7);
  EXPECT_TRUE(solve(I, v).isApprox(v));
  Eigen::SparseMatrix<double> A(2, 2);
  A.insert(0, 0) = 2;
  A.insert(0, 1) = -1;
  A.insert(1, 0) = -1;
  A.insert(1, 1) = 2;
  const auto s = solve(A, Eigen::Vector2d(1, 1));
  EXPECT_NEAR(s[0], 1.0, 1e-14);
  EXPECT_NEAR(s[1], 1.0, 1e-14);
}

TEST(Solve, RejectsNonFinite) {
  Eigen::SparseMatrix<double> A(2, 2);
  A.insert(0, 0) = std::nan("");
  A.insert(1, 1) = 1;
  try {
    solve(A, Eigen::Vector2d(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "non_finite");
  }
  Eigen::SparseMatrix<double> I(2, 2);
  I.setIdentity();
  EXPECT_THROW(solve(I, Eigen::Vector2d(1, INFINITY)), Error);
}

TEST(Solve, ResidualAndMinimality) {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(12));
    const auto w = oracle::random_energy(rng, n);
    const auto sys = assemble_system(w);
    const Eigen::VectorXd s = solve(sys.A, sys.b);
    EXPECT_LT((sys.A * s - sys.b).lpNorm<Eigen::Infinity>(), 1e-8);
    const double e0 = oracle::energy_with_ridge(w, s);
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd d(n);
      for (int i = 0; i < n; ++i) d[i] = rng.normal();
      d *= 0.1 / d.norm();
      EXPECT_LE(e0, oracle::energy_with_ridge(w, s + d));
    }
  }
}

TEST(Solve, LargeSystemUsesIterativePath) {
  const int n = 6000;
  auto w = plain(n);
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    w.w_shd[i] = rng.uniform();
    w.w_brt[i] = rng.uniform();
  }
  for (int i = 0; i + 1 < n; ++i) w.pairs.push_back({i, i + 1, rng.uniform(0, 2)});
  const auto sys = assemble_system(w);
  const auto s = solve(sys.A, sys.b);
  EXPECT_LT((sys.A * s - sys.b).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Energy, ScalarCases) {
  auto w = plain(3);
  w.lambda = 0;
  EXPECT_EQ(energy(w, Eigen::Vector3d(0.3, 0.9, -1)), 0.0);
  auto one = plain(1);
  one.w_shd = {1.0};
  one.lambda = 0;
  EXPECT_EQ(energy(one, Eigen::VectorXd::Constant(1, 0.5)), 0.25);
  auto smooth = plain(3);
  smooth.pairs = {{0, 1, 2.0}, {1, 2, 0.5}};
  EXPECT_EQ(energy(smooth, Eigen::Vector3d::Constant(0.7)), 0.0);
  EXPECT_THROW(energy(smooth, Eigen::Vector2d(1, 1)), Error);
}

TEST(Energy, AnchorFidelity) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto w = oracle::random_energy(rng, 10);
    w.lambda = 1e3;
    const auto sys = assemble_system(w);
    const auto s = solve(sys.A, sys.b);
    for (int i = 0; i < 10; ++i)
      if (w.anchor[i]) EXPECT_NEAR(s[i], *w.anchor[i], 0.01);
  }
}

TEST(Weights, Validation) {
  auto w = plain(2);
  w.ridge = 0;
  EXPECT_THROW(assemble_system(w), Error);
  w = plain(2);
  w.pairs = {{0, 0, 1.0}};
  EXPECT_THROW(assemble_system(w), Error);
  w = plain(2);
  w.w_shd[1] = -1;
  EXPECT_THROW(assemble_system(w), Error);
}

TEST(Rasterize, Cases) {
  SuperpixelSegmentation seg;
  seg.count = 2;
  seg.labels = LabelMap(4, 2);
  seg.labels.pixels = {0, 0, 1, 1, 0, 1, 1, 1};
  const auto m = rasterize({0.2, 0.8}, seg);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(m.mask.pixels[i], seg.labels.pixels[i] == 1);
    EXPECT_EQ(m.soft.pixels[i], seg.labels.pixels[i] ? 0.8 : 0.2);
  }
  const auto full = rasterize({1.0, 1.0}, seg);
  for (auto v : full.mask.pixels) EXPECT_EQ(v, 1);
  const auto clamped = rasterize({-0.5, 1.7}, seg, 0.3);
  EXPECT_EQ(clamped.soft.pixels[0], 0.0);
  EXPECT_EQ(clamped.soft.pixels[2], 1.0);
  EXPECT_EQ(clamped.s[1], 1.7);
  EXPECT_THROW(rasterize({0.1}, seg), Error);
  EXPECT_THROW(rasterize({0.1, 0.2}, seg, 1.5), Error);
}
