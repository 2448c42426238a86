#include <gtest/gtest.h>

#include <cmath>

#include "shade/structvote.hpp"
#include "test_util.hpp"

using namespace shade;

namespace {

// Zero weights; head biases make unit u output exactly sigmoid(logit[u]).
cnn::CnnModel bias_model(const std::vector<double>& probs) {
  auto m = cnn::zero_model(5);
  for (int u = 0; u < 25; ++u) m.params[cnn::kHeadB][2 * u] = std::log(probs[u] / (1 - probs[u]));
  return m;
}

RgbImage noise_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(w, h);
  for (auto& p : img.pixels)
    p = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
         static_cast<std::uint8_t>(rng.below(256))};
  return img;
}

}  // namespace

TEST(Vote, ConstantHalfModel) {
  const auto img = noise_image(40, 40, 1);
  EdgeMap e(40, 40);
  for (int x = 10; x < 30; ++x) e(x, 20) = 1;
  const auto map = predict_structured(cnn::zero_model(5), img, e);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      if (e(x, y) && x >= 14 && x <= 25) {
        EXPECT_EQ(map.probability(x, y), 0.5);
      }
      if (!e(x, y)) {
        EXPECT_EQ(map.probability(x, y), 0.0);
        EXPECT_EQ(map.votes(x, y), 0);
      }
      EXPECT_LE(map.votes(x, y), 25);
    }
}

TEST(Vote, TwoPatchesAverage) {
  std::vector<double> p(25, 0.5);
  p[12] = 0.8;  // centre cell
  p[13] = 0.2;  // one to the right
  p[11] = 0.8;  // one to the left
  const auto img = noise_image(40, 40, 2);
  EdgeMap e(40, 40);
  e(20, 20) = 1;
  e(21, 20) = 1;
  const auto map = predict_structured(bias_model(p), img, e);
  EXPECT_EQ(map.votes(21, 20), 2);
  EXPECT_NEAR(map.probability(21, 20), 0.5, 1e-12);
  EXPECT_EQ(map.votes(20, 20), 2);
  EXPECT_NEAR(map.probability(20, 20), 0.8, 1e-12);
}

TEST(Vote, IsolatedPixelHasOneVote) {
  const auto img = noise_image(60, 60, 3);
  EdgeMap e(60, 60);
  e(30, 30) = 1;
  e(20, 45) = 1;
  const auto map = predict_structured(cnn::zero_model(5), img, e);
  EXPECT_EQ(map.votes(30, 30), 1);
  EXPECT_EQ(map.votes(20, 45), 1);
}

TEST(Vote, PixelsWithoutFullPatchOnlyCollectNeighbourVotes) {
  const auto img = noise_image(40, 40, 4);
  EdgeMap e(40, 40);
  e(13, 20) = 1;  // too close to the border to be a centre
  e(14, 20) = 1;
  const auto map = predict_structured(cnn::zero_model(5), img, e);
  EXPECT_EQ(map.votes(13, 20), 1);
  EXPECT_EQ(map.votes(14, 20), 1);
  e(14, 20) = 0;
  EXPECT_EQ(predict_structured(cnn::zero_model(5), img, e).votes(13, 20), 0);
}

// Brute force: enumerate, for each pixel, every centre whose window covers it.
TEST(Vote, MatchesEnumeratedMeanAndBounds) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const auto img = noise_image(36, 36, 10 + seed);
    EdgeMap e(36, 36);
    for (auto& v : e.pixels) v = rng.uniform() < 0.25;
    auto model = cnn::make_model(5, {{128, 128, 128}, {70, 70, 70}}, 1.0, seed);
    const auto map = predict_structured(model, img, e);
    for (int qy = 0; qy < 36; ++qy)
      for (int qx = 0; qx < 36; ++qx) {
        std::vector<double> votes;
        if (e(qx, qy))
          for (int cy = qy - 2; cy <= qy + 2; ++cy)
            for (int cx = qx - 2; cx <= qx + 2; ++cx) {
              if (!e.inside(cx, cy) || !e(cx, cy) || !valid_center(cx, cy, 36, 36)) continue;
              Tensor patch = extract_patch(img, cx, cy);
              normalize_patch(patch, model.norm);
              votes.push_back(cnn::forward(model, patch)[(qy - cy + 2) * 5 + (qx - cx + 2)]);
            }
        ASSERT_EQ(map.votes(qx, qy), static_cast<int>(votes.size()));
        if (votes.empty()) {
          EXPECT_EQ(map.probability(qx, qy), 0.0);
          continue;
        }
        double sum = 0;
        for (double v : votes) sum += v;
        const double fused = map.probability(qx, qy);
        EXPECT_NEAR(fused, sum / votes.size(), 1e-12);
        EXPECT_GE(fused, *std::min_element(votes.begin(), votes.end()) - 1e-15);
        EXPECT_LE(fused, *std::max_element(votes.begin(), votes.end()) + 1e-15);
      }
  }
}

TEST(Vote, AblationModelVotesOnlyAtCentre) {
  const auto img = noise_image(40, 40, 5);
  EdgeMap e(40, 40);
  for (int x = 15; x < 25; ++x) e(x, 20) = 1;
  const auto map = predict_structured(cnn::zero_model(1), img, e);
  for (int x = 15; x < 25; ++x) EXPECT_EQ(map.votes(x, 20), 1);
}

TEST(Threshold, ZeroMarksAllVoted) {
  EdgeProbabilityMap m{FloatMap(3, 1), Raster<int>(3, 1)};
  m.votes(0, 0) = 1;
  m.votes(1, 0) = 2;
  m.probability(1, 0) = 0.3;
  const auto e = threshold_edges(m, 0.0);
  EXPECT_EQ(e.pixels, (std::vector<std::uint8_t>{1, 1, 0}));
}

TEST(Threshold, AboveOneClamps) {
  EdgeProbabilityMap m{FloatMap(3, 1), Raster<int>(3, 1, 1)};
  m.probability.pixels = {1.0, 0.999999, 0.2};
  EXPECT_EQ(threshold_edges(m, 1.5).pixels, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(Threshold, Monotone) {
  Rng rng(6);
  EdgeProbabilityMap m{FloatMap(30, 30), Raster<int>(30, 30)};
  for (std::size_t i = 0; i < m.probability.size(); ++i) {
    m.votes.pixels[i] = static_cast<int>(rng.below(3));
    if (m.votes.pixels[i]) m.probability.pixels[i] = rng.uniform();
  }
  for (int rep = 0; rep < 100; ++rep) {
    double t1 = rng.uniform(), t2 = rng.uniform();
    if (t1 > t2) std::swap(t1, t2);
    const auto a = threshold_edges(m, t1), b = threshold_edges(m, t2);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (b.pixels[i]) EXPECT_TRUE(a.pixels[i]);
  }
}

TEST(Isolated, CountsSingletons) {
  EdgeMap e(10, 10);
  e(0, 0) = 1;  // alone in the corner
  e(5, 5) = 1;  // diagonal pair
  e(6, 6) = 1;
  e(9, 2) = 1;  // alone on the border
  e(3, 8) = 1;  // two apart horizontally: both alone
  e(5, 8) = 1;
  EXPECT_EQ(count_isolated_pixels(e), 4u);
  EXPECT_EQ(count_isolated_pixels(EdgeMap(4, 4)), 0u);
}
