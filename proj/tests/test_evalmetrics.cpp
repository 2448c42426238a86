#include <gtest/gtest.h>

#include "shade/evalmetrics.hpp"
#include "test_util.hpp"

using namespace shade;

namespace {

Mask left_half(int w, int h) {
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) m(x, y) = 1;
  return m;
}

// Probability a random positive outranks a random negative, ties counted half.
double rank_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& g) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (g[i] && !g[j]) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST(Confusion, IdentityAndComplement) {
  const Mask gt = left_half(10, 10);
  const auto same = confusion(gt, gt);
  EXPECT_EQ(*same.shadow_accuracy(), 1.0);
  EXPECT_EQ(*same.nonshadow_accuracy(), 1.0);
  Mask inv = gt;
  for (auto& v : inv.pixels) v = !v;
  const auto c = confusion(inv, gt);
  EXPECT_EQ(*c.shadow_accuracy(), 0.0);
  EXPECT_EQ(*c.nonshadow_accuracy(), 0.0);
  EXPECT_EQ(*c.overall(), 0.0);
}

TEST(Confusion, HalfImageAllShadow) {
  const Mask gt = left_half(10, 10);
  Mask pred(10, 10);
  std::fill(pred.pixels.begin(), pred.pixels.end(), 1);
  const auto c = confusion(pred, gt);
  EXPECT_EQ(c.tp, 50u);
  EXPECT_EQ(c.fp, 50u);
  EXPECT_EQ(c.total(), 100u);
  EXPECT_EQ(*c.shadow_accuracy(), 1.0);
  EXPECT_EQ(*c.nonshadow_accuracy(), 0.0);
  EXPECT_EQ(*c.overall(), 0.5);
}

TEST(Confusion, NoShadowIsNotApplicable) {
  Mask gt(4, 4), pred(4, 4);
  pred(1, 1) = 1;
  const auto c = confusion(pred, gt);
  EXPECT_FALSE(c.shadow_accuracy().has_value());
  EXPECT_NEAR(*c.nonshadow_accuracy(), 15.0 / 16, 1e-15);
}

TEST(Confusion, ValidMaskAndErrors) {
  const Mask gt = left_half(4, 2);
  Mask pred(4, 2), valid(4, 2);
  valid(0, 0) = valid(3, 1) = 1;
  const auto c = confusion(pred, gt, &valid);
  EXPECT_EQ(c.total(), 2u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_THROW(confusion(Mask(3, 3), gt), Error);
}

TEST(Roc, HandCase) {
  const auto r = roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.1}, std::vector<std::uint8_t>{1, 1, 0, 0});
  EXPECT_EQ(*r.auc, 1.0);
  EXPECT_EQ(*r.auc_grid, 1.0);
}

TEST(Roc, PerfectAndConstant) {
  const Mask gt = left_half(8, 8);
  FloatMap soft(8, 8);
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) soft.pixels[i] = gt.pixels[i];
  EXPECT_EQ(*roc_auc(soft, gt).auc, 1.0);
  std::fill(soft.pixels.begin(), soft.pixels.end(), 0.3);
  const auto r = roc_auc(soft, gt);
  EXPECT_EQ(*r.auc, 0.5);
  EXPECT_EQ(*r.auc_grid, 0.5);
}

TEST(Roc, CurveEndpointsAndMonotone) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 5 + static_cast<int>(rng.below(200));
    std::vector<double> s(n);
    std::vector<std::uint8_t> g(n);
    for (int i = 0; i < n; ++i) {
      g[i] = rng.below(2);
      s[i] = rng.uniform(-0.2, 1.2);
    }
    const auto r = roc_auc(s, g, 2 + static_cast<int>(rng.below(300)));
    ASSERT_GE(r.curve.size(), 2u);
    EXPECT_EQ(r.curve.front().fpr, 1.0);
    EXPECT_EQ(r.curve.front().tpr, 1.0);
    EXPECT_EQ(r.curve.back().fpr, 0.0);
    EXPECT_EQ(r.curve.back().tpr, 0.0);
    for (std::size_t k = 1; k < r.curve.size(); ++k) {
      EXPECT_LE(r.curve[k].fpr, r.curve[k - 1].fpr);
      EXPECT_LE(r.curve[k].tpr, r.curve[k - 1].tpr);
      EXPECT_GE(r.curve[k].threshold, r.curve[k - 1].threshold);
    }
  }
}

TEST(Roc, ExactAucMatchesRankStatistic) {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(60));
    std::vector<double> s(n);
    std::vector<std::uint8_t> g(n);
    for (int i = 0; i < n; ++i) {
      g[i] = i < 2 ? i : rng.below(2);
      s[i] = std::round(rng.uniform() * 10) / 10;  // plenty of ties
    }
    EXPECT_NEAR(*roc_auc(s, g).auc, rank_auc(s, g), 1e-12);
  }
}

TEST(Roc, InvariantUnderMonotoneRescaling) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 50;
    std::vector<double> s(n), t(n);
    std::vector<std::uint8_t> g(n);
    for (int i = 0; i < n; ++i) {
      g[i] = i < 2 ? i : rng.below(2);
      s[i] = rng.uniform();
      t[i] = std::pow(s[i], 3.0) * 0.5 + 0.1;
    }
    EXPECT_NEAR(*roc_auc(s, g).auc, *roc_auc(t, g).auc, 1e-12);
  }
}

TEST(Roc, SingleClassAndErrors) {
  const auto r = roc_auc(std::vector<double>{0.1, 0.9}, std::vector<std::uint8_t>{0, 0});
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_FALSE(r.curve.empty());
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1}, 1), Error);
  EXPECT_THROW(roc_auc(std::vector<double>{NAN}, std::vector<std::uint8_t>{1}), Error);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1}), Error);
}

TEST(Roc, Csv) {
  const auto r = roc_auc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}, 3);
  const auto csv = roc_csv(r);
  EXPECT_EQ(csv.rfind("threshold,fpr,tpr\n", 0), 0u);
  EXPECT_NE(csv.find("inf,0,0\n"), std::string::npos);
}

TEST(Report, EmptyMetricsHasConfigAndReference) {
  nlohmann::ordered_json cfg{{"lambda", 0.001}};
  const auto j = report(Metrics{}, cfg);
  EXPECT_EQ(j["config"], cfg);
  EXPECT_FALSE(j.contains("metrics"));
  const auto& ref = j["literature_reference"];
  EXPECT_NE(ref["label"].get<std::string>().find("not measured"), std::string::npos);
  ASSERT_EQ(ref["values"].size(), 3u);
  EXPECT_EQ(ref["values"][0]["value"], 0.931);
  EXPECT_EQ(ref["values"][1]["value"], 0.934);
  EXPECT_EQ(ref["values"][2]["value"], 0.940);
  for (const auto& v : ref["values"]) EXPECT_TRUE(v.contains("source"));
}

TEST(Report, RoundTrip) {
  Rng rng(4);
  Metrics m;
  for (int i = 0; i < 5; ++i) {
    ImageMetrics im;
    im.stem = "img" + std::to_string(i);
    im.counts = {rng.below(100), rng.below(100), rng.below(100), i == 2 ? 0 : rng.below(100)};
    if (i != 3) {
      im.auc = rng.uniform();
      im.auc_grid = rng.uniform();
    }
    m.images.push_back(im);
  }
  m.mean = mean_metrics(m.images);
  m.pooled = m.images[0];
  const auto j = nlohmann::json::parse(report(m, {}).dump());
  EXPECT_EQ(metrics_from_json(j["metrics"]), m);
}

TEST(Report, MeanSkipsNotApplicable) {
  ImageMetrics a{"a", {10, 0, 10, 0}, 1.0, 1.0}, b{"b", {0, 5, 15, 0}, std::nullopt, std::nullopt};
  const auto mean = mean_metrics({a, b});
  EXPECT_EQ(*mean.shadow_accuracy, 1.0);
  EXPECT_NEAR(*mean.nonshadow_accuracy, 0.875, 1e-15);
  EXPECT_EQ(*mean.auc, 1.0);
  EXPECT_NEAR(*mean.overall, (1.0 + 0.75) / 2, 1e-15);
}

TEST(Report, UnwritablePath) {
  EXPECT_THROW(write_report("/nonexistent_dir/x/eval.json", Metrics{}, {}), Error);
}

TEST(Evaluate, ImageWithSoft) {
  const Mask gt = left_half(6, 6);
  FloatMap soft(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) soft(x, y) = 1.0 - x / 6.0;
  const auto m = evaluate_image("s", gt, gt, &soft);
  EXPECT_EQ(*m.auc, 1.0);
  EXPECT_EQ(*m.counts.overall(), 1.0);
  EXPECT_FALSE(evaluate_image("s", gt, gt, nullptr).auc.has_value());
}
