#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "shade/dataprep.hpp"
#include "shade/synthgen.hpp"
#include "test_util.hpp"

using namespace shade;
using namespace shade::synth;

namespace {

SceneSpec disc_spec() {
  SceneSpec s;
  s.width = 128;
  s.height = 128;
  s.occluders = {Occluder::disc(40, 40, 20)};
  s.light_offset = {30, 30};
  s.attenuation = 0.5;
  s.penumbra = 0.0;
  s.noise = 0.0;
  s.background = {200, 160, 120};
  s.object = {20, 40, 230};
  return s;
}

}  // namespace

TEST(Occluder, SignedDistance) {
  const auto d = Occluder::disc(0, 0, 5);
  EXPECT_DOUBLE_EQ(d.signed_distance(3, 0), 2.0);
  EXPECT_DOUBLE_EQ(d.signed_distance(0, -8), -3.0);
  for (bool ccw : {true, false}) {
    std::vector<Point> sq{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    if (!ccw) std::reverse(sq.begin(), sq.end());
    const auto p = Occluder::polygon(sq);
    EXPECT_DOUBLE_EQ(p.signed_distance(5, 5), 5.0);
    EXPECT_DOUBLE_EQ(p.signed_distance(2, 5), 2.0);
    EXPECT_DOUBLE_EQ(p.signed_distance(13, 5), -3.0);
    EXPECT_DOUBLE_EQ(p.signed_distance(13, 14), -5.0);
  }
}

TEST(Scene, DiscGeometricOracle) {
  const auto spec = disc_spec();
  const auto s = generate_scene(spec, 1);
  double in_sum = 0, out_sum = 0;
  int in_n = 0, out_n = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const bool occ = std::hypot(x - 40.0, y - 40.0) <= 20.0;
      const bool cast = std::hypot(x - 70.0, y - 70.0) <= 20.0;
      ASSERT_EQ(s.shadow(x, y) != 0, cast && !occ) << x << "," << y;
      if (occ) {
        EXPECT_EQ(s.image(x, y), spec.object);
        continue;
      }
      const auto& p = s.image(x, y);
      const double v = p.r + p.g + p.b;
      if (cast) {
        in_sum += v;
        ++in_n;
      } else {
        out_sum += v;
        ++out_n;
      }
    }
  EXPECT_NEAR(in_sum / in_n, spec.attenuation * (out_sum / out_n), 1e-9);
}

TEST(Scene, AttenuationToOneLimit) {
  auto spec = disc_spec();
  spec.attenuation = 1.0 - 1e-9;
  const auto s = generate_scene(spec, 1);
  EXPECT_GT(count_set(s.shadow), 0u);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (s.shadow(x, y)) EXPECT_EQ(s.image(x, y), spec.background);
}

TEST(Scene, EdgesMatchMaskBoundary) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = generate_scene(random_scene_spec(seed), seed);
    EXPECT_EQ(s.edges, region_mask_to_edge_gt(s.shadow));
  }
}

TEST(Scene, PenumbraRampIsMonotone) {
  auto spec = disc_spec();
  spec.penumbra = 4.0;
  const auto s = generate_scene(spec, 1);
  // Walk outward from the shadow centre along +x.
  int prev = 0;
  for (int x = 70; x < 100; ++x) {
    const int v = s.image(x, 70).r;
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_EQ(s.image(70, 70).r, 100);
  EXPECT_EQ(s.image(99, 70).r, 200);
  EXPECT_EQ(s.image(90, 70).r, 150);  // ramp midpoint on the geometric edge
}

TEST(Scene, NoiseIsSeeded) {
  auto spec = disc_spec();
  spec.noise = 3.0;
  spec.texture = 0.1;
  EXPECT_EQ(generate_scene(spec, 5).image, generate_scene(spec, 5).image);
  EXPECT_NE(generate_scene(spec, 5).image, generate_scene(spec, 6).image);
  // noise never touches the groundtruth
  EXPECT_EQ(generate_scene(spec, 5).shadow, generate_scene(disc_spec(), 0).shadow);
}

TEST(Scene, MarkingsChangeAlbedoOnly) {
  auto spec = disc_spec();
  spec.markings.push_back({Occluder::disc(70, 70, 6), Rgb{100, 100, 100}});
  spec.markings.push_back({Occluder::disc(100, 20, 6), Rgb{250, 250, 250}});
  const auto s = generate_scene(spec, 1);
  EXPECT_EQ(s.shadow, generate_scene(disc_spec(), 1).shadow);
  EXPECT_EQ(s.image(70, 70), (Rgb{50, 50, 50}));
  EXPECT_EQ(s.image(100, 20), (Rgb{250, 250, 250}));
}

TEST(Scene, DegenerateAndInvalid) {
  auto spec = disc_spec();
  spec.light_offset = {500, 0};
  try {
    generate_scene(spec, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "degenerate_scene");
  }
  spec = disc_spec();
  spec.occluders.clear();
  EXPECT_THROW(generate_scene(spec, 1), Error);
  spec = disc_spec();
  spec.attenuation = 1.0;
  EXPECT_THROW(generate_scene(spec, 1), Error);
  spec = disc_spec();
  spec.penumbra = -1;
  EXPECT_THROW(generate_scene(spec, 1), Error);
}

TEST(RandomSpec, ValidAndSeparated) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto spec = random_scene_spec(seed);
    ASSERT_NO_THROW(spec.validate());
    EXPECT_GE(spec.occluders.size(), 1u);
    EXPECT_LE(spec.occluders.size(), 3u);
    EXPECT_LE(spec.markings.size(), 6u);
    const auto s = generate_scene(spec, seed);
    EXPECT_GT(count_set(s.shadow), 0u);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        if (!s.shadow(x, y)) continue;
        EXPECT_LT(union_distance(spec.occluders, x, y), -3.0);
        // shadow clear of the patch border margin
        EXPECT_TRUE(valid_center(x, y, spec.width, spec.height)) << seed << ": " << x << "," << y;
      }
  }
}

TEST(Suite, CountOneWritesThreeFiles) {
  testutil::TempDir d("suite");
  const auto m = generate_suite(1, 9, d.path());
  ASSERT_EQ(m.entries.size(), 1u);
  int files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(d.path())) files += e.is_regular_file();
  EXPECT_EQ(files, 3);
  EXPECT_TRUE(m.entries[0].edges.has_value());
}

TEST(Suite, SameSeedSameBytes) {
  testutil::TempDir a("suite_a"), b("suite_b");
  generate_suite(3, 4, a.path());
  generate_suite(3, 4, b.path());
  for (const char* sub : {"images", "masks", "edges"})
    for (int i = 0; i < 3; ++i) {
      const std::string f = std::string(sub) + "/" + scene_stem(i) + ".png";
      EXPECT_EQ(testutil::read_bytes(a / f), testutil::read_bytes(b / f)) << f;
    }
}

TEST(Suite, TwentyDistinctSpecs) {
  testutil::TempDir d("suite");
  const auto m = generate_suite(20, 11, d.path());
  ASSERT_EQ(m.entries.size(), 20u);
  std::set<std::vector<char>> images;
  for (const auto& e : m.entries) images.insert(testutil::read_bytes(e.image));
  EXPECT_EQ(images.size(), 20u);
}

TEST(Suite, Errors) {
  testutil::TempDir d("suite");
  EXPECT_THROW(generate_suite(0, 1, d.path()), Error);
  std::ofstream(d / "file") << "x";
  EXPECT_THROW(generate_suite(1, 1, d / "file" / "sub"), Error);
}
