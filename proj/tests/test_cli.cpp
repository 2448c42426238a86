#include <gtest/gtest.h>

#include <sstream>

#include "shade/commands.hpp"
#include "test_util.hpp"

using namespace shade;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Every regular file under dir, relative path -> bytes.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).generic_string()] = testutil::read_file(e.path());
  return m;
}

bool single_json_error(const std::string& err, const std::string& code) {
  const auto last = err.find_last_of('\n', err.size() - 2);
  const std::string line = err.substr(last == std::string::npos ? 0 : last + 1);
  const auto j = nlohmann::json::parse(line, nullptr, false);
  return !j.is_discarded() && j.value("error", "") == code && j.contains("message");
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  testutil::TempDir t("cli_synth");
  const auto a = run({"synth", "--count", "1", "--seed", "7", "--out", (t / "a").string()});
  const auto b = run({"synth", "--count", "1", "--seed", "7", "--out", (t / "b").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0);
  const auto sa = snapshot(t / "a");
  EXPECT_EQ(sa, snapshot(t / "b"));
  EXPECT_TRUE(sa.count("images/scene_0000.png"));
  EXPECT_TRUE(sa.count("masks/scene_0000.png"));
  EXPECT_TRUE(sa.count("config.txt"));
  EXPECT_NE(a.err.find("resolved config"), std::string::npos);
  ASSERT_EQ(run({"synth", "--count", "1", "--seed", "8", "--out", (t / "c").string()}).code, 0);
  EXPECT_NE(sa.at("images/scene_0000.png"), snapshot(t / "c").at("images/scene_0000.png"));
}

TEST(Cli, OptimizeWithGroundtruthEdges) {
  testutil::TempDir t("cli_opt");
  ASSERT_EQ(run({"synth", "--count", "3", "--seed", "11", "--out", (t / "d").string()}).code, 0);
  const auto before = snapshot(t / "d");
  const auto r = run({"optimize", "--image", (t / "d" / "images").string(), "--edges", (t / "d" / "edges").string(),
                      "--gt", (t / "d").string(), "--out", (t / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(before, snapshot(t / "d"));
  double sum = 0;
  for (int i = 0; i < 3; ++i) {
    const std::string stem = synth::scene_stem(i);
    for (const char* suffix : {"_mask.png", "_soft.png", "_labels.png", "_superpixels.csv", "_measures.csv"})
      EXPECT_TRUE(fs::exists(t / "o" / (stem + suffix))) << stem << suffix;
    const auto j = nlohmann::json::parse(testutil::read_file(t / "o" / (stem + "_report.json")));
    EXPECT_EQ(j["config"]["lambda"], 0.001);
    sum += j["metrics"]["overall_accuracy"].get<double>();
  }
  EXPECT_GE(sum / 3, 0.95);

  const auto e = run({"eval", "--pred", (t / "o").string(), "--gt", (t / "d").string(), "--out", (t / "e").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ej = nlohmann::json::parse(testutil::read_file(t / "e" / "eval.json"));
  EXPECT_EQ(ej["metrics"]["per_image"].size(), 3u);
  EXPECT_FALSE(ej["metrics"]["pooled"]["auc"].is_null());
  EXPECT_TRUE(fs::exists(t / "e" / "roc.csv"));
  EXPECT_TRUE(ej.contains("literature_reference"));
}

TEST(Cli, TrainDetectSmoke) {
  testutil::TempDir t("cli_detect");
  ASSERT_EQ(run({"synth", "--count", "2", "--seed", "5", "--out", (t / "d").string()}).code, 0);
  const auto tr = run({"train", "--data", (t / "d").string(), "--out", (t / "m").string(), "--epochs", "2",
                       "--sample_max", "30"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(t / "m" / "model.scnn"));
  EXPECT_EQ(std::count_if(tr.err.begin(), tr.err.end(), [](char c) { return c == '\n'; }) > 2, true);
  const auto loss = testutil::read_file(t / "m" / "loss.csv");
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 3);

  const fs::path image = t / "d" / "images" / "scene_0001.png";
  const auto d = run({"detect", "--model", (t / "m" / "model.scnn").string(), "--image", image.string(), "--gt",
                      (t / "d" / "masks" / "scene_0001.png").string(), "--out", (t / "p").string()});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto mask = png::read_mask((t / "p" / "scene_0001_mask.png").string());
  EXPECT_EQ(mask.width, 160);
  const auto j = nlohmann::json::parse(testutil::read_file(t / "p" / "scene_0001_report.json"));
  EXPECT_EQ(j["stem"], "scene_0001");
  EXPECT_TRUE(j["metrics"]["overall_accuracy"].is_number());
  EXPECT_TRUE(fs::exists(t / "p" / "scene_0001_edges.png"));

  const auto de = run({"detect-edges", "--model", (t / "m" / "model.scnn").string(), "--image", image.string(),
                       "--out", (t / "q").string()});
  ASSERT_EQ(de.code, 0) << de.err;
  EXPECT_EQ(testutil::read_file(t / "q" / "scene_0001_edges.png"), testutil::read_file(t / "p" / "scene_0001_edges.png"));
}

TEST(Cli, GradcheckPasses) {
  const auto r = run({"gradcheck", "--seeds", "1", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max_relative_error"), std::string::npos);
}

TEST(Cli, HelpListsEveryKeyWithDefault) {
  const auto r = run({"detect", "--help"});
  EXPECT_EQ(r.code, 0);
  const Config defaults;
  for (const auto& f : config_detail::fields()) {
    const auto pos = r.out.find(std::string("--") + f.key);
    ASSERT_NE(pos, std::string::npos) << f.key;
    const auto eol = r.out.find('\n', pos);
    EXPECT_NE(r.out.substr(pos, eol - pos).find(get_value(defaults, f)), std::string::npos) << f.key;
  }
  EXPECT_NE(run({"--help"}).out.find("gradcheck"), std::string::npos);
}

TEST(Cli, ErrorsAreSingleJsonLines) {
  testutil::TempDir t("cli_err");
  auto r = run({"synth", "--count", "1", "--out", (t / "x").string(), "--no_such_key", "3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(single_json_error(r.err, "usage")) << r.err;

  const fs::path cfg = t / "bad.txt";
  std::ofstream(cfg) << "lambda = 0.5\nno_such_key = 3\n";
  r = run({"synth", "--count", "1", "--out", (t / "x").string(), "--config", cfg.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(single_json_error(r.err, "config")) << r.err;
  EXPECT_FALSE(fs::exists(t / "x"));

  r = run({"synth", "--count", "1", "--out", (t / "x").string(), "--sigma_con", "-1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(single_json_error(r.err, "config"));

  r = run({"optimize", "--image", (t / "missing.png").string(), "--edges", (t / "e.png").string(), "--out",
           (t / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(single_json_error(r.err, "io")) << r.err;

  r = run({});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, ConfigFileAndOverrides) {
  testutil::TempDir t("cli_cfg");
  const fs::path cfg = t / "c.txt";
  std::ofstream(cfg) << "# comment\nlambda = 0.5\nmu = 0.2   # trailing\nseed = 4\n";
  ASSERT_EQ(run({"synth", "--count", "1", "--out", (t / "o").string(), "--config", cfg.string(), "--mu", "0.3"}).code, 0);
  const Config c = load_config((t / "o" / "config.txt").string());
  EXPECT_EQ(c.lambda, 0.5);
  EXPECT_EQ(c.mu, 0.3);
  EXPECT_EQ(c.seed, 4u);
  // the written config reproduces the run
  ASSERT_EQ(run({"synth", "--count", "1", "--out", (t / "p").string(), "--config", (t / "o" / "config.txt").string()}).code, 0);
  EXPECT_EQ(snapshot(t / "o"), snapshot(t / "p"));
}

TEST(Config, TextRoundTripAndValidation) {
  Config c;
  c.lambda = 0.123456789012345;
  c.con_squared = true;
  c.seed = 18446744073709551615ull;
  c.label_size = 1;
  Config d;
  apply_text(d, to_text(c));
  EXPECT_EQ(c, d);
  EXPECT_EQ(d.seed, c.seed);
  Config bad;
  bad.canny_low = 0.3;
  EXPECT_THROW(bad.validate(), Error);
  bad = Config{};
  bad.label_size = 3;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(set_value(d, "epochs", "2.5"), Error);
  EXPECT_THROW(set_value(d, "seed", "-1"), Error);
  EXPECT_THROW(set_value(d, "con_squared", "maybe"), Error);
  EXPECT_THROW(apply_text(d, "lambda 3\n"), Error);
  EXPECT_NO_THROW(Config{}.validate());
}
