#include "synthdet/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "small_corpus.hpp"

namespace fs = std::filesystem;
using synthdet::cli::CommandResult;

namespace {

struct Run {
  CommandResult result;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  auto r = synthdet::cli::run(args, out, err);
  return {std::move(r), out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

fs::path corpus_manifest() { return small_corpus().root / "manifest.json"; }

// One fast checkpoint shared by the CLI tests.
const fs::path& trained_model() {
  static const fs::path path = [] {
    const auto dir = fs::temp_directory_path() / "synthdet_cli_model";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "cfg.json") << R"({"epochs": 1, "batch_size": 16, "autoencoder": {"steps": 100}})";
    const auto r = run({"train", "--manifest", corpus_manifest().string(), "--config", (dir / "cfg.json").string(),
                        "--out", (dir / "model.sdw").string(), "--seed", "3"});
    EXPECT_EQ(r.result.exit_code, 0) << r.err;
    return dir / "model.sdw";
  }();
  return path;
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsage) {
  const auto r = run({});
  EXPECT_EQ(r.result.exit_code, 2);
  EXPECT_NE(r.err.find("predict"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndBadFlagsAreUsageErrors) {
  EXPECT_EQ(run({"frobnicate"}).result.exit_code, 2);
  const auto bad = run({"eval", "--model", "m", "--manifest", "x", "--bogus"});
  EXPECT_EQ(bad.result.exit_code, 2);
  EXPECT_NE(bad.err.find("--manifest"), std::string::npos) << "usage text expected";
  EXPECT_EQ(run({"robustness", "--model", "m", "--manifest", "x", "--kind", "blur", "--grid", "0.5:3:4"}).result.exit_code, 2);
  EXPECT_EQ(run({"train", "--manifest", "x", "--fusion-mode", "avg", "--out", "o"}).result.exit_code, 2);
}

TEST(Cli, MissingFilesAreRuntimeErrors) {
  const auto r = run({"eval", "--model", "/nonexistent.sdw", "--manifest", corpus_manifest().string()});
  EXPECT_EQ(r.result.exit_code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"robustness", "--help"});
  EXPECT_EQ(r.result.exit_code, 0);
  EXPECT_NE(r.out.find("--grid"), std::string::npos);
}

TEST(Cli, ManifestFromRules) {
  const auto root = fs::temp_directory_path() / "synthdet_cli_manifest";
  fs::remove_all(root);
  fs::create_directories(root / "r");
  fs::create_directories(root / "s");
  for (int i = 0; i < 5; ++i) {
    synthdet::save_image(synthdet::Image(8, 8, 3, 0.1f * i), root / "r" / (std::to_string(i) + ".png"));
    synthdet::save_image(synthdet::Image(8, 8, 3, 0.1f * i + 0.05f), root / "s" / (std::to_string(i) + ".png"));
  }
  const auto r = run({"manifest", "--root", root.string(), "--rule", "r=real:cam", "--rule", "s=synthetic:gen", "--seed",
                      "2"});
  ASSERT_EQ(r.result.exit_code, 0) << r.err;
  ASSERT_EQ(r.result.artifacts_written.size(), 1u);
  const auto m = synthdet::load_manifest(r.result.artifacts_written[0]);
  EXPECT_EQ(m.records.size(), 10u);
  EXPECT_EQ(run({"manifest", "--root", root.string()}).result.exit_code, 2);
}

TEST(Cli, PredictPrintsOneRecordPerImage) {
  const auto& m = small_corpus();
  const auto a = m.resolve(m.records[0]).string(), b = m.resolve(m.records.back()).string();
  const auto r = run({"predict", "--model", trained_model().string(), "--input", a, b});
  ASSERT_EQ(r.result.exit_code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const double score = j["score"];
    EXPECT_TRUE(score >= 0.0 && score <= 1.0);
    EXPECT_EQ(j["label"], score >= 0.5 ? 1 : 0);
    EXPECT_EQ(j["path"], n == 0 ? a : b);
    ++n;
  }
  EXPECT_EQ(n, 2);
}

TEST(Cli, EvalOutputsAreByteIdenticalOnRerun) {
  const auto dir = fs::temp_directory_path() / "synthdet_cli_eval";
  fs::create_directories(dir);
  auto once = [&](const std::string& name) {
    const auto r = run({"eval", "--model", trained_model().string(), "--manifest", corpus_manifest().string(), "--transform",
                        "noise:0.1", "--seed", "4", "--out", (dir / (name + ".json")).string(), "--csv",
                        (dir / (name + ".csv")).string()});
    EXPECT_EQ(r.result.exit_code, 0) << r.err;
  };
  once("a");
  once("b");
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "a.json"))["metadata"]["transform"], "noise:0.1");
}

TEST(Cli, RobustnessBlurGridGivesFiveRowsAndPlots) {
  const auto dir = fs::temp_directory_path() / "synthdet_cli_robust";
  fs::create_directories(dir);
  const auto csv = dir / "blur.csv";
  const auto r = run({"robustness", "--model", trained_model().string(), "--manifest", corpus_manifest().string(), "--kind",
                      "blur", "--grid", "0.5:2.5:5", "--out", csv.string()});
  ASSERT_EQ(r.result.exit_code, 0) << r.err;
  std::istringstream lines(slurp(csv));
  std::string line;
  int rows = -1;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 5);
  const auto plot = run({"plot", "--input", csv.string(), "--out", (dir / "blur.png").string()});
  EXPECT_EQ(plot.result.exit_code, 0) << plot.err;
  EXPECT_TRUE(fs::exists(dir / "blur.png"));
}

TEST(Cli, FreqWritesMapsAndGap) {
  const auto dir = fs::temp_directory_path() / "synthdet_cli_freq";
  fs::remove_all(dir);
  const auto r = run({"freq", "--manifest", corpus_manifest().string(), "--out-dir", dir.string(), "--size", "64",
                      "--limit", "10"});
  ASSERT_EQ(r.result.exit_code, 0) << r.err;
  const auto gap = nlohmann::json::parse(slurp(dir / "gap.json"));
  EXPECT_TRUE(gap.contains("gap_before_jpeg"));
  EXPECT_TRUE(gap.contains("gap_after_jpeg"));
  EXPECT_TRUE(fs::exists(dir / "difference.png"));
  EXPECT_TRUE(fs::exists(dir / "real_jpeg75.csv"));
}
