#include "synthdet/manifest.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace synthdet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("synthdet_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_png(const fs::path& path, float value = 0.5f) {
  fs::create_directories(path.parent_path());
  save_image(Image(8, 8, 3, value), path);
}

DatasetManifest synthetic_manifest(int n_real, int n_synth, int sources = 1) {
  DatasetManifest m;
  for (int i = 0; i < n_real; ++i) m.records.push_back({"real/" + std::to_string(i) + ".png", 0, "cam"});
  for (int i = 0; i < n_synth; ++i)
    m.records.push_back({"fake/" + std::to_string(i) + ".png", 1, "gen" + std::to_string(i % sources)});
  return m;
}

}  // namespace

TEST(LabelingRule, Parse) {
  const auto [dir, a] = parse_labeling_rule("data/fake/=synthetic:sd15");
  EXPECT_EQ(dir, "data/fake");
  EXPECT_EQ(a.label, 1);
  EXPECT_EQ(a.source, "sd15");
  EXPECT_EQ(parse_labeling_rule("real=0:coco").second.label, 0);
  EXPECT_THROW(parse_labeling_rule("real:coco"), std::invalid_argument);
  EXPECT_THROW(parse_labeling_rule("real=maybe:coco"), std::invalid_argument);
}

TEST(BuildManifest, LabelsSourcesAndSidecars) {
  const auto root = fresh_dir("build");
  write_png(root / "real" / "a.png");
  write_png(root / "real" / "b.jpg");
  write_png(root / "fake" / "x" / "c.png");
  write_png(root / "fake" / "d.png");
  std::ofstream(root / "fake" / "d.json") << R"({"model_name":"sd","steps":30,"guidance":7.5,"caption_dataset":"cc3m"})";
  std::ofstream(root / "real" / "a.json") << R"({"model_name":"sd","steps":30,"guidance":7.5})";
  std::ofstream(root / "real" / "notes.txt") << "ignored";

  const LabelingRule rule{{"real", {0, "coco"}}, {"fake", {1, "sd"}}, {"fake/x", {1, "flux"}}};
  const auto built = build_manifest(root, rule);
  const auto& r = built.manifest.records;
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].path, "fake/d.png");
  ASSERT_TRUE(r[0].generation.has_value());
  EXPECT_EQ(r[0].generation->steps, 30);
  EXPECT_EQ(r[0].caption_dataset, std::optional<std::string>("cc3m"));
  EXPECT_EQ(r[1].path, "fake/x/c.png");
  EXPECT_EQ(r[1].source, "flux");
  EXPECT_EQ(r[2].label, 0);
  EXPECT_FALSE(r[2].generation.has_value());
  ASSERT_EQ(built.warnings.size(), 1u);
  EXPECT_NE(built.warnings[0].find("real/a.png"), std::string::npos);
  EXPECT_TRUE(validate_manifest(built.manifest, ValidationProfile::none).ok());
  // Guidance 7.5 is outside the benchmark profile.
  EXPECT_EQ(validate_manifest(built.manifest, ValidationProfile::benchmark).violations.size(), 1u);
}

TEST(BuildManifest, ErrorsAndSkips) {
  const auto root = fresh_dir("build_err");
  EXPECT_THROW(build_manifest(root, {{".", {0, "x"}}}), std::runtime_error);
  write_png(root / "a" / "1.png");
  write_png(root / "b" / "2.png");
  EXPECT_THROW(build_manifest(root, {{"a", {0, "x"}}}), std::invalid_argument);
  std::ofstream(root / "a" / "broken.png") << "nope";
  const auto built = build_manifest(root, {{".", {0, "x"}}});
  EXPECT_EQ(built.manifest.records.size(), 2u);
  ASSERT_EQ(built.warnings.size(), 1u);
  EXPECT_NE(built.warnings[0].find("broken.png"), std::string::npos);
}

TEST(Validate, FlagsRecordLevelViolations) {
  auto m = synthetic_manifest(2, 2);
  m.records[1].path = m.records[0].path;
  m.records[2].label = 2;
  m.records[0].generation = GenerationConfig{"sd", 30, 5.0, std::nullopt};
  m.records[3].generation = GenerationConfig{"sd", 60, 5.0, 80};
  const auto none = validate_manifest(m, ValidationProfile::none);
  EXPECT_EQ(none.violations.size(), 3u);
  const auto bench = validate_manifest(m, ValidationProfile::benchmark);
  ASSERT_EQ(bench.violations.size(), 4u);
  EXPECT_EQ(bench.violations.back().record, std::optional<std::size_t>(3));
  EXPECT_NE(bench.violations.back().message.find("steps 60"), std::string::npos);
}

TEST(Split, CountsAndDeterminism) {
  const auto m = synthetic_manifest(50, 50);
  const auto a = split_manifest(m, {0.8, 0.1, 0.1}, 7), b = split_manifest(m, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.in_split(Split::train).size(), 80u);
  EXPECT_EQ(a.in_split(Split::val).size(), 10u);
  EXPECT_EQ(a.in_split(Split::test).size(), 10u);
  EXPECT_NE(a, split_manifest(m, {0.8, 0.1, 0.1}, 8));
  EXPECT_THROW(split_manifest(m, {0.5, 0.5, 0.5}, 0), std::invalid_argument);
}

TEST(Split, TenRecordBalanceIsWithinOneOfProportional) {
  const auto m = synthetic_manifest(5, 5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = split_manifest(m, {0.8, 0.1, 0.1}, seed);
    for (auto split : {Split::train, Split::val, Split::test}) {
      const auto members = s.in_split(split);
      int synth = 0;
      for (const auto* r : members) synth += r->label;
      const double exact = 0.5 * static_cast<double>(members.size());
      EXPECT_LE(std::abs(synth - exact), 1.0) << "seed " << seed << " split " << to_string(split);
    }
  }
}

TEST(Split, EverySourceReachesTest) {
  const auto s = split_manifest(synthetic_manifest(300, 300, 3), {0.8, 0.1, 0.1}, 1);
  std::map<std::string, int> per_source;
  for (const auto* r : s.in_split(Split::test)) per_source[r->source]++;
  EXPECT_EQ(per_source.size(), 4u);
  for (const auto& [source, n] : per_source) EXPECT_GE(n, 9) << source;
}

TEST(Serialization, RoundTripIsFieldForField) {
  auto m = synthetic_manifest(3, 3);
  m.records[4].generation = GenerationConfig{"sd", 25, 4.5, 90};
  m.records[4].caption_dataset = "coco";
  m.records[1].applied_transforms = {{TransformKind::blur, 1.5}, {TransformKind::jpeg, 80}};
  m = split_manifest(m, {0.5, 0.25, 0.25}, 3);
  EXPECT_EQ(manifest_from_json(to_json(m)), m);

  const auto dir = fresh_dir("manifest_io");
  save_manifest(m, dir / "m.json");
  const auto loaded = load_manifest(dir / "m.json");
  EXPECT_EQ(loaded, m);
  EXPECT_EQ(loaded.root, dir);
}

TEST(Serialization, SchemaMismatchIsRejected) {
  auto j = to_json(synthetic_manifest(1, 1));
  j["schema_version"] = 99;
  EXPECT_THROW(manifest_from_json(j), std::runtime_error);
}

TEST(Serialization, SaveElsewhereRebasesPaths) {
  const auto dir = fresh_dir("rebase");
  write_png(dir / "imgs" / "real" / "a.png");
  auto m = build_manifest(dir / "imgs", {{"real", {0, "cam"}}}).manifest;
  save_manifest(m, dir / "out" / "m.json");
  const auto loaded = load_manifest(dir / "out" / "m.json");
  EXPECT_TRUE(fs::exists(loaded.resolve(loaded.records[0])));
}
