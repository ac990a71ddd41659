#include "synthdet/detector.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "synthdet/augmentation.hpp"

using namespace synthdet;
namespace fs = std::filesystem;

namespace {

Detector make_detector(FusionMode mode = FusionMode::adaptive) {
  auto backbone = ConvBackbone::toy(0);
  const int dim = backbone->dim();
  auto backend = std::make_unique<PatchAutoencoder>(PatchAutoencoder::Config{4, 0, 6}, 1);
  ArtifactEncoder encoder({}, 2);
  FusionNetwork fusion({dim, encoder.output_dim(), 16, mode}, 3);
  SemanticNormalizer norm;
  norm.mean.assign(static_cast<std::size_t>(dim), 0.1);
  norm.inv_std.assign(static_cast<std::size_t>(dim), 2.0);
  return Detector(std::move(backbone), std::move(backend), std::move(encoder), std::move(fusion), std::move(norm));
}

Image random_image(std::uint64_t seed, int h = 96, int w = 128) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("synthdet_" + name); }

CheckpointError::Kind load_error(const fs::path& path, const std::string* expected = nullptr) {
  try {
    Detector::load(path, expected);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected CheckpointError";
  return CheckpointError::Kind::io;
}

}  // namespace

TEST(Normalizer, FitStandardizes) {
  const std::vector<std::vector<float>> e{{1.0f, 10.0f}, {3.0f, 10.0f}};
  const auto n = SemanticNormalizer::fit(e, false);
  EXPECT_DOUBLE_EQ(n.mean[0], 2.0);
  const auto a = n.apply(e[0]);
  EXPECT_NEAR(a[0], -1.0, 1e-9);
  EXPECT_TRUE(std::isfinite(a[1]));
}

TEST(Detector, UnloadedRefusesToPredict) {
  Detector d;
  EXPECT_FALSE(d.loaded());
  EXPECT_THROW(d.predict_score(random_image(1)), std::logic_error);
}

TEST(Detector, ScoreIsProbabilityAndDeterministic) {
  const auto d = make_detector();
  const auto img = random_image(2);
  const double s = d.predict_score(img);
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1.0);
  EXPECT_EQ(s, d.predict_score(img));
  const auto f = d.features(preprocess_input(img));
  EXPECT_EQ(f.v_sem.size(), 64u);
  EXPECT_EQ(f.v_art.size(), 16u);
  EXPECT_EQ(f.score, s);
}

TEST(Detector, SingleBranchModesFeedZeros) {
  const auto d = make_detector(FusionMode::only_semantic);
  const auto f = d.features(preprocess_input(random_image(3)));
  for (double v : f.v_art) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(f.fused.beta, 0.0);
}

TEST(Detector, SaveLoadRoundTripIsExact) {
  auto d = make_detector();
  d.config_snapshot() = {{"note", "fixture"}};
  const auto path = temp_file("detector.sdw");
  d.save(path);
  const auto loaded = Detector::load(path);
  EXPECT_EQ(loaded.weights_checksum(), d.weights_checksum());
  EXPECT_EQ(loaded.config_snapshot()["note"], "fixture");
  for (std::uint64_t i = 0; i < 3; ++i) EXPECT_EQ(loaded.predict_score(random_image(10 + i)), d.predict_score(random_image(10 + i)));
}

TEST(Detector, ExpectedBackboneMismatch) {
  const auto path = temp_file("detector_bb.sdw");
  make_detector().save(path);
  const std::string other = "toy-conv-v1-seed9";
  EXPECT_EQ(load_error(path, &other), CheckpointError::Kind::backbone_mismatch);
  const std::string same = "toy-conv-v1-seed0";
  EXPECT_NO_THROW(Detector::load(path, &same));
}

TEST(Detector, AlteredBackboneChecksumIsDetected) {
  const auto path = temp_file("detector_sum.sdw");
  make_detector().save(path);
  auto archive = read_archive(path);
  archive.meta["backbone"]["checksum"] = "0000000000000000";
  write_archive(archive, path);
  EXPECT_EQ(load_error(path), CheckpointError::Kind::backbone_mismatch);
}

TEST(Detector, NewerSchemaVersionIsRejectedWithGuidance) {
  const auto path = temp_file("detector_v2.sdw");
  make_detector().save(path);
  auto archive = read_archive(path);
  archive.meta["schema_version"] = kCheckpointSchemaVersion + 1;
  write_archive(archive, path);
  EXPECT_EQ(load_error(path), CheckpointError::Kind::version_mismatch);
}

TEST(Detector, WrongKindAndMissingTensors) {
  const auto path = temp_file("detector_kind.sdw");
  make_detector().save(path);
  auto archive = read_archive(path);
  archive.tensors.erase("fusion.head.weight");
  write_archive(archive, path);
  EXPECT_THROW(Detector::load(path), CheckpointError);
  archive.kind = "autoencoder";
  write_archive(archive, path);
  EXPECT_EQ(load_error(path), CheckpointError::Kind::schema);
}
