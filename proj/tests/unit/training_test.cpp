#include "synthdet/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "small_corpus.hpp"

using namespace synthdet;

TEST(Loss, SoftBinaryCrossEntropy) {
  EXPECT_NEAR(soft_bce_loss(0.5, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(soft_bce_loss(0.0, 1.0), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(soft_bce_with_logit(0.0, 0.3), std::log(2.0), 1e-12);
  for (double z : {-30.0, -2.0, 0.7, 5.0})
    for (double t : {0.0, 0.25, 1.0}) {
      const double s = 1.0 / (1.0 + std::exp(-z));
      if (s > 1e-7 && s < 1 - 1e-7) EXPECT_NEAR(soft_bce_with_logit(z, t), soft_bce_loss(s, t), 1e-9) << z << " " << t;
    }
  EXPECT_TRUE(std::isfinite(soft_bce_with_logit(-800.0, 1.0)));
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.fusion_mode = FusionMode::simple_concat;
  cfg.encoder.channels = 12;
  const auto back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_THROW(train_config_from_json({{"epochz", 3}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"interpolation_rate", 1.5}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json({{"fusion_mode", "avg"}}), std::invalid_argument);
  EXPECT_EQ(train_config_from_json(nlohmann::json::object()).learning_rate, TrainConfig{}.learning_rate);
}

TEST(Training, DeterministicWithFrozenBackbone) {
  const auto& m = small_corpus();
  std::ostringstream log_a, log_b;
  const auto a = train_detector(m, fast_config(), &log_a);
  const auto b = train_detector(m, fast_config(), &log_b);
  EXPECT_EQ(a.detector.weights_checksum(), b.detector.weights_checksum());
  EXPECT_EQ(a.backbone_checksum_before, a.backbone_checksum_after);
  EXPECT_NEAR(a.interpolated_fraction, 0.5, 0.05);

  // One JSON object per line, train and val for each epoch.
  std::istringstream lines(log_a.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("epoch"));
    EXPECT_TRUE(j.contains("loss"));
    ++n;
  }
  EXPECT_EQ(n, 4);
  EXPECT_EQ(a.log.size(), 4u);
}

TEST(Training, SeedChangesWeights) {
  auto cfg = fast_config();
  cfg.epochs = 1;
  const auto a = train_detector(small_corpus(), cfg);
  cfg.seed = 1;
  const auto b = train_detector(small_corpus(), cfg);
  EXPECT_NE(a.detector.weights_checksum(), b.detector.weights_checksum());
}

TEST(Training, SingleClassSplitIsRejected) {
  auto m = small_corpus();
  for (auto& r : m.records)
    if (r.label == 1 && r.split == Split::train) r.split = Split::test;
  EXPECT_THROW(train_detector(m, fast_config()), std::invalid_argument);
}

TEST(Training, ZeroInterpolationReplacesNothing) {
  auto cfg = fast_config();
  cfg.epochs = 1;
  cfg.interpolation_rate = 0.0;
  EXPECT_EQ(train_detector(small_corpus(), cfg).interpolated_fraction, 0.0);
}

TEST(Training, SingleBranchModesTrain) {
  for (auto mode : {FusionMode::only_semantic, FusionMode::only_artifact, FusionMode::simple_concat}) {
    auto cfg = fast_config();
    cfg.epochs = 1;
    cfg.fusion_mode = mode;
    const auto r = train_detector(small_corpus(), cfg);
    EXPECT_EQ(r.detector.mode(), mode);
  }
}
