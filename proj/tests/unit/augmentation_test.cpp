#include "synthdet/augmentation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace synthdet;

namespace {

Image noise_image(std::uint64_t seed, int h = 32, int w = 32) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST(Transform, ParseAndPrint) {
  const auto spec = parse_transform("blur:1.5");
  EXPECT_EQ(spec.kind, TransformKind::blur);
  EXPECT_DOUBLE_EQ(spec.param, 1.5);
  EXPECT_EQ(to_string(parse_transform("jpeg:85")), "jpeg:85");
  EXPECT_THROW(parse_transform("sharpen:2"), std::invalid_argument);
  EXPECT_THROW(parse_transform("jpeg"), std::invalid_argument);
}

TEST(Transform, ValidationNamesTheBound) {
  try {
    validate_transform({TransformKind::jpeg, 101});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[1, 100]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(validate_transform({TransformKind::blur, -1}), std::invalid_argument);
  EXPECT_THROW(validate_transform({TransformKind::resize, 0}), std::invalid_argument);
}

TEST(Transform, IdentityParametersLeaveImageUnchanged) {
  const auto img = noise_image(1);
  for (auto kind : {TransformKind::noise, TransformKind::brightness, TransformKind::saturation,
                    TransformKind::contrast}) {
    const auto id = identity_param(kind);
    ASSERT_TRUE(id.has_value()) << to_string(kind);
    const auto out = apply_transform(img, {kind, *id});
    for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(out.pixels()[i], img.pixels()[i], 1e-6) << to_string(kind);
  }
  EXPECT_FALSE(identity_param(TransformKind::jpeg).has_value());
  EXPECT_FALSE(identity_param(TransformKind::blur).has_value());
}

TEST(Transform, OutputStaysInUnitRange) {
  const auto img = noise_image(2);
  for (const auto& spec : {TransformSpec{TransformKind::brightness, 2.0}, TransformSpec{TransformKind::contrast, 2.0},
                           TransformSpec{TransformKind::saturation, 2.0}, TransformSpec{TransformKind::noise, 0.3}}) {
    const auto out = apply_transform(img, spec);
    for (float v : out.pixels()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Transform, ResizeChangesShape) {
  const auto img = noise_image(3, 40, 20);
  const auto square = apply_transform(img, {TransformKind::resize, 16});
  EXPECT_EQ(square.height(), 16);
  EXPECT_EQ(square.width(), 16);
  const auto kept = apply_transform(img, {TransformKind::resize, 16}, {.preserve_short_edge = true});
  EXPECT_EQ(kept.width(), 16);
  EXPECT_EQ(kept.height(), 32);
}

TEST(Transform, NoiseIsSeeded) {
  const auto img = noise_image(4);
  const TransformSpec spec{TransformKind::noise, 0.1};
  TransformOptions a{.noise_seed = 9}, b{.noise_seed = 10};
  EXPECT_EQ(apply_transform(img, spec, a), apply_transform(img, spec, a));
  EXPECT_NE(apply_transform(img, spec, a), apply_transform(img, spec, b));
}

TEST(Transform, BrightnessScalesPixels) {
  const Image gray(4, 4, 3, 0.4f);
  const auto out = apply_transform(gray, {TransformKind::brightness, 0.5});
  for (float v : out.pixels()) EXPECT_NEAR(v, 0.2f, 1e-6);
}

TEST(Transform, SaturationHalvesChroma) {
  const auto in = noise_image(5);
  const auto out = apply_transform(in, {TransformKind::saturation, 0.5});
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      EXPECT_NEAR(out.at(y, x, 0) - out.at(y, x, 1), 0.5f * (in.at(y, x, 0) - in.at(y, x, 1)), 1e-5);
      EXPECT_NEAR(out.at(y, x, 1) - out.at(y, x, 2), 0.5f * (in.at(y, x, 1) - in.at(y, x, 2)), 1e-5);
    }
  EXPECT_THROW(apply_transform(in, {TransformKind::saturation, 0.0}), std::invalid_argument);
}

TEST(TrainAugmentation, JpegProbabilityAndQualityRange) {
  AugmentationPolicy policy;
  Rng rng(11);
  int applied = 0;
  std::map<int, int> qualities;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    if (auto spec = sample_train_augmentation(policy, rng)) {
      ++applied;
      EXPECT_EQ(spec->kind, TransformKind::jpeg);
      qualities[static_cast<int>(spec->param)]++;
    }
  }
  EXPECT_NEAR(applied / double(n), 0.5, 0.02);
  EXPECT_EQ(qualities.begin()->first, 75);
  EXPECT_EQ(qualities.rbegin()->first, 95);
  EXPECT_EQ(qualities.size(), 21u);
}

TEST(TrainAugmentation, PolicyValidation) {
  EXPECT_THROW(validate_policy(AugmentationPolicy{.jpeg_probability = 1.5}), std::invalid_argument);
  EXPECT_THROW(validate_policy(AugmentationPolicy{.jpeg_quality_min = 96, .jpeg_quality_max = 90}), std::invalid_argument);
}

TEST(Preprocess, StretchesTo224) {
  const auto out = preprocess_input(noise_image(6, 100, 300));
  EXPECT_EQ(out.height(), kDetectorInputSize);
  EXPECT_EQ(out.width(), kDetectorInputSize);
  EXPECT_EQ(out.channels(), 3);
}

TEST(RobustnessRange, EvaluatedRanges) {
  const std::map<TransformKind, std::pair<double, double>> expected{
      {TransformKind::jpeg, {75, 95}},        {TransformKind::blur, {0.5, 2.5}},
      {TransformKind::resize, {128, 640}},    {TransformKind::noise, {0.05, 0.25}},
      {TransformKind::brightness, {0.5, 2.5}}, {TransformKind::saturation, {0.5, 2.5}},
      {TransformKind::contrast, {0.5, 2.5}}};
  for (const auto& [kind, range] : expected) {
    EXPECT_EQ(robustness_range(kind).lo, range.first) << to_string(kind);
    EXPECT_EQ(robustness_range(kind).hi, range.second) << to_string(kind);
  }
}
