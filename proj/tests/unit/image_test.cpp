#include "synthdet/image.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "synthdet/random.hpp"

using synthdet::Image;

namespace {

Image random_image(std::uint64_t seed, int h, int w) {
  synthdet::Rng rng(seed);
  Image img(h, w, 3);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("synthdet_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Image, QuantizeRoundTripIsStableAfterOnePass) {
  const auto img = random_image(1, 8, 8);
  const auto once = synthdet::dequantize(synthdet::quantize(img));
  EXPECT_EQ(synthdet::dequantize(synthdet::quantize(once)), once);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(once.pixels()[i], img.pixels()[i], 0.5 / 255 + 1e-6);
}

TEST(Image, PngRoundTripIsLossless) {
  const auto dir = temp_dir("png");
  const auto img = synthdet::dequantize(synthdet::quantize(random_image(2, 12, 10)));
  synthdet::save_image(img, dir / "a.png");
  EXPECT_EQ(synthdet::load_image(dir / "a.png"), img);
}

TEST(Image, LoadRejectsGarbage) {
  const auto dir = temp_dir("garbage");
  std::ofstream(dir / "bad.png") << "not an image";
  EXPECT_THROW(synthdet::load_image(dir / "bad.png"), std::runtime_error);
  EXPECT_THROW(synthdet::load_image(dir / "missing.png"), std::runtime_error);
}

TEST(Image, ResizeHalvingAveragesBlocks) {
  Image ramp(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp.at(y, x, 0) = static_cast<float>(y * 4 + x) / 15.0f;
  const auto half = synthdet::resize_bilinear(ramp, 2, 2);
  EXPECT_NEAR(half.at(0, 0, 0), 2.5 / 15, 1e-6);
  EXPECT_NEAR(half.at(0, 1, 0), 4.5 / 15, 1e-6);
  EXPECT_NEAR(half.at(1, 0, 0), 10.5 / 15, 1e-6);
  EXPECT_NEAR(half.at(1, 1, 0), 12.5 / 15, 1e-6);
}

TEST(Image, ResizeToSameSizeIsIdentity) {
  const auto img = random_image(3, 6, 5);
  EXPECT_EQ(synthdet::resize_bilinear(img, 6, 5), img);
}

TEST(Image, JpegRoundTripOfConstantGrayIsNearlyExact) {
  const Image gray(32, 32, 3, 0.5f);
  const auto out = synthdet::jpeg_roundtrip(gray, 95);
  ASSERT_TRUE(out.same_shape(gray));
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(double(out.pixels()[i]) - 0.5));
  // Frozen from the codec: 0.5 quantizes to 128/255 and survives the DCT untouched.
  EXPECT_NEAR(worst, 128.0 / 255.0 - 0.5, 1e-6);
}

TEST(Image, LowerJpegQualityLosesMoreDetail) {
  const auto img = random_image(4, 64, 64);
  auto err = [&](int q) {
    const auto out = synthdet::jpeg_roundtrip(img, q);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += std::pow(out.pixels()[i] - img.pixels()[i], 2);
    return s;
  };
  EXPECT_GT(err(30), err(95));
}

TEST(Image, MedianFilterRemovesIsolatedSpike) {
  Image img(5, 5, 1, 0.2f);
  img.at(2, 2, 0) = 1.0f;
  const auto out = synthdet::median_filter3(img);
  EXPECT_FLOAT_EQ(out.at(2, 2, 0), 0.2f);
}

TEST(Image, GaussianBlurPreservesConstant) {
  const Image flat(9, 9, 3, 0.3f);
  const auto out = synthdet::gaussian_blur(flat, 2.0);
  for (float v : out.pixels()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Image, GrayscaleUsesRec601Weights) {
  Image px(1, 1, 3);
  px.at(0, 0, 0) = 1.0f;
  EXPECT_NEAR(synthdet::to_grayscale(px).at(0, 0, 0), 0.299, 1e-6);
}

TEST(Image, ContentHashSeesShapeAndPixels) {
  const auto a = random_image(5, 4, 4);
  auto b = a;
  EXPECT_EQ(synthdet::content_hash(a), synthdet::content_hash(b));
  b.at(0, 0, 0) += 0.25f;
  EXPECT_NE(synthdet::content_hash(a), synthdet::content_hash(b));
  EXPECT_NE(synthdet::content_hash(Image(2, 8, 1)), synthdet::content_hash(Image(8, 2, 1)));
}
