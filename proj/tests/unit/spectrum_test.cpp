#include "synthdet/spectrum.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "synthdet/random.hpp"

using namespace synthdet;

namespace {

SpectrumOptions raw_options() {
  SpectrumOptions o;
  o.size = 0;
  o.denoiser = nullptr;
  o.residual = false;
  return o;
}

Image gray_image(const std::vector<std::vector<double>>& v) {
  Image img(static_cast<int>(v.size()), static_cast<int>(v[0].size()), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(v[y][x]);
  return img;
}

// O(N^4) DFT with the same centring and normalisation, written from the definition.
double naive_bin(const std::vector<std::vector<double>>& v, int cy, int cx) {
  const int h = static_cast<int>(v.size()), w = static_cast<int>(v[0].size());
  const int ky = (cy - h / 2 + h) % h, kx = (cx - w / 2 + w) % w;
  std::complex<double> acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      acc += v[y][x] * std::polar(1.0, -2 * std::numbers::pi * (double(ky) * y / h + double(kx) * x / w));
  return std::log1p(std::abs(acc) / std::sqrt(double(h * w)));
}

}  // namespace

TEST(Spectrum, MatchesNaiveDft) {
  Rng rng(1);
  std::vector<std::vector<double>> v(6, std::vector<double>(8));
  for (auto& row : v)
    for (auto& x : row) x = rng.uniform();
  const auto map = image_spectrum(gray_image(v), raw_options());
  ASSERT_EQ(map.height, 6);
  ASSERT_EQ(map.width, 8);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_NEAR(map.at(y, x), naive_bin(v, y, x), 1e-5) << y << "," << x;
}

TEST(Spectrum, ConstantImageHasOnlyDc) {
  const auto map = image_spectrum(Image(8, 8, 3, 0.5f), raw_options());
  EXPECT_NEAR(map.at(4, 4), std::log1p(0.5 * 8), 1e-5);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (y != 4 || x != 4) EXPECT_NEAR(map.at(y, x), 0.0, 1e-6);
}

TEST(Spectrum, CheckerboardPeaksAtNyquistCorner) {
  std::vector<std::vector<double>> v(8, std::vector<double>(8));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) v[y][x] = (x + y) % 2 ? 0.25 : 0.75;
  const auto map = image_spectrum(gray_image(v), raw_options());
  // Mean 0.5 gives |F(0,0)| = 32, the +-0.25 alternation gives |F(4,4)| = 16; both scaled by 1/8.
  // Nyquist lands on the corner after centring.
  EXPECT_NEAR(map.at(4, 4), std::log1p(4.0), 1e-6);
  EXPECT_NEAR(map.at(0, 0), std::log1p(2.0), 1e-6);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if ((y != 0 || x != 0) && (y != 4 || x != 4)) EXPECT_NEAR(map.at(y, x), 0.0, 1e-6);
  EXPECT_TRUE(in_high_band(0, 0, 8, 8));
}

TEST(Spectrum, HighBandIsOutsideCentralRectangle) {
  int inside = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) inside += !in_high_band(y, x, 16, 16);
  EXPECT_EQ(inside, 64);
  EXPECT_FALSE(in_high_band(8, 8, 16, 16));
  EXPECT_FALSE(in_high_band(4, 4, 16, 16));
  EXPECT_TRUE(in_high_band(3, 8, 16, 16));
  EXPECT_TRUE(in_high_band(8, 12, 16, 16));
}

TEST(Spectrum, MeanAndMergeAreCountWeighted) {
  const auto a = image_spectrum(Image(8, 8, 3, 0.2f), raw_options());
  const auto b = image_spectrum(Image(8, 8, 3, 0.6f), raw_options());
  const auto mean = mean_spectrum({Image(8, 8, 3, 0.2f), Image(8, 8, 3, 0.6f), Image(8, 8, 3, 0.6f)}, raw_options());
  EXPECT_EQ(mean.n_images, 3);
  const auto merged = merge_spectra(a, mean_spectrum({Image(8, 8, 3, 0.6f), Image(8, 8, 3, 0.6f)}, raw_options()));
  EXPECT_NEAR(merged.at(4, 4), mean.at(4, 4), 1e-12);
  EXPECT_NEAR(mean.at(4, 4), (a.at(4, 4) + 2 * b.at(4, 4)) / 3, 1e-12);
  EXPECT_THROW(mean_spectrum({}, raw_options()), std::invalid_argument);
  EXPECT_THROW(merge_spectra(a, image_spectrum(Image(4, 4, 3), raw_options())), std::invalid_argument);
}

TEST(Spectrum, DefaultPipelineResizesAndKeepsDenoisedContent) {
  const auto map = image_spectrum(Image(40, 30, 3, 0.5f));
  EXPECT_EQ(map.height, 256);
  EXPECT_EQ(map.width, 256);
  // The median filter leaves a constant image intact: only DC survives, at 0.5 * 256 after scaling.
  EXPECT_NEAR(map.at(128, 128), std::log1p(128.0), 1e-5);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x)
      if (y != 128 || x != 128) ASSERT_NEAR(map.at(y, x), 0.0, 1e-6);
}

TEST(Spectrum, ResidualOfConstantImageIsZero) {
  SpectrumOptions o;
  o.residual = true;
  for (double v : image_spectrum(Image(40, 30, 3, 0.5f), o).energy) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(Spectrum, GapIsZeroForIdenticalCorpora) {
  const auto a = image_spectrum(Image(8, 8, 3, 0.3f), raw_options());
  const auto gap = spectrum_gap_report(a, a);
  EXPECT_EQ(gap.gap, 0.0);
  EXPECT_EQ(gap.difference.height, 8);
}

TEST(Spectrum, CsvRoundTrip) {
  Rng rng(2);
  SpectrumMap m{3, 4, {}, 1};
  for (int i = 0; i < 12; ++i) m.energy.push_back(rng.normal());
  const auto back = spectrum_from_csv(spectrum_csv(m));
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.width, 4);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(back.energy[i], m.energy[i], 1e-12);
}
