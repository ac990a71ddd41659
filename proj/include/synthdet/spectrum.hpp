#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "synthdet/image.hpp"

namespace synthdet {

/// Average centred log-spectrum; the DC bin sits at (height / 2, width / 2).
struct SpectrumMap {
  int height = 0;
  int width = 0;
  std::vector<double> energy;
  int n_images = 0;

  double at(int y, int x) const { return energy[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return energy[static_cast<std::size_t>(y) * width + x]; }
};

using Denoiser = std::function<Image(const Image&)>;

struct SpectrumOptions {
  /// Square analysis size after grayscale conversion; 0 keeps the native size
  /// (every image must then share it).
  int size = 256;
  /// log1p(|F|^2) instead of log1p(|F|), with |F| normalised by sqrt(H W).
  bool power = false;
  /// Applied to the grayscale image before the transform; empty disables it.
  Denoiser denoiser = median_filter3;
  /// Transform the noise residual x - denoiser(x) rather than the denoised image.
  bool residual = false;
};

/// Centred spectrum of one image (n_images = 1).
SpectrumMap image_spectrum(const Image& image, const SpectrumOptions& options = {});

/// Mean of the per-image spectra, accumulated in double precision. Throws on an empty corpus.
SpectrumMap mean_spectrum(const std::vector<Image>& images, const SpectrumOptions& options = {});

/// Count-weighted mean of two maps of equal shape.
SpectrumMap merge_spectra(const SpectrumMap& a, const SpectrumMap& b);

/// True outside the centred rectangle of half the height and half the width.
bool in_high_band(int y, int x, int height, int width);

struct SpectrumGap {
  double gap = 0.0;            // mean |synth - real| over the high band
  SpectrumMap difference;      // synth - real
};

SpectrumGap spectrum_gap_report(const SpectrumMap& real, const SpectrumMap& synth);

/// Comma-separated rows, one per spectrum row.
std::string spectrum_csv(const SpectrumMap& map);
SpectrumMap spectrum_from_csv(const std::string& text);
/// Min-max scaled 8-bit grayscale image.
void save_spectrum_png(const SpectrumMap& map, const std::filesystem::path& path);

}  // namespace synthdet
