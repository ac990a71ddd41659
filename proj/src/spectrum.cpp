#include "synthdet/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>

namespace synthdet {

namespace {

Image analysis_input(const Image& image, const SpectrumOptions& options) {
  if (image.empty()) throw std::invalid_argument("cannot compute the spectrum of an empty image");
  Image gray = image.channels() == 1 ? image : to_grayscale(image);
  if (options.denoiser) {
    const Image denoised = options.denoiser(gray);
    if (!denoised.same_shape(gray)) throw std::invalid_argument("denoiser changed the image shape");
    if (options.residual) {
      auto g = gray.pixels();
      auto d = denoised.pixels();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= d[i];
    } else {
      gray = denoised;
    }
  }
  if (options.size > 0 && (gray.height() != options.size || gray.width() != options.size))
    gray = resize_bilinear(gray, options.size, options.size);
  return gray;
}

}  // namespace

SpectrumMap image_spectrum(const Image& image, const SpectrumOptions& options) {
  if (options.size < 0) throw std::invalid_argument("analysis size must be >= 0");
  const Image gray = analysis_input(image, options);
  const int h = gray.height(), w = gray.width();
  cv::Mat src(h, w, CV_64F);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) src.at<double>(y, x) = gray.at(y, x, 0);
  cv::Mat freq;
  cv::dft(src, freq, cv::DFT_COMPLEX_OUTPUT);

  SpectrumMap map{h, w, std::vector<double>(static_cast<std::size_t>(h) * w), 1};
  const double norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto c = freq.at<cv::Vec2d>(y, x);
      const double mag = std::hypot(c[0], c[1]) * norm;
      // Centre the zero frequency: bin k moves to (k + n/2) mod n.
      map.at((y + h / 2) % h, (x + w / 2) % w) = std::log1p(options.power ? mag * mag : mag);
    }
  return map;
}

SpectrumMap mean_spectrum(const std::vector<Image>& images, const SpectrumOptions& options) {
  if (images.empty()) throw std::invalid_argument("mean_spectrum needs at least one image");
  SpectrumMap sum;
  for (const auto& img : images) {
    const auto s = image_spectrum(img, options);
    if (sum.n_images == 0) {
      sum = s;
      continue;
    }
    if (s.height != sum.height || s.width != sum.width)
      throw std::invalid_argument("images differ in size; set a common analysis size");
    for (std::size_t i = 0; i < s.energy.size(); ++i) sum.energy[i] += s.energy[i];
    ++sum.n_images;
  }
  for (auto& e : sum.energy) e /= sum.n_images;
  return sum;
}

SpectrumMap merge_spectra(const SpectrumMap& a, const SpectrumMap& b) {
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("spectrum shapes differ");
  SpectrumMap out{a.height, a.width, std::vector<double>(a.energy.size()), a.n_images + b.n_images};
  for (std::size_t i = 0; i < out.energy.size(); ++i)
    out.energy[i] = (a.energy[i] * a.n_images + b.energy[i] * b.n_images) / out.n_images;
  return out;
}

bool in_high_band(int y, int x, int height, int width) {
  const int y0 = height / 2 - height / 4, x0 = width / 2 - width / 4;
  const bool inside = y >= y0 && y < y0 + height / 2 && x >= x0 && x < x0 + width / 2;
  return !inside;
}

SpectrumGap spectrum_gap_report(const SpectrumMap& real, const SpectrumMap& synth) {
  if (real.height != synth.height || real.width != synth.width)
    throw std::invalid_argument("spectrum shapes differ (" + std::to_string(real.height) + "x" + std::to_string(real.width) +
                                " vs " + std::to_string(synth.height) + "x" + std::to_string(synth.width) + ")");
  SpectrumGap out;
  out.difference = {real.height, real.width, std::vector<double>(real.energy.size()), 0};
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < real.height; ++y)
    for (int x = 0; x < real.width; ++x) {
      const double d = synth.at(y, x) - real.at(y, x);
      out.difference.at(y, x) = d;
      if (in_high_band(y, x, real.height, real.width)) {
        sum += std::fabs(d);
        ++count;
      }
    }
  out.gap = count > 0 ? sum / static_cast<double>(count) : 0.0;
  return out;
}

std::string spectrum_csv(const SpectrumMap& map) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) os << (x ? "," : "") << map.at(y, x);
    os << '\n';
  }
  return os.str();
}

SpectrumMap spectrum_from_csv(const std::string& text) {
  SpectrumMap map;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        map.energy.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw std::invalid_argument("spectrum CSV holds a non-numeric cell '" + cell + "'");
      }
      ++cols;
    }
    if (map.height == 0) map.width = cols;
    if (cols != map.width) throw std::invalid_argument("spectrum CSV rows differ in length");
    ++map.height;
  }
  if (map.height == 0) throw std::invalid_argument("spectrum CSV is empty");
  map.n_images = 1;
  return map;
}

void save_spectrum_png(const SpectrumMap& map, const std::filesystem::path& path) {
  const auto [lo, hi] = std::minmax_element(map.energy.begin(), map.energy.end());
  const double range = *hi - *lo;
  Image img(map.height, map.width, 1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) img.at(y, x, 0) = range > 0 ? static_cast<float>((map.at(y, x) - *lo) / range) : 0.0f;
  save_image(img, path);
}

}  // namespace synthdet
