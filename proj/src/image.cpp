#include "synthdet/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "synthdet/hash.hpp"

namespace synthdet {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) throw std::invalid_argument("image dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels),
               fill);
}

void Image::clamp01() noexcept {
  for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

Image8 quantize(const Image& image) {
  if (image.channels() != 3) throw std::invalid_argument("quantize expects a 3-channel image");
  Image8 out{image.height(), image.width(), std::vector<std::uint8_t>(image.size())};
  auto src = image.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

Image dequantize(const Image8& image) {
  Image out(image.height, image.width, 3);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(image.rgb[i]) / 255.0f;
  return out;
}

namespace {

Image8 from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image8 out{rgb.rows, rgb.cols, {}};
  out.rgb.resize(static_cast<std::size_t>(rgb.rows) * static_cast<std::size_t>(rgb.cols) * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3, out.rgb.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return out;
}

cv::Mat to_bgr_mat(const Image8& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

bool is_supported_image_extension(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".webp";
}

Image8 load_image8(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image: " + path.string());
  return from_bgr_mat(bgr);
}

Image load_image(const std::filesystem::path& path) { return dequantize(load_image8(path)); }

void save_image(const Image& image, const std::filesystem::path& path) {
  if (!is_supported_image_extension(path)) throw std::invalid_argument("unsupported image extension: " + path.string());
  Image src = image;
  if (src.channels() == 1) {
    Image rgb(src.height(), src.width(), 3);
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < src.width(); ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = src.at(y, x, 0);
    src = std::move(rgb);
  }
  const auto bgr = to_bgr_mat(quantize(src));
  std::vector<int> params;
  if (lower_extension(path) == ".png") params = {cv::IMWRITE_PNG_COMPRESSION, 1};
  if (!cv::imwrite(path.string(), bgr, params)) throw std::runtime_error("cannot write image: " + path.string());
}

Image jpeg_roundtrip(const Image& image, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
  const auto bgr = to_bgr_mat(quantize(image));
  std::vector<std::uint8_t> encoded;
  if (!cv::imencode(".jpg", bgr, encoded, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw std::runtime_error("jpeg encoding failed");
  cv::Mat decoded = cv::imdecode(encoded, cv::IMREAD_COLOR);
  if (decoded.empty()) throw std::runtime_error("jpeg decoding failed");
  return dequantize(from_bgr_mat(decoded));
}

namespace {

struct Tap {
  int lo;
  int hi;
  float w_hi;
};

std::vector<Tap> bilinear_taps(int in_size, int out_size) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in_size - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, static_cast<float>(src - lo)};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (image.empty()) throw std::invalid_argument("cannot resize an empty image");
  if (out_height < 1 || out_width < 1) throw std::invalid_argument("resize target must be at least 1x1");
  if (out_height == image.height() && out_width == image.width()) return image;
  const int ch = image.channels();
  const auto ty = bilinear_taps(image.height(), out_height);
  const auto tx = bilinear_taps(image.width(), out_width);
  Image out(out_height, out_width, ch);
  for (int y = 0; y < out_height; ++y) {
    const auto& ry = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const auto& rx = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < ch; ++c) {
        const float top = image.at(ry.lo, rx.lo, c) * (1.0f - rx.w_hi) + image.at(ry.lo, rx.hi, c) * rx.w_hi;
        const float bottom = image.at(ry.hi, rx.lo, c) * (1.0f - rx.w_hi) + image.at(ry.hi, rx.hi, c) * rx.w_hi;
        out.at(y, x, c) = top * (1.0f - ry.w_hi) + bottom * ry.w_hi;
      }
    }
  }
  return out;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("blur sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : kernel) w = static_cast<float>(w / sum);

  const int h = image.height(), w = image.width(), ch = image.channels();
  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * image.at(y, reflect101(x + k, w), c);
        tmp.at(y, x, c) = acc;
      }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(reflect101(y + k, h), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

Image median_filter3(const Image& image) {
  const int h = image.height(), w = image.width(), ch = image.channels();
  Image out(h, w, ch);
  std::array<float, 9> window{};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        std::size_t n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            window[n++] = image.at(std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1), c);
        std::nth_element(window.begin(), window.begin() + 4, window.end());
        out.at(y, x, c) = window[4];
      }
  return out;
}

Image to_grayscale(const Image& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw std::invalid_argument("grayscale conversion expects 1 or 3 channels");
  Image out(image.height(), image.width(), 1);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      out.at(y, x, 0) = 0.299f * image.at(y, x, 0) + 0.587f * image.at(y, x, 1) + 0.114f * image.at(y, x, 2);
  return out;
}

std::uint64_t content_hash(const Image& image) {
  Fnv1a64 h;
  const std::int32_t dims[3] = {image.height(), image.width(), image.channels()};
  h.update_values(std::span<const std::int32_t>(dims));
  h.update_values(image.pixels());
  return h.digest();
}

}  // namespace synthdet
