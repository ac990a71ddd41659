#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace synthdet {

/// Interleaved (HxWxC) float image. Pixel values are nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 3, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int y, int x, int c) noexcept { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const noexcept { return data_[index(y, x, c)]; }

  std::span<float> pixels() noexcept { return data_; }
  std::span<const float> pixels() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  void clamp01() noexcept;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// 8-bit RGB image as stored on disk; the in-memory form of the training image cache.
struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

Image8 quantize(const Image& image);
Image dequantize(const Image8& image);

/// Decodes PNG, JPEG or WebP into an RGB image in [0, 1]. Throws std::runtime_error.
Image load_image(const std::filesystem::path& path);
Image8 load_image8(const std::filesystem::path& path);
/// Encoding is chosen from the file extension.
void save_image(const Image& image, const std::filesystem::path& path);
bool is_supported_image_extension(const std::filesystem::path& path);

/// Encodes at the given quality with a real JPEG codec and decodes again.
Image jpeg_roundtrip(const Image& image, int quality);

/// Bilinear resampling with half-pixel centres and edge clamping (no antialiasing).
Image resize_bilinear(const Image& image, int out_height, int out_width);

/// Separable Gaussian blur with standard deviation `sigma` (reflect-101 borders).
Image gaussian_blur(const Image& image, double sigma);

/// 3x3 per-channel median filter (replicated borders).
Image median_filter3(const Image& image);

/// Rec. 601 luma, single channel.
Image to_grayscale(const Image& image);

/// Hash of the pixel bytes and shape.
std::uint64_t content_hash(const Image& image);

}  // namespace synthdet
