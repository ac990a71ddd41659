#include "synthdet/augmentation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace synthdet {

namespace {

constexpr std::array<std::pair<TransformKind, std::string_view>, 7> kKindNames{{
    {TransformKind::jpeg, "jpeg"},
    {TransformKind::blur, "blur"},
    {TransformKind::resize, "resize"},
    {TransformKind::noise, "noise"},
    {TransformKind::brightness, "brightness"},
    {TransformKind::saturation, "saturation"},
    {TransformKind::contrast, "contrast"},
}};

Image blend_towards(const Image& image, const Image& target, float factor) {
  Image out = image;
  auto dst = out.pixels();
  auto tgt = target.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tgt[i] + factor * (dst[i] - tgt[i]);
  out.clamp01();
  return out;
}

Image require_rgb(const Image& image, const char* what) {
  if (image.channels() != 3) throw std::invalid_argument(std::string(what) + " expects a 3-channel image");
  return image;
}

}  // namespace

std::string to_string(TransformKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return std::string(name);
  return "unknown";
}

TransformKind parse_transform_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown transform kind '" + std::string(name) + "'");
}

std::string to_string(const TransformSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.kind) << ':' << spec.param;
  return os.str();
}

TransformSpec parse_transform(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("transform must look like kind:param, got '" + std::string(text) + "'");
  TransformSpec spec;
  spec.kind = parse_transform_kind(text.substr(0, colon));
  const auto number = text.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), spec.param);
  if (ec != std::errc() || ptr != number.data() + number.size())
    throw std::invalid_argument("transform parameter is not a number: '" + std::string(number) + "'");
  validate_transform(spec);
  return spec;
}

void validate_transform(const TransformSpec& spec) {
  const double p = spec.param;
  const auto fail = [&](const std::string& bound) {
    throw std::invalid_argument(to_string(spec.kind) + " parameter " + std::to_string(p) + " violates " + bound);
  };
  if (!std::isfinite(p)) fail("finiteness");
  switch (spec.kind) {
    case TransformKind::jpeg:
      if (p != std::floor(p) || p < 1 || p > 100) fail("quality integer in [1, 100]");
      break;
    case TransformKind::blur:
      if (!(p > 0)) fail("radius > 0");
      break;
    case TransformKind::resize:
      if (!(p >= 16)) fail("target edge >= 16");
      break;
    case TransformKind::noise:
      if (!(p >= 0)) fail("standard deviation >= 0");
      break;
    case TransformKind::brightness:
    case TransformKind::saturation:
    case TransformKind::contrast:
      if (!(p > 0)) fail("factor > 0");
      break;
  }
}

Image apply_transform(const Image& image, const TransformSpec& spec, const TransformOptions& options) {
  validate_transform(spec);
  if (image.empty()) throw std::invalid_argument("cannot transform an empty image");
  switch (spec.kind) {
    case TransformKind::jpeg:
      return jpeg_roundtrip(image, static_cast<int>(spec.param));
    case TransformKind::blur: {
      auto out = gaussian_blur(image, spec.param);
      out.clamp01();
      return out;
    }
    case TransformKind::resize: {
      int h = static_cast<int>(std::lround(spec.param));
      int w = h;
      if (options.preserve_short_edge) {
        const double scale = spec.param / std::min(image.height(), image.width());
        h = std::max(1, static_cast<int>(std::lround(image.height() * scale)));
        w = std::max(1, static_cast<int>(std::lround(image.width() * scale)));
      }
      auto out = resize_bilinear(image, h, w);
      out.clamp01();
      return out;
    }
    case TransformKind::noise: {
      Image out = image;
      if (spec.param == 0.0) return out;
      Rng rng(options.noise_seed);
      for (auto& v : out.pixels()) v += static_cast<float>(rng.normal(0.0, spec.param));
      out.clamp01();
      return out;
    }
    case TransformKind::brightness: {
      Image out = image;
      for (auto& v : out.pixels()) v *= static_cast<float>(spec.param);
      out.clamp01();
      return out;
    }
    case TransformKind::saturation: {
      const auto rgb = require_rgb(image, "saturation");
      const auto gray = to_grayscale(rgb);
      Image target(rgb.height(), rgb.width(), 3);
      for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x)
          for (int c = 0; c < 3; ++c) target.at(y, x, c) = gray.at(y, x, 0);
      return blend_towards(rgb, target, static_cast<float>(spec.param));
    }
    case TransformKind::contrast: {
      const auto gray = to_grayscale(image);
      double mean = 0.0;
      for (float v : gray.pixels()) mean += v;
      mean /= static_cast<double>(gray.size());
      const Image target(image.height(), image.width(), image.channels(), static_cast<float>(mean));
      return blend_towards(image, target, static_cast<float>(spec.param));
    }
  }
  throw std::logic_error("unhandled transform kind");
}

void validate_policy(const AugmentationPolicy& policy) {
  if (!(policy.jpeg_probability >= 0.0 && policy.jpeg_probability <= 1.0))
    throw std::invalid_argument("jpeg_probability must be in [0, 1]");
  if (policy.jpeg_quality_min < 1 || policy.jpeg_quality_max > 100 || policy.jpeg_quality_min > policy.jpeg_quality_max)
    throw std::invalid_argument("jpeg quality range must satisfy 1 <= min <= max <= 100");
}

std::optional<TransformSpec> sample_train_augmentation(const AugmentationPolicy& policy, Rng& rng) {
  if (!rng.bernoulli(policy.jpeg_probability)) return std::nullopt;
  const auto quality = rng.uniform_int(policy.jpeg_quality_min, policy.jpeg_quality_max);
  return TransformSpec{TransformKind::jpeg, static_cast<double>(quality)};
}

Image preprocess_input(const Image& image) {
  if (image.empty() || image.height() < 1 || image.width() < 1)
    throw std::invalid_argument("cannot preprocess an empty image");
  auto out = resize_bilinear(image, kDetectorInputSize, kDetectorInputSize);
  out.clamp01();
  return out;
}

ParamRange robustness_range(TransformKind kind) {
  switch (kind) {
    case TransformKind::jpeg:
      return {75, 95};
    case TransformKind::blur:
      return {0.5, 2.5};
    case TransformKind::resize:
      return {128, 640};
    case TransformKind::noise:
      return {0.05, 0.25};
    case TransformKind::brightness:
    case TransformKind::saturation:
    case TransformKind::contrast:
      return {0.5, 2.5};
  }
  throw std::logic_error("unhandled transform kind");
}

std::optional<double> identity_param(TransformKind kind) {
  switch (kind) {
    case TransformKind::noise:
      return 0.0;
    case TransformKind::brightness:
    case TransformKind::saturation:
    case TransformKind::contrast:
      return 1.0;
    case TransformKind::resize:
      return static_cast<double>(kDetectorInputSize);
    default:
      return std::nullopt;
  }
}

}  // namespace synthdet
