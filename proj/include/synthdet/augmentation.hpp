#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "synthdet/image.hpp"
#include "synthdet/random.hpp"

namespace synthdet {

inline constexpr int kDetectorInputSize = 224;

enum class TransformKind { jpeg, blur, resize, noise, brightness, saturation, contrast };

/// One post-processing operation. `param` is the JPEG quality, blur radius
/// (Gaussian standard deviation), resize target edge, noise standard deviation
/// or the colour enhancement factor, depending on `kind`.
struct TransformSpec {
  TransformKind kind = TransformKind::jpeg;
  double param = 0.0;

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

std::string to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view name);
/// Compact `kind:param` form, e.g. `jpeg:85` or `blur:1.5`.
std::string to_string(const TransformSpec& spec);
TransformSpec parse_transform(std::string_view text);

/// Throws std::invalid_argument naming the violated bound.
void validate_transform(const TransformSpec& spec);

struct TransformOptions {
  /// Resize keeps the aspect ratio and maps the short edge to `param`.
  bool preserve_short_edge = false;
  /// Seed for the additive noise field.
  std::uint64_t noise_seed = 0;
};

/// Output is clamped to [0, 1]; only `resize` changes the dimensions.
Image apply_transform(const Image& image, const TransformSpec& spec, const TransformOptions& options = {});

/// Training-time compression policy: JPEG with probability `jpeg_probability`
/// at a uniform integer quality in [jpeg_quality_min, jpeg_quality_max].
struct AugmentationPolicy {
  double jpeg_probability = 0.5;
  int jpeg_quality_min = 75;
  int jpeg_quality_max = 95;
  std::uint64_t seed = 0;
};

void validate_policy(const AugmentationPolicy& policy);
std::optional<TransformSpec> sample_train_augmentation(const AugmentationPolicy& policy, Rng& rng);

/// Square bilinear stretch to 224x224, values clamped to [0, 1].
Image preprocess_input(const Image& image);

/// Parameter ranges used for robustness sweeps.
struct ParamRange {
  double lo;
  double hi;
};
ParamRange robustness_range(TransformKind kind);
/// Parameter at which the transform leaves the image unchanged, if one exists.
std::optional<double> identity_param(TransformKind kind);

}  // namespace synthdet
