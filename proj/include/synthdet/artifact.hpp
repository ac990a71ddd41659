#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdet/archive.hpp"
#include "synthdet/image.hpp"
#include "synthdet/nn/layers.hpp"

namespace synthdet {

using LatentMap = nn::FeatureMap<float>;

/// Output of a backend encoder: posterior mean and standard deviation.
struct LatentCode {
  LatentMap mean;
  LatentMap sigma;
};

/// Encode/decode pair used to reconstruct an input image.
class ReconstructionBackend {
 public:
  virtual ~ReconstructionBackend() = default;
  virtual std::string id() const = 0;
  virtual LatentCode encode(const Image& x) const = 0;
  /// Decoded values are not clamped here; `reconstruct` clamps.
  virtual Image decode(const LatentMap& latent) const = 0;
  /// Serializable description used by detector checkpoints.
  virtual nlohmann::json descriptor() const = 0;
  virtual void store_weights(TensorArchive& /*archive*/, const std::string& /*prefix*/) const {}
};

/// decode(encode(x)) == x exactly.
class IdentityBackend final : public ReconstructionBackend {
 public:
  std::string id() const override { return "identity"; }
  LatentCode encode(const Image& x) const override;
  Image decode(const LatentMap& latent) const override;
  nlohmann::json descriptor() const override { return {{"kind", "identity"}}; }
};

/// Fixed affine maps on the flattened image: mean = E x + e, x' = D mean + d.
/// The image shape is fixed at construction.
class LinearBackend final : public ReconstructionBackend {
 public:
  LinearBackend(int height, int width, int channels, std::vector<std::vector<double>> encoder,
                std::vector<double> encoder_bias, std::vector<std::vector<double>> decoder,
                std::vector<double> decoder_bias);

  std::string id() const override { return "linear"; }
  LatentCode encode(const Image& x) const override;
  Image decode(const LatentMap& latent) const override;
  nlohmann::json descriptor() const override;

 private:
  int height_, width_, channels_;
  std::vector<std::vector<double>> encoder_;
  std::vector<double> encoder_bias_;
  std::vector<std::vector<double>> decoder_;
  std::vector<double> decoder_bias_;
};

/// Small convolutional variational autoencoder acting on non-overlapping
/// patches: a patch-strided encoder produces per-patch mean and log-variance,
/// and a transposed decoder maps the latent back to pixels.
class PatchAutoencoder final : public ReconstructionBackend {
 public:
  struct Config {
    int patch = 4;
    int hidden = 0;  // 0 = affine encoder/decoder
    int latent = 6;
  };
  struct TrainOptions {
    int steps = 3000;
    int batch_patches = 64;
    double learning_rate = 3e-3;
    double kl_weight = 1e-3;
    std::uint64_t seed = 0;
  };

  PatchAutoencoder(Config config, std::uint64_t init_seed);

  std::string id() const override;
  LatentCode encode(const Image& x) const override;
  Image decode(const LatentMap& latent) const override;
  nlohmann::json descriptor() const override;
  void store_weights(TensorArchive& archive, const std::string& prefix) const override;

  const Config& config() const noexcept { return config_; }

  /// Fits the autoencoder to randomly sampled patches of `images` and returns
  /// the mean reconstruction error over the final 10% of steps.
  double train(const std::vector<Image>& images, const TrainOptions& options);

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<PatchAutoencoder> load(const std::filesystem::path& path);
  static std::unique_ptr<PatchAutoencoder> from_archive(const TensorArchive& archive, const std::string& prefix,
                                                        const nlohmann::json& descriptor);

  nn::ParameterList parameters();

 private:
  void check_shape(const Image& x) const;

  Config config_;
  std::string label_ = "toy";
  nn::Conv2d<float> enc_hidden_, enc_mean_, enc_logvar_, dec_hidden_, dec_out_;
};

/// Selects a backend from `identity`, `toy` (returns nullptr: must be trained)
/// or `external:<path>` (a saved PatchAutoencoder weights file).
std::unique_ptr<ReconstructionBackend> make_backend(const std::string& spec);
std::unique_ptr<ReconstructionBackend> backend_from_descriptor(const nlohmann::json& descriptor,
                                                               const TensorArchive* archive, const std::string& prefix);

/// x' = decode(encode(x).mean), clamped to [0, 1]. The posterior sigma is
/// computed by the encoder but never used.
Image reconstruct(const Image& x, const ReconstructionBackend& backend);

/// Per-pixel reconstruction residual |x' - x|.
struct ArtifactMap {
  Image delta;
};

ArtifactMap extract_artifact(const Image& x, const ReconstructionBackend& backend);

/// Baseline residual |up(down(x, 2), 2) - x| using the bilinear resampler.
ArtifactMap extract_updown_artifact(const Image& x);

nn::FeatureMap<float> to_feature_map(const Image& image);

/// Trainable residual network mapping an ArtifactMap to a feature vector. Any input
/// whose sides are multiples of pool * stem_patch is accepted; the output length is fixed.
///   avg-pool -> patch stem (strided conv) -> ReLU -> residual blocks -> global pool -> linear
class ArtifactEncoder {
 public:
  struct Config {
    int input_channels = 3;
    int pool = 2;
    int stem_patch = 4;
    int channels = 8;
    int blocks = 1;
    int output_dim = 16;
  };

  /// Cached activations of one forward pass, consumed by `backward`.
  struct Trace {
    nn::FeatureMap<float> stem_input;
    nn::FeatureMap<float> stem_output;
    std::vector<nn::FeatureMap<float>> block_hidden;
    std::vector<nn::FeatureMap<float>> block_output;
    std::vector<float> pooled;
  };

  ArtifactEncoder() : ArtifactEncoder(Config{}, 0) {}
  ArtifactEncoder(Config config, std::uint64_t init_seed);

  const Config& config() const noexcept { return config_; }
  int output_dim() const noexcept { return config_.output_dim; }

  std::vector<float> encode(const ArtifactMap& artifact) const;
  std::vector<float> forward(const ArtifactMap& artifact, Trace& trace) const;
  /// Accumulates parameter gradients for dL/d(output) = `grad_output`.
  void backward(const Trace& trace, std::span<const float> grad_output);

  void zero_final_layer();
  nn::ParameterList parameters();

  nlohmann::json config_json() const;
  static Config config_from_json(const nlohmann::json& j);

 private:
  nn::FeatureMap<float> stem_input(const ArtifactMap& artifact) const;

  Config config_;
  nn::Conv2d<float> stem_;
  std::vector<nn::Conv2d<float>> conv_a_;
  std::vector<nn::Conv2d<float>> conv_b_;
  nn::Linear<float> head_;
};

}  // namespace synthdet
