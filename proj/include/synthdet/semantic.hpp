#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "synthdet/archive.hpp"
#include "synthdet/image.hpp"
#include "synthdet/nn/layers.hpp"
#include "synthdet/random.hpp"

namespace synthdet {

/// Frozen image embedder. Implementations never expose their weights for training.
class SemanticBackbone {
 public:
  virtual ~SemanticBackbone() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<float> embed(const Image& x) const = 0;
  virtual std::uint64_t weights_checksum() const = 0;
  /// Enough information to reconstruct the backbone (seed or file path).
  virtual nlohmann::json descriptor() const = 0;
};

/// Fixed-weight convolutional embedder:
///   avg-pool -> [conv3x3 -> ReLU -> (avg-pool 2)] x N, embedding = concatenated
/// global averages of every stage. The toy tier draws weights from a seed; the
/// external tier reads them from a weights file.
class ConvBackbone final : public SemanticBackbone {
 public:
  struct Config {
    int input_pool = 4;
    std::vector<int> channels{16, 24, 24};
  };

  static std::unique_ptr<ConvBackbone> toy(std::uint64_t seed);
  static std::unique_ptr<ConvBackbone> load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::string id() const override { return id_; }
  int dim() const override;
  std::vector<float> embed(const Image& x) const override;
  std::uint64_t weights_checksum() const override;
  nlohmann::json descriptor() const override { return descriptor_; }

 private:
  ConvBackbone(Config config, std::uint64_t seed);
  nn::ParameterList parameters();

  Config config_;
  std::vector<nn::Conv2d<float>> convs_;
  std::string id_;
  nlohmann::json descriptor_;
};

/// `toy`, `toy:<seed>` or `external:<path>`.
std::unique_ptr<SemanticBackbone> make_backbone(const std::string& spec);
std::unique_ptr<SemanticBackbone> backbone_from_descriptor(const nlohmann::json& descriptor);

/// Persistent embedding store keyed by (content hash, backbone id).
///
/// Layout: `<dir>/<hash>-<backbone tag>.vec` holding a u32 dimension followed by
/// float32 values, plus `<dir>/index.tsv` with lines `hash<TAB>backbone id<TAB>dim`.
/// Readers may run concurrently; writers are serialized.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path directory);

  /// $SYNTHDET_CACHE_DIR if set.
  static std::optional<std::filesystem::path> directory_from_env();

  std::optional<std::vector<float>> get(std::uint64_t content_hash, const std::string& backbone_id) const;
  void put(std::uint64_t content_hash, const std::string& backbone_id, std::span<const float> embedding);
  std::size_t size() const;

 private:
  std::filesystem::path file_for(std::uint64_t content_hash, const std::string& backbone_id) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, int> index_;  // "<hash>\t<backbone id>" -> dim
};

/// Embeds `x`, consulting and filling `cache` when given. `normalize` rescales to unit L2 norm.
std::vector<float> embed_image(const Image& x, const SemanticBackbone& backbone, EmbeddingCache* cache = nullptr,
                               bool normalize = false);

/// Embedding with a soft synthetic score: 0 = real, 1 = synthetic.
struct SoftSample {
  std::vector<double> embedding;
  double score = 0.0;
};

/// (1 - delta) * real + delta * synth, with score delta.
SoftSample interpolate_features(const SoftSample& real, const SoftSample& synth, double delta);

/// Which batch positions to replace and by which (real, synthetic) pair.
struct InterpolationPlan {
  struct Entry {
    std::size_t position;
    std::size_t real_index;
    std::size_t synth_index;
    double delta;
  };
  std::vector<Entry> entries;
  /// Set when interpolation was requested but the batch lacks one of the classes.
  bool single_class = false;
};

/// Selects round(rate * n) positions uniformly without replacement. Each is paired
/// with a uniformly drawn real (score 0) and synthetic (score 1) member of the
/// batch, and delta ~ U[0, 1).
InterpolationPlan plan_interpolation(std::span<const double> scores, double rate, Rng& rng);

struct AugmentedBatch {
  std::vector<SoftSample> samples;
  std::vector<bool> replaced;
  bool single_class = false;
};

AugmentedBatch augment_batch_with_interpolation(const std::vector<SoftSample>& batch, double rate, Rng& rng);

}  // namespace synthdet
