#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdet/artifact.hpp"
#include "synthdet/fusion.hpp"
#include "synthdet/semantic.hpp"

namespace synthdet {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Per-dimension affine standardisation of semantic embeddings, fitted on the
/// training split and stored with the model. Optional L2 normalisation runs first.
struct SemanticNormalizer {
  bool l2_normalize = false;
  std::vector<double> mean;
  std::vector<double> inv_std;

  static SemanticNormalizer fit(const std::vector<std::vector<float>>& embeddings, bool l2_normalize);
  std::vector<double> apply(std::span<const float> embedding) const;
};

/// Every intermediate quantity of one forward pass.
struct FeatureBundle {
  std::vector<double> v_sem;
  std::vector<double> v_art;
  FusedFeatures fused;
  double score = 0.0;
};

/// Backbone + reconstruction backend + artifact encoder + fusion network.
/// A default-constructed detector is unloaded and refuses to predict.
class Detector {
 public:
  Detector() = default;
  Detector(std::unique_ptr<SemanticBackbone> backbone, std::unique_ptr<ReconstructionBackend> backend,
           ArtifactEncoder encoder, FusionNetwork fusion, SemanticNormalizer normalizer);

  bool loaded() const noexcept { return backbone_ != nullptr; }
  FusionMode mode() const noexcept { return fusion_.config().mode; }
  bool uses_semantic() const noexcept { return mode() != FusionMode::only_artifact; }
  bool uses_artifact() const noexcept { return mode() != FusionMode::only_semantic; }

  /// Inputs below are expected to be preprocessed (224x224x3).
  std::vector<double> semantic_features(const Image& x, EmbeddingCache* cache = nullptr) const;
  ArtifactMap artifact_map(const Image& x) const;
  std::vector<double> artifact_features(const Image& x) const;
  FeatureBundle features(const Image& x, EmbeddingCache* cache = nullptr) const;

  /// Probability that `x` is synthetic; resizes to 224x224 first. Inference mask (1,1).
  double predict_score(const Image& x, EmbeddingCache* cache = nullptr) const;

  const SemanticBackbone& backbone() const;
  const ReconstructionBackend& backend() const;
  ArtifactEncoder& encoder() noexcept { return encoder_; }
  const ArtifactEncoder& encoder() const noexcept { return encoder_; }
  FusionNetwork& fusion() noexcept { return fusion_; }
  const FusionNetwork& fusion() const noexcept { return fusion_; }
  const SemanticNormalizer& normalizer() const noexcept { return normalizer_; }

  /// Trainable parameters (artifact encoder and fusion network).
  nn::ParameterList trainable_parameters();
  std::uint64_t weights_checksum() const;

  /// Free-form settings recorded in the checkpoint (e.g. the training configuration).
  nlohmann::json& config_snapshot() noexcept { return snapshot_; }
  const nlohmann::json& config_snapshot() const noexcept { return snapshot_; }

  void save(const std::filesystem::path& path) const;
  /// Throws CheckpointError. When `expected_backbone` is given, the stored backbone
  /// id must match it.
  static Detector load(const std::filesystem::path& path, const std::string* expected_backbone = nullptr);

 private:
  void require_loaded() const;

  std::unique_ptr<SemanticBackbone> backbone_;
  std::unique_ptr<ReconstructionBackend> backend_;
  ArtifactEncoder encoder_;
  FusionNetwork fusion_;
  SemanticNormalizer normalizer_;
  nlohmann::json snapshot_ = nlohmann::json::object();
};

}  // namespace synthdet
