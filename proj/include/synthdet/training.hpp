#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdet/augmentation.hpp"
#include "synthdet/detector.hpp"
#include "synthdet/fusion.hpp"
#include "synthdet/manifest.hpp"

namespace synthdet {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double interpolation_rate = 0.5;
  AugmentationPolicy augmentation;
  DropoutPolicy dropout;
  std::uint64_t seed = 0;
  /// Every batch holds both classes in their global proportion.
  bool stratified_batches = true;
  /// Stop after this many epochs without a validation-AP improvement; the best epoch is kept.
  /// 0 disables early stopping.
  int early_stop_patience = 3;
  FusionMode fusion_mode = FusionMode::adaptive;
  std::string backbone = "toy";
  std::string recon_backend = "toy";
  bool normalize_embeddings = false;
  ArtifactEncoder::Config encoder;
  int regulator_hidden = 64;
  PatchAutoencoder::Config autoencoder;
  PatchAutoencoder::TrainOptions autoencoder_training;
  /// Threads used for per-sample feature preparation.
  int workers = 1;
};

void validate_config(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// -[t log s + (1 - t) log(1 - s)] with s clamped to [1e-7, 1 - 1e-7].
double soft_bce_loss(double score, double target);
/// The same loss evaluated from the logit, without clamping: softplus(z) - t z.
double soft_bce_with_logit(double logit, double target);

struct EpochLog {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> ap;
  double interpolated_fraction = 0.0;
  double seconds = 0.0;
};

nlohmann::json to_json(const EpochLog& log);

struct TrainResult {
  Detector detector;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  /// Replaced positions / all positions over the whole run.
  double interpolated_fraction = 0.0;
  std::uint64_t backbone_checksum_before = 0;
  std::uint64_t backbone_checksum_after = 0;
  double autoencoder_error = 0.0;
};

/// Trains on the manifest's train split, early-stopping on val. Each epoch log
/// entry is also written as one JSON line to `log` when given.
TrainResult train_detector(const DatasetManifest& manifest, const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace synthdet
