#include "synthdet/detector.hpp"

#include <cmath>
#include <stdexcept>

#include "synthdet/augmentation.hpp"
#include "synthdet/hash.hpp"

namespace synthdet {

SemanticNormalizer SemanticNormalizer::fit(const std::vector<std::vector<float>>& embeddings, bool l2_normalize) {
  if (embeddings.empty()) throw std::invalid_argument("cannot fit a normalizer on zero embeddings");
  SemanticNormalizer n;
  n.l2_normalize = l2_normalize;
  const auto dim = embeddings.front().size();
  n.mean.assign(dim, 0.0);
  n.inv_std.assign(dim, 1.0);
  SemanticNormalizer raw{l2_normalize, std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  std::vector<double> sq(dim, 0.0);
  for (const auto& e : embeddings) {
    const auto v = raw.apply(e);
    for (std::size_t i = 0; i < dim; ++i) {
      n.mean[i] += v[i];
      sq[i] += v[i] * v[i];
    }
  }
  const double count = static_cast<double>(embeddings.size());
  for (std::size_t i = 0; i < dim; ++i) {
    n.mean[i] /= count;
    const double var = std::max(0.0, sq[i] / count - n.mean[i] * n.mean[i]);
    n.inv_std[i] = 1.0 / std::sqrt(var + 1e-12);
    if (!std::isfinite(n.inv_std[i]) || var < 1e-12) n.inv_std[i] = 1.0;
  }
  return n;
}

std::vector<double> SemanticNormalizer::apply(std::span<const float> embedding) const {
  if (embedding.size() != mean.size()) throw std::invalid_argument("semantic embedding dimension mismatch");
  std::vector<double> v(embedding.begin(), embedding.end());
  if (l2_normalize) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& x : v) x /= norm;
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean[i]) * inv_std[i];
  return v;
}

Detector::Detector(std::unique_ptr<SemanticBackbone> backbone, std::unique_ptr<ReconstructionBackend> backend,
                   ArtifactEncoder encoder, FusionNetwork fusion, SemanticNormalizer normalizer)
    : backbone_(std::move(backbone)),
      backend_(std::move(backend)),
      encoder_(std::move(encoder)),
      fusion_(std::move(fusion)),
      normalizer_(std::move(normalizer)) {
  if (!backbone_ || !backend_) throw std::invalid_argument("detector needs a backbone and a reconstruction backend");
  if (fusion_.config().semantic_dim != backbone_->dim() || fusion_.config().artifact_dim != encoder_.output_dim())
    throw std::invalid_argument("fusion network dimensions do not match the feature extractors");
}

void Detector::require_loaded() const {
  if (!loaded()) throw std::logic_error("detector is not loaded");
}

const SemanticBackbone& Detector::backbone() const {
  require_loaded();
  return *backbone_;
}

const ReconstructionBackend& Detector::backend() const {
  require_loaded();
  return *backend_;
}

std::vector<double> Detector::semantic_features(const Image& x, EmbeddingCache* cache) const {
  require_loaded();
  return normalizer_.apply(embed_image(x, *backbone_, cache));
}

ArtifactMap Detector::artifact_map(const Image& x) const {
  require_loaded();
  return extract_artifact(x, *backend_);
}

std::vector<double> Detector::artifact_features(const Image& x) const {
  const auto v = encoder_.encode(artifact_map(x));
  return {v.begin(), v.end()};
}

FeatureBundle Detector::features(const Image& x, EmbeddingCache* cache) const {
  require_loaded();
  FeatureBundle b;
  // A branch the fusion mode ignores is fed zeros instead of being computed.
  b.v_sem = uses_semantic() ? semantic_features(x, cache) : std::vector<double>(static_cast<std::size_t>(backbone_->dim()));
  b.v_art = uses_artifact() ? artifact_features(x) : std::vector<double>(static_cast<std::size_t>(encoder_.output_dim()));
  FusionNetwork::Trace trace;
  b.score = nn::sigmoid(fusion_.logit(b.v_sem, b.v_art, {}, &trace));
  b.fused = std::move(trace.features);
  return b;
}

double Detector::predict_score(const Image& x, EmbeddingCache* cache) const {
  require_loaded();
  return features(preprocess_input(x), cache).score;
}

nn::ParameterList Detector::trainable_parameters() {
  nn::ParameterList list;
  if (uses_artifact()) {
    auto e = encoder_.parameters();
    nn::prefix_names(e, "encoder.");
    nn::append(list, std::move(e));
  }
  auto f = fusion_.parameters();
  nn::prefix_names(f, "fusion.");
  nn::append(list, std::move(f));
  return list;
}

std::uint64_t Detector::weights_checksum() const {
  Fnv1a64 h;
  for (const auto& p : const_cast<Detector*>(this)->trainable_parameters()) {
    h.update(p.name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p.get(i);
      h.update_values(std::span<const double>(&v, 1));
    }
  }
  return h.digest();
}

void Detector::save(const std::filesystem::path& path) const {
  require_loaded();
  TensorArchive archive;
  archive.kind = "detector";
  archive.meta = {
      {"schema_version", kCheckpointSchemaVersion},
      {"backbone",
       {{"id", backbone_->id()}, {"checksum", to_hex(backbone_->weights_checksum())}, {"descriptor", backbone_->descriptor()}}},
      {"backend", backend_->descriptor()},
      {"encoder", encoder_.config_json()},
      {"fusion", fusion_.config_json()},
      {"normalizer", {{"l2_normalize", normalizer_.l2_normalize}}},
      {"config", snapshot_},
  };
  auto self = const_cast<Detector*>(this);
  auto enc = self->encoder_.parameters();
  archive.store(enc, "encoder.");
  archive.store(self->fusion_.parameters(), "fusion.");
  backend_->store_weights(archive, "backend.");
  archive.tensors["normalizer.mean"] = {{static_cast<int>(normalizer_.mean.size())}, normalizer_.mean};
  archive.tensors["normalizer.inv_std"] = {{static_cast<int>(normalizer_.inv_std.size())}, normalizer_.inv_std};
  write_archive(archive, path);
}

Detector Detector::load(const std::filesystem::path& path, const std::string* expected_backbone) {
  const auto archive = read_archive(path);
  if (archive.kind != "detector")
    throw CheckpointError(CheckpointError::Kind::schema, "expected a detector checkpoint, found '" + archive.kind + "'");
  const auto& meta = archive.meta;
  const int version = meta.value("schema_version", 0);
  if (version != kCheckpointSchemaVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint schema version " + std::to_string(version) + " cannot be read by this build (expects " +
                              std::to_string(kCheckpointSchemaVersion) + "); re-export or retrain the model");
  try {
    const auto& b = meta.at("backbone");
    const auto stored_id = b.at("id").get<std::string>();
    if (expected_backbone != nullptr && *expected_backbone != stored_id)
      throw CheckpointError(CheckpointError::Kind::backbone_mismatch,
                            "checkpoint was trained with backbone '" + stored_id + "', not '" + *expected_backbone + "'");
    auto backbone = backbone_from_descriptor(b.at("descriptor"));
    if (backbone->id() != stored_id || to_hex(backbone->weights_checksum()) != b.at("checksum").get<std::string>())
      throw CheckpointError(CheckpointError::Kind::backbone_mismatch,
                            "backbone weights differ from the ones the checkpoint was trained with ('" + stored_id + "')");
    auto backend = backend_from_descriptor(meta.at("backend"), &archive, "backend.");
    ArtifactEncoder encoder(ArtifactEncoder::config_from_json(meta.at("encoder")), 0);
    auto enc = encoder.parameters();
    archive.restore(enc, "encoder.");
    FusionNetwork fusion(FusionNetwork::config_from_json(meta.at("fusion")), 0);
    archive.restore(fusion.parameters(), "fusion.");
    SemanticNormalizer normalizer;
    normalizer.l2_normalize = meta.at("normalizer").value("l2_normalize", false);
    const auto mean = archive.tensors.find("normalizer.mean");
    const auto inv = archive.tensors.find("normalizer.inv_std");
    if (mean == archive.tensors.end() || inv == archive.tensors.end())
      throw CheckpointError(CheckpointError::Kind::schema, "checkpoint lacks the semantic normalizer");
    normalizer.mean = mean->second.values;
    normalizer.inv_std = inv->second.values;
    Detector d(std::move(backbone), std::move(backend), std::move(encoder), std::move(fusion), std::move(normalizer));
    d.snapshot_ = meta.value("config", nlohmann::json::object());
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::schema, std::string("checkpoint metadata malformed: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::schema, std::string("checkpoint inconsistent: ") + e.what());
  }
}

}  // namespace synthdet
