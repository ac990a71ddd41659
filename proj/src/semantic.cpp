#include "synthdet/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "synthdet/artifact.hpp"
#include "synthdet/hash.hpp"

namespace synthdet {

// --- backbone ---------------------------------------------------------------

ConvBackbone::ConvBackbone(Config config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.input_pool < 1 || config_.channels.empty())
    throw std::invalid_argument("backbone needs a positive input pool and at least one stage");
  Rng rng(seed);
  int in = 3;
  for (int c : config_.channels) {
    convs_.emplace_back(in, c, 3, 1, 1);
    convs_.back().init(rng);
    in = c;
  }
}

nn::ParameterList ConvBackbone::parameters() {
  nn::ParameterList list;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    auto p = convs_[i].parameters();
    nn::prefix_names(p, "stage" + std::to_string(i) + ".");
    nn::append(list, std::move(p));
  }
  return list;
}

std::unique_ptr<ConvBackbone> ConvBackbone::toy(std::uint64_t seed) {
  std::unique_ptr<ConvBackbone> b(new ConvBackbone(Config{}, derive_seed(seed, 0xB0B, 0)));
  b->id_ = "toy-conv-v1-seed" + std::to_string(seed);
  b->descriptor_ = {{"kind", "toy"}, {"seed", seed}};
  return b;
}

void ConvBackbone::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  archive.kind = "backbone";
  archive.meta = {{"input_pool", config_.input_pool}, {"channels", config_.channels}};
  archive.store(const_cast<ConvBackbone*>(this)->parameters());
  write_archive(archive, path);
}

std::unique_ptr<ConvBackbone> ConvBackbone::load(const std::filesystem::path& path) {
  const auto archive = read_archive(path);
  if (archive.kind != "backbone")
    throw CheckpointError(CheckpointError::Kind::schema, "expected a backbone weights file, found '" + archive.kind + "'");
  Config config;
  try {
    config.input_pool = archive.meta.at("input_pool").get<int>();
    config.channels = archive.meta.at("channels").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::schema, std::string("backbone metadata malformed: ") + e.what());
  }
  std::unique_ptr<ConvBackbone> b(new ConvBackbone(config, 0));
  archive.restore(b->parameters());
  b->id_ = "conv-v1-" + to_hex(b->weights_checksum());
  b->descriptor_ = {{"kind", "external"}, {"path", std::filesystem::absolute(path).string()}};
  return b;
}

int ConvBackbone::dim() const {
  int d = 0;
  for (int c : config_.channels) d += c;
  return d;
}

std::vector<float> ConvBackbone::embed(const Image& x) const {
  if (x.channels() != 3) throw std::invalid_argument("backbone expects an RGB image");
  const int min_edge = config_.input_pool << static_cast<int>(config_.channels.size() - 1);
  if (x.height() < min_edge || x.width() < min_edge)
    throw std::invalid_argument("backbone input smaller than " + std::to_string(min_edge) + " pixels");
  auto map = to_feature_map(x);
  if (config_.input_pool > 1) map = nn::avg_pool(map, config_.input_pool);
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(dim()));
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    if (i > 0) map = nn::avg_pool(map, 2);
    map = convs_[i].forward(map);
    nn::relu_inplace(std::span<float>(map.data));
    const auto pooled = nn::global_avg_pool(map);
    out.insert(out.end(), pooled.begin(), pooled.end());
  }
  return out;
}

std::uint64_t ConvBackbone::weights_checksum() const {
  Fnv1a64 h;
  for (const auto& p : const_cast<ConvBackbone*>(this)->parameters()) {
    h.update(p.name);
    h.update_values(std::span<const float>(p.as_float()));
  }
  return h.digest();
}

std::unique_ptr<SemanticBackbone> make_backbone(const std::string& spec) {
  if (spec == "toy") return ConvBackbone::toy(0);
  if (spec.rfind("toy:", 0) == 0) {
    try {
      return ConvBackbone::toy(std::stoull(spec.substr(4)));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad toy backbone seed in '" + spec + "'");
    }
  }
  if (spec.rfind("external:", 0) == 0) return ConvBackbone::load(spec.substr(9));
  throw std::invalid_argument("unknown backbone '" + spec + "' (expected toy, toy:<seed> or external:<path>)");
}

std::unique_ptr<SemanticBackbone> backbone_from_descriptor(const nlohmann::json& descriptor) {
  const auto kind = descriptor.value("kind", std::string());
  if (kind == "toy") return ConvBackbone::toy(descriptor.at("seed").get<std::uint64_t>());
  if (kind == "external") {
    const std::filesystem::path path = descriptor.at("path").get<std::string>();
    if (!std::filesystem::exists(path))
      throw CheckpointError(CheckpointError::Kind::io, "backbone weights not found: " + path.string());
    return ConvBackbone::load(path);
  }
  throw CheckpointError(CheckpointError::Kind::schema, "unknown backbone kind '" + kind + "'");
}

// --- embedding cache ------------------------------------------------------------

namespace {

std::string cache_key(std::uint64_t hash, const std::string& backbone_id) { return to_hex(hash) + "\t" + backbone_id; }

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path directory) : dir_(std::move(directory)) {
  std::filesystem::create_directories(dir_);
  std::ifstream index(dir_ / "index.tsv");
  std::string line;
  while (std::getline(index, line)) {
    std::istringstream fields(line);
    std::string hash, id, dim;
    if (!std::getline(fields, hash, '\t') || !std::getline(fields, id, '\t') || !std::getline(fields, dim)) continue;
    index_[hash + "\t" + id] = std::atoi(dim.c_str());
  }
}

std::optional<std::filesystem::path> EmbeddingCache::directory_from_env() {
  const char* env = std::getenv("SYNTHDET_CACHE_DIR");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return std::filesystem::path(env);
}

std::filesystem::path EmbeddingCache::file_for(std::uint64_t content_hash, const std::string& backbone_id) const {
  Fnv1a64 tag;
  tag.update(backbone_id);
  return dir_ / (to_hex(content_hash) + "-" + to_hex(tag.digest()).substr(0, 8) + ".vec");
}

std::optional<std::vector<float>> EmbeddingCache::get(std::uint64_t content_hash, const std::string& backbone_id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_.find(cache_key(content_hash, backbone_id));
  if (it == index_.end()) return std::nullopt;
  std::ifstream in(file_for(content_hash, backbone_id), std::ios::binary);
  std::uint32_t dim = 0;
  if (!in.read(reinterpret_cast<char*>(&dim), sizeof dim) || static_cast<int>(dim) != it->second) return std::nullopt;
  std::vector<float> v(dim);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)))) return std::nullopt;
  return v;
}

void EmbeddingCache::put(std::uint64_t content_hash, const std::string& backbone_id, std::span<const float> embedding) {
  std::unique_lock lock(mutex_);
  const auto key = cache_key(content_hash, backbone_id);
  if (index_.contains(key)) return;
  {
    std::ofstream out(file_for(content_hash, backbone_id), std::ios::binary | std::ios::trunc);
    const auto dim = static_cast<std::uint32_t>(embedding.size());
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(embedding.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!out) throw std::runtime_error("failed to write embedding cache entry in " + dir_.string());
  }
  std::ofstream index(dir_ / "index.tsv", std::ios::app);
  index << key << '\t' << embedding.size() << '\n';
  index_[key] = static_cast<int>(embedding.size());
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return index_.size();
}

std::vector<float> embed_image(const Image& x, const SemanticBackbone& backbone, EmbeddingCache* cache, bool normalize) {
  std::vector<float> v;
  std::uint64_t hash = 0;
  if (cache != nullptr) {
    hash = content_hash(x);
    if (auto hit = cache->get(hash, backbone.id())) v = std::move(*hit);
  }
  if (v.empty()) {
    v = backbone.embed(x);
    if (cache != nullptr) cache->put(hash, backbone.id(), v);
  }
  if (normalize) {
    double norm = 0.0;
    for (float f : v) norm += static_cast<double>(f) * f;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& f : v) f = static_cast<float>(f / norm);
  }
  return v;
}

// --- interpolation -------------------------------------------------------------

SoftSample interpolate_features(const SoftSample& real, const SoftSample& synth, double delta) {
  if (real.embedding.size() != synth.embedding.size())
    throw std::invalid_argument("interpolation: embedding dimensions differ (" + std::to_string(real.embedding.size()) +
                                " vs " + std::to_string(synth.embedding.size()) + ")");
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("interpolation: delta must lie in [0, 1]");
  if (real.score != 0.0 || synth.score != 1.0)
    throw std::invalid_argument("interpolation: endpoints must be a real (score 0) and a synthetic (score 1) sample");
  SoftSample out;
  out.embedding.resize(real.embedding.size());
  for (std::size_t i = 0; i < out.embedding.size(); ++i)
    out.embedding[i] = (1.0 - delta) * real.embedding[i] + delta * synth.embedding[i];
  out.score = delta;
  return out;
}

InterpolationPlan plan_interpolation(std::span<const double> scores, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("interpolation rate must lie in [0, 1]");
  InterpolationPlan plan;
  if (rate == 0.0 || scores.empty()) return plan;
  std::vector<std::size_t> reals, synths;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == 0.0) reals.push_back(i);
    if (scores[i] == 1.0) synths.push_back(i);
  }
  if (reals.empty() || synths.empty()) {
    plan.single_class = true;
    return plan;
  }
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(scores.size())));
  std::vector<std::size_t> positions(scores.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  rng.shuffle(std::span<std::size_t>(positions));
  positions.resize(count);
  std::sort(positions.begin(), positions.end());
  for (auto pos : positions) {
    const auto r = reals[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(reals.size()) - 1))];
    const auto s = synths[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(synths.size()) - 1))];
    plan.entries.push_back({pos, r, s, rng.uniform()});
  }
  return plan;
}

AugmentedBatch augment_batch_with_interpolation(const std::vector<SoftSample>& batch, double rate, Rng& rng) {
  std::vector<double> scores;
  scores.reserve(batch.size());
  for (const auto& s : batch) scores.push_back(s.score);
  const auto plan = plan_interpolation(scores, rate, rng);
  AugmentedBatch out{batch, std::vector<bool>(batch.size(), false), plan.single_class};
  for (const auto& e : plan.entries) {
    out.samples[e.position] = interpolate_features(batch[e.real_index], batch[e.synth_index], e.delta);
    out.replaced[e.position] = true;
  }
  return out;
}

}  // namespace synthdet
