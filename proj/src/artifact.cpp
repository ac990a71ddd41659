#include "synthdet/artifact.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "synthdet/hash.hpp"
#include "synthdet/nn/adam.hpp"

namespace synthdet {

using nn::FeatureMap;

nn::FeatureMap<float> to_feature_map(const Image& image) {
  FeatureMap<float> map(image.channels(), image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        map.channel(c)[static_cast<std::size_t>(y) * image.width() + x] = image.at(y, x, c);
  return map;
}

namespace {

Image to_image(const FeatureMap<float>& map) {
  Image image(map.height, map.width, map.channels);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      for (int c = 0; c < map.channels; ++c)
        image.at(y, x, c) = map.channel(c)[static_cast<std::size_t>(y) * map.width + x];
  return image;
}

}  // namespace

// --- identity ---------------------------------------------------------------

LatentCode IdentityBackend::encode(const Image& x) const {
  auto mean = to_feature_map(x);
  LatentMap sigma(mean.channels, mean.height, mean.width);
  return {std::move(mean), std::move(sigma)};
}

Image IdentityBackend::decode(const LatentMap& latent) const { return to_image(latent); }

// --- linear -----------------------------------------------------------------

LinearBackend::LinearBackend(int height, int width, int channels, std::vector<std::vector<double>> encoder,
                             std::vector<double> encoder_bias, std::vector<std::vector<double>> decoder,
                             std::vector<double> decoder_bias)
    : height_(height),
      width_(width),
      channels_(channels),
      encoder_(std::move(encoder)),
      encoder_bias_(std::move(encoder_bias)),
      decoder_(std::move(decoder)),
      decoder_bias_(std::move(decoder_bias)) {
  const auto n = static_cast<std::size_t>(height) * width * channels;
  const auto k = encoder_.size();
  if (encoder_bias_.size() != k || decoder_.size() != n || decoder_bias_.size() != n)
    throw std::invalid_argument("linear backend: inconsistent matrix sizes");
  for (const auto& row : encoder_)
    if (row.size() != n) throw std::invalid_argument("linear backend: encoder row length must equal pixel count");
  for (const auto& row : decoder_)
    if (row.size() != k) throw std::invalid_argument("linear backend: decoder row length must equal latent size");
}

LatentCode LinearBackend::encode(const Image& x) const {
  if (x.height() != height_ || x.width() != width_ || x.channels() != channels_)
    throw std::invalid_argument("backend shape mismatch: linear backend expects " + std::to_string(height_) + "x" +
                                std::to_string(width_) + "x" + std::to_string(channels_));
  const auto pixels = x.pixels();
  LatentMap mean(static_cast<int>(encoder_.size()), 1, 1);
  for (std::size_t j = 0; j < encoder_.size(); ++j) {
    double acc = encoder_bias_[j];
    for (std::size_t i = 0; i < pixels.size(); ++i) acc += encoder_[j][i] * pixels[i];
    mean.data[j] = static_cast<float>(acc);
  }
  LatentMap sigma(mean.channels, 1, 1);
  return {std::move(mean), std::move(sigma)};
}

Image LinearBackend::decode(const LatentMap& latent) const {
  if (latent.data.size() != encoder_.size()) throw std::invalid_argument("backend shape mismatch: latent size");
  Image out(height_, width_, channels_);
  auto pixels = out.pixels();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    double acc = decoder_bias_[i];
    for (std::size_t j = 0; j < latent.data.size(); ++j) acc += decoder_[i][j] * latent.data[j];
    pixels[i] = static_cast<float>(acc);
  }
  return out;
}

nlohmann::json LinearBackend::descriptor() const {
  return {{"kind", "linear"},         {"height", height_},           {"width", width_},
          {"channels", channels_},    {"encoder", encoder_},         {"encoder_bias", encoder_bias_},
          {"decoder", decoder_},      {"decoder_bias", decoder_bias_}};
}

// --- patch autoencoder --------------------------------------------------------

PatchAutoencoder::PatchAutoencoder(Config config, std::uint64_t init_seed) : config_(config) {
  if (config_.patch < 1 || config_.latent < 1 || config_.hidden < 0)
    throw std::invalid_argument("invalid autoencoder configuration");
  const int in = 3 * config_.patch * config_.patch;
  const int enc_width = config_.hidden > 0 ? config_.hidden : in;
  const int dec_width = config_.hidden > 0 ? config_.hidden : config_.latent;
  enc_hidden_ = nn::Conv2d<float>(in, std::max(config_.hidden, 1), 1);
  enc_mean_ = nn::Conv2d<float>(enc_width, config_.latent, 1);
  enc_logvar_ = nn::Conv2d<float>(enc_width, config_.latent, 1);
  dec_hidden_ = nn::Conv2d<float>(config_.latent, std::max(config_.hidden, 1), 1);
  dec_out_ = nn::Conv2d<float>(dec_width, in, 1);
  Rng rng(init_seed);
  enc_hidden_.init(rng);
  enc_mean_.init(rng);
  enc_logvar_.init(rng);
  dec_hidden_.init(rng);
  dec_out_.init(rng);
  for (auto& w : enc_logvar_.weight().value) w *= 0.01f;
}

nn::ParameterList PatchAutoencoder::parameters() {
  nn::ParameterList list;
  auto add = [&](nn::Conv2d<float>& conv, const std::string& name) {
    auto p = conv.parameters();
    nn::prefix_names(p, name + ".");
    nn::append(list, std::move(p));
  };
  if (config_.hidden > 0) add(enc_hidden_, "enc_hidden");
  add(enc_mean_, "enc_mean");
  add(enc_logvar_, "enc_logvar");
  if (config_.hidden > 0) add(dec_hidden_, "dec_hidden");
  add(dec_out_, "dec_out");
  return list;
}

std::string PatchAutoencoder::id() const {
  Fnv1a64 h;
  for (const auto& p : const_cast<PatchAutoencoder*>(this)->parameters()) {
    h.update(p.name);
    h.update_values(std::span<const float>(p.as_float()));
  }
  return label_ + "-ae-" + to_hex(h.digest());
}

void PatchAutoencoder::check_shape(const Image& x) const {
  if (x.channels() != 3 || x.height() % config_.patch != 0 || x.width() % config_.patch != 0)
    throw std::invalid_argument("backend shape mismatch: autoencoder needs a 3-channel image with sides divisible by " +
                                std::to_string(config_.patch));
}

LatentCode PatchAutoencoder::encode(const Image& x) const {
  check_shape(x);
  auto patches = nn::space_to_depth(to_feature_map(x), config_.patch);
  if (config_.hidden > 0) {
    patches = enc_hidden_.forward(patches);
    nn::relu_inplace(std::span<float>(patches.data));
  }
  LatentCode code{enc_mean_.forward(patches), enc_logvar_.forward(patches)};
  for (auto& v : code.sigma.data) v = std::exp(0.5f * std::clamp(v, -20.0f, 20.0f));
  return code;
}

Image PatchAutoencoder::decode(const LatentMap& latent) const {
  if (latent.channels != config_.latent) throw std::invalid_argument("backend shape mismatch: latent channels");
  FeatureMap<float> h = latent;
  if (config_.hidden > 0) {
    h = dec_hidden_.forward(latent);
    nn::relu_inplace(std::span<float>(h.data));
  }
  return to_image(nn::depth_to_space(dec_out_.forward(h), config_.patch));
}

double PatchAutoencoder::train(const std::vector<Image>& images, const TrainOptions& options) {
  if (images.empty()) throw std::invalid_argument("autoencoder training needs at least one image");
  for (const auto& img : images)
    if (img.channels() != 3 || img.height() < config_.patch || img.width() < config_.patch)
      throw std::invalid_argument("autoencoder training images must be RGB and at least one patch in size");

  Rng rng(options.seed);
  nn::Adam adam(parameters(), {.learning_rate = options.learning_rate});
  const int p = config_.patch;
  const int in = 3 * p * p;
  const int n = options.batch_patches;
  const int tail_start = options.steps - std::max(1, options.steps / 10);
  double tail_error = 0.0;
  int tail_count = 0;

  for (int step = 0; step < options.steps; ++step) {
    // Patches laid out as a 1 x n strip so every layer is a 1x1 convolution.
    FeatureMap<float> x(in, 1, n);
    for (int j = 0; j < n; ++j) {
      const auto& img = images[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(images.size()) - 1))];
      const int y0 = static_cast<int>(rng.uniform_int(0, img.height() - p));
      const int x0 = static_cast<int>(rng.uniform_int(0, img.width() - p));
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int c = 0; c < 3; ++c) x.channel((dy * p + dx) * 3 + c)[j] = img.at(y0 + dy, x0 + dx, c);
    }

    FeatureMap<float> h = x;
    if (config_.hidden > 0) {
      h = enc_hidden_.forward(x);
      nn::relu_inplace(std::span<float>(h.data));
    }
    auto mu = enc_mean_.forward(h);
    auto logvar = enc_logvar_.forward(h);
    FeatureMap<float> eps(mu.channels, 1, n), z(mu.channels, 1, n), sigma(mu.channels, 1, n);
    for (std::size_t i = 0; i < mu.data.size(); ++i) {
      logvar.data[i] = std::clamp(logvar.data[i], -20.0f, 20.0f);
      sigma.data[i] = std::exp(0.5f * logvar.data[i]);
      eps.data[i] = static_cast<float>(rng.normal());
      z.data[i] = mu.data[i] + sigma.data[i] * eps.data[i];
    }
    FeatureMap<float> hd = z;
    if (config_.hidden > 0) {
      hd = dec_hidden_.forward(z);
      nn::relu_inplace(std::span<float>(hd.data));
    }
    auto out = dec_out_.forward(hd);

    FeatureMap<float> g_out(in, 1, n);
    double sq = 0.0;
    const float scale = 2.0f / static_cast<float>(in * n);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const float d = out.data[i] - x.data[i];
      sq += static_cast<double>(d) * d;
      g_out.data[i] = scale * d;
    }
    if (step >= tail_start) {
      tail_error += sq / static_cast<double>(in * n);
      ++tail_count;
    }

    FeatureMap<float> g_hd;
    dec_out_.backward(hd, g_out, &g_hd);
    FeatureMap<float> g_z = g_hd;
    if (config_.hidden > 0) {
      nn::relu_backward_inplace(std::span<const float>(hd.data), std::span<float>(g_hd.data));
      dec_hidden_.backward(z, g_hd, &g_z);
    }
    FeatureMap<float> g_mu(mu.channels, 1, n), g_lv(mu.channels, 1, n);
    const auto kl = static_cast<float>(options.kl_weight / n);
    for (std::size_t i = 0; i < mu.data.size(); ++i) {
      g_mu.data[i] = g_z.data[i] + kl * mu.data[i];
      g_lv.data[i] = g_z.data[i] * eps.data[i] * 0.5f * sigma.data[i] + kl * 0.5f * (sigma.data[i] * sigma.data[i] - 1.0f);
    }
    FeatureMap<float> g_h1, g_h2;
    const bool need_input_grad = config_.hidden > 0;
    enc_mean_.backward(h, g_mu, need_input_grad ? &g_h1 : nullptr);
    enc_logvar_.backward(h, g_lv, need_input_grad ? &g_h2 : nullptr);
    if (need_input_grad) {
      for (std::size_t i = 0; i < g_h1.data.size(); ++i) g_h1.data[i] += g_h2.data[i];
      nn::relu_backward_inplace(std::span<const float>(h.data), std::span<float>(g_h1.data));
      enc_hidden_.backward(x, g_h1, nullptr);
    }
    adam.step();
  }
  return tail_count > 0 ? tail_error / tail_count : 0.0;
}

nlohmann::json PatchAutoencoder::descriptor() const {
  return {{"kind", label_}, {"patch", config_.patch}, {"hidden", config_.hidden}, {"latent", config_.latent}};
}

void PatchAutoencoder::store_weights(TensorArchive& archive, const std::string& prefix) const {
  archive.store(const_cast<PatchAutoencoder*>(this)->parameters(), prefix);
}

void PatchAutoencoder::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  archive.kind = "autoencoder";
  archive.meta = descriptor();
  store_weights(archive, "");
  write_archive(archive, path);
}

std::unique_ptr<PatchAutoencoder> PatchAutoencoder::from_archive(const TensorArchive& archive, const std::string& prefix,
                                                                 const nlohmann::json& descriptor) {
  Config config;
  try {
    config.patch = descriptor.at("patch").get<int>();
    config.hidden = descriptor.at("hidden").get<int>();
    config.latent = descriptor.at("latent").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::schema, std::string("autoencoder descriptor malformed: ") + e.what());
  }
  auto ae = std::make_unique<PatchAutoencoder>(config, 0);
  ae->label_ = descriptor.value("kind", std::string("toy"));
  archive.restore(ae->parameters(), prefix);
  return ae;
}

std::unique_ptr<PatchAutoencoder> PatchAutoencoder::load(const std::filesystem::path& path) {
  const auto archive = read_archive(path);
  if (archive.kind != "autoencoder")
    throw CheckpointError(CheckpointError::Kind::schema, "expected an autoencoder weights file, found '" + archive.kind + "'");
  auto ae = from_archive(archive, "", archive.meta);
  ae->label_ = "external";
  return ae;
}

std::unique_ptr<ReconstructionBackend> make_backend(const std::string& spec) {
  if (spec == "identity") return std::make_unique<IdentityBackend>();
  if (spec == "toy") return nullptr;
  constexpr std::string_view kExternal = "external:";
  if (spec.rfind(kExternal, 0) == 0) return PatchAutoencoder::load(spec.substr(kExternal.size()));
  throw std::invalid_argument("unknown reconstruction backend '" + spec + "' (expected identity, toy or external:<path>)");
}

std::unique_ptr<ReconstructionBackend> backend_from_descriptor(const nlohmann::json& descriptor,
                                                               const TensorArchive* archive, const std::string& prefix) {
  const auto kind = descriptor.value("kind", std::string());
  if (kind == "identity") return std::make_unique<IdentityBackend>();
  if (kind == "linear") {
    return std::make_unique<LinearBackend>(
        descriptor.at("height").get<int>(), descriptor.at("width").get<int>(), descriptor.at("channels").get<int>(),
        descriptor.at("encoder").get<std::vector<std::vector<double>>>(),
        descriptor.at("encoder_bias").get<std::vector<double>>(),
        descriptor.at("decoder").get<std::vector<std::vector<double>>>(),
        descriptor.at("decoder_bias").get<std::vector<double>>());
  }
  if (kind == "toy" || kind == "external") {
    if (archive == nullptr) throw CheckpointError(CheckpointError::Kind::schema, "autoencoder weights missing");
    return PatchAutoencoder::from_archive(*archive, prefix, descriptor);
  }
  throw CheckpointError(CheckpointError::Kind::schema, "unknown reconstruction backend kind '" + kind + "'");
}

// --- residuals -------------------------------------------------------------------

Image reconstruct(const Image& x, const ReconstructionBackend& backend) {
  if (x.empty()) throw std::invalid_argument("cannot reconstruct an empty image");
  const auto code = backend.encode(x);
  auto out = backend.decode(code.mean);
  if (!out.same_shape(x)) throw std::invalid_argument("backend shape mismatch: decoded image differs in shape");
  out.clamp01();
  return out;
}

namespace {

ArtifactMap absolute_difference(const Image& a, const Image& b) {
  Image delta(a.height(), a.width(), a.channels());
  auto d = delta.pixels();
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::fabs(pa[i] - pb[i]);
  return {std::move(delta)};
}

}  // namespace

ArtifactMap extract_artifact(const Image& x, const ReconstructionBackend& backend) {
  return absolute_difference(reconstruct(x, backend), x);
}

ArtifactMap extract_updown_artifact(const Image& x) {
  if (x.height() < 2 || x.width() < 2) throw std::invalid_argument("up/down artifact needs both image edges >= 2");
  const auto down = resize_bilinear(x, x.height() / 2, x.width() / 2);
  const auto up = resize_bilinear(down, x.height(), x.width());
  return absolute_difference(up, x);
}

// --- artifact encoder --------------------------------------------------------------

ArtifactEncoder::ArtifactEncoder(Config config, std::uint64_t init_seed) : config_(config) {
  if (config_.pool < 1 || config_.stem_patch < 1 || config_.channels < 1 || config_.blocks < 0 || config_.output_dim < 1)
    throw std::invalid_argument("invalid artifact encoder configuration");
  Rng rng(init_seed);
  stem_ = nn::Conv2d<float>(config_.input_channels * config_.stem_patch * config_.stem_patch, config_.channels, 1);
  stem_.init(rng);
  for (int b = 0; b < config_.blocks; ++b) {
    conv_a_.emplace_back(config_.channels, config_.channels, 3, 1, 1);
    conv_b_.emplace_back(config_.channels, config_.channels, 3, 1, 1);
    conv_a_.back().init(rng);
    conv_b_.back().init(rng);
    for (auto& w : conv_b_.back().weight().value) w *= 0.5f;
  }
  head_ = nn::Linear<float>(config_.channels, config_.output_dim);
  head_.init(rng);
}

nn::FeatureMap<float> ArtifactEncoder::stem_input(const ArtifactMap& artifact) const {
  const auto& d = artifact.delta;
  const int block = config_.pool * config_.stem_patch;
  if (d.channels() != config_.input_channels || d.height() < block || d.width() < block || d.height() % block != 0 ||
      d.width() % block != 0)
    throw std::invalid_argument("artifact encoder shape mismatch: expected " + std::to_string(config_.input_channels) +
                                " channels and sides divisible by " + std::to_string(block) + ", got " +
                                std::to_string(d.height()) + "x" + std::to_string(d.width()) + "x" +
                                std::to_string(d.channels()));
  auto map = to_feature_map(d);
  if (config_.pool > 1) map = nn::avg_pool(map, config_.pool);
  return nn::space_to_depth(map, config_.stem_patch);
}

std::vector<float> ArtifactEncoder::forward(const ArtifactMap& artifact, Trace& trace) const {
  trace.stem_input = stem_input(artifact);
  trace.stem_output = stem_.forward(trace.stem_input);
  nn::relu_inplace(std::span<float>(trace.stem_output.data));
  trace.block_hidden.clear();
  trace.block_output.clear();
  const FeatureMap<float>* current = &trace.stem_output;
  for (int b = 0; b < config_.blocks; ++b) {
    auto hidden = conv_a_[static_cast<std::size_t>(b)].forward(*current);
    nn::relu_inplace(std::span<float>(hidden.data));
    auto out = conv_b_[static_cast<std::size_t>(b)].forward(hidden);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(0.0f, out.data[i] + current->data[i]);
    trace.block_hidden.push_back(std::move(hidden));
    trace.block_output.push_back(std::move(out));
    current = &trace.block_output.back();
  }
  trace.pooled = nn::global_avg_pool(*current);
  return head_.forward(trace.pooled);
}

std::vector<float> ArtifactEncoder::encode(const ArtifactMap& artifact) const {
  Trace trace;
  return forward(artifact, trace);
}

void ArtifactEncoder::backward(const Trace& trace, std::span<const float> grad_output) {
  std::vector<float> grad_pooled(trace.pooled.size());
  head_.backward(trace.pooled, grad_output, grad_pooled);
  const auto& last = config_.blocks > 0 ? trace.block_output.back() : trace.stem_output;
  auto grad = nn::global_avg_pool_backward<float>(grad_pooled, last.channels, last.height, last.width);
  for (int b = config_.blocks - 1; b >= 0; --b) {
    const auto bi = static_cast<std::size_t>(b);
    const auto& out = trace.block_output[bi];
    const auto& in = b > 0 ? trace.block_output[bi - 1] : trace.stem_output;
    nn::relu_backward_inplace(std::span<const float>(out.data), std::span<float>(grad.data));
    FeatureMap<float> grad_hidden;
    conv_b_[bi].backward(trace.block_hidden[bi], grad, &grad_hidden);
    nn::relu_backward_inplace(std::span<const float>(trace.block_hidden[bi].data), std::span<float>(grad_hidden.data));
    FeatureMap<float> grad_in;
    conv_a_[bi].backward(in, grad_hidden, &grad_in);
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += grad_in.data[i];
  }
  nn::relu_backward_inplace(std::span<const float>(trace.stem_output.data), std::span<float>(grad.data));
  stem_.backward(trace.stem_input, grad, nullptr);
}

void ArtifactEncoder::zero_final_layer() {
  std::fill(head_.weight().value.begin(), head_.weight().value.end(), 0.0f);
  std::fill(head_.bias().value.begin(), head_.bias().value.end(), 0.0f);
}

nn::ParameterList ArtifactEncoder::parameters() {
  nn::ParameterList list;
  auto stem = stem_.parameters();
  nn::prefix_names(stem, "stem.");
  nn::append(list, std::move(stem));
  for (std::size_t b = 0; b < conv_a_.size(); ++b) {
    auto a = conv_a_[b].parameters();
    nn::prefix_names(a, "block" + std::to_string(b) + ".a.");
    nn::append(list, std::move(a));
    auto c = conv_b_[b].parameters();
    nn::prefix_names(c, "block" + std::to_string(b) + ".b.");
    nn::append(list, std::move(c));
  }
  auto head = head_.parameters();
  nn::prefix_names(head, "head.");
  nn::append(list, std::move(head));
  return list;
}

nlohmann::json ArtifactEncoder::config_json() const {
  return {{"input_channels", config_.input_channels},
          {"pool", config_.pool},             {"stem_patch", config_.stem_patch},
          {"channels", config_.channels},     {"blocks", config_.blocks},
          {"output_dim", config_.output_dim}};
}

ArtifactEncoder::Config ArtifactEncoder::config_from_json(const nlohmann::json& j) {
  Config c;
  c.input_channels = j.value("input_channels", c.input_channels);
  c.pool = j.value("pool", c.pool);
  c.stem_patch = j.value("stem_patch", c.stem_patch);
  c.channels = j.value("channels", c.channels);
  c.blocks = j.value("blocks", c.blocks);
  c.output_dim = j.value("output_dim", c.output_dim);
  return c;
}

}  // namespace synthdet
