#include "synthdet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>
#include <thread>

#include "synthdet/metrics.hpp"
#include "synthdet/nn/adam.hpp"

namespace synthdet {

void validate_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(cfg.interpolation_rate >= 0.0 && cfg.interpolation_rate <= 1.0))
    throw std::invalid_argument("interpolation_rate must lie in [0, 1]");
  if (cfg.early_stop_patience < 0) throw std::invalid_argument("early_stop_patience must be >= 0");
  if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (is_score_level(cfg.fusion_mode))
    throw std::invalid_argument("fusion mode '" + to_string(cfg.fusion_mode) +
                                "' combines two trained models; train only_semantic and only_artifact instead");
  validate_policy(cfg.augmentation);
  validate_policy(cfg.dropout);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  const auto& ae = cfg.autoencoder;
  const auto& at = cfg.autoencoder_training;
  nlohmann::json encoder = ArtifactEncoder(cfg.encoder, 0).config_json();
  return {
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"learning_rate", cfg.learning_rate},
      {"interpolation_rate", cfg.interpolation_rate},
      {"jpeg_probability", cfg.augmentation.jpeg_probability},
      {"jpeg_quality_min", cfg.augmentation.jpeg_quality_min},
      {"jpeg_quality_max", cfg.augmentation.jpeg_quality_max},
      {"p_drop_sem", cfg.dropout.p_drop_sem},
      {"p_drop_art", cfg.dropout.p_drop_art},
      {"seed", cfg.seed},
      {"stratified_batches", cfg.stratified_batches},
      {"early_stop_patience", cfg.early_stop_patience},
      {"fusion_mode", to_string(cfg.fusion_mode)},
      {"backbone", cfg.backbone},
      {"recon_backend", cfg.recon_backend},
      {"normalize_embeddings", cfg.normalize_embeddings},
      {"encoder", encoder},
      {"regulator_hidden", cfg.regulator_hidden},
      {"autoencoder",
       {{"patch", ae.patch},
        {"hidden", ae.hidden},
        {"latent", ae.latent},
        {"steps", at.steps},
        {"batch_patches", at.batch_patches},
        {"learning_rate", at.learning_rate},
        {"kl_weight", at.kl_weight}}},
      {"workers", cfg.workers},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKnown = {
      "epochs",     "batch_size",         "learning_rate",       "interpolation_rate", "jpeg_probability",
      "jpeg_quality_min", "jpeg_quality_max", "p_drop_sem",   "p_drop_art",         "seed",
      "stratified_batches", "early_stop_patience", "fusion_mode", "backbone",          "recon_backend",
      "normalize_embeddings", "encoder",  "regulator_hidden",    "autoencoder",        "workers"};
  if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kKnown.contains(key)) throw std::invalid_argument("unknown training config key '" + key + "'");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.interpolation_rate = j.value("interpolation_rate", c.interpolation_rate);
    c.augmentation.jpeg_probability = j.value("jpeg_probability", c.augmentation.jpeg_probability);
    c.augmentation.jpeg_quality_min = j.value("jpeg_quality_min", c.augmentation.jpeg_quality_min);
    c.augmentation.jpeg_quality_max = j.value("jpeg_quality_max", c.augmentation.jpeg_quality_max);
    c.dropout.p_drop_sem = j.value("p_drop_sem", c.dropout.p_drop_sem);
    c.dropout.p_drop_art = j.value("p_drop_art", c.dropout.p_drop_art);
    c.seed = j.value("seed", c.seed);
    c.stratified_batches = j.value("stratified_batches", c.stratified_batches);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    if (j.contains("fusion_mode")) c.fusion_mode = parse_fusion_mode(j["fusion_mode"].get<std::string>());
    c.backbone = j.value("backbone", c.backbone);
    c.recon_backend = j.value("recon_backend", c.recon_backend);
    c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
    if (j.contains("encoder")) c.encoder = ArtifactEncoder::config_from_json(j["encoder"]);
    c.regulator_hidden = j.value("regulator_hidden", c.regulator_hidden);
    if (j.contains("autoencoder")) {
      const auto& a = j["autoencoder"];
      c.autoencoder.patch = a.value("patch", c.autoencoder.patch);
      c.autoencoder.hidden = a.value("hidden", c.autoencoder.hidden);
      c.autoencoder.latent = a.value("latent", c.autoencoder.latent);
      c.autoencoder_training.steps = a.value("steps", c.autoencoder_training.steps);
      c.autoencoder_training.batch_patches = a.value("batch_patches", c.autoencoder_training.batch_patches);
      c.autoencoder_training.learning_rate = a.value("learning_rate", c.autoencoder_training.learning_rate);
      c.autoencoder_training.kl_weight = a.value("kl_weight", c.autoencoder_training.kl_weight);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad training config value: ") + e.what());
  }
  validate_config(c);
  return c;
}

double soft_bce_loss(double score, double target) {
  constexpr double kEps = 1e-7;
  const double s = std::clamp(score, kEps, 1.0 - kEps);
  return -(target * std::log(s) + (1.0 - target) * std::log(1.0 - s));
}

double soft_bce_with_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::fabs(logit)));
}

nlohmann::json to_json(const EpochLog& log) {
  nlohmann::json j = {{"epoch", log.epoch}, {"split", log.split}, {"loss", log.loss}};
  j["ap"] = log.ap ? nlohmann::json(*log.ap) : nlohmann::json(nullptr);
  if (log.split == "train") j["interpolated_fraction"] = log.interpolated_fraction;
  j["seconds"] = log.seconds;
  return j;
}

namespace {

struct Sample {
  Image8 image;  // preprocessed to the detector resolution
  int label = 0;
  std::vector<float> embedding;  // raw backbone output for the unaugmented image
};

std::vector<Sample> load_split(const DatasetManifest& m, Split split, const SemanticBackbone* backbone) {
  std::vector<Sample> out;
  for (const auto* r : m.in_split(split)) {
    Sample s;
    const auto img = preprocess_input(load_image(m.resolve(*r)));
    s.image = quantize(img);
    s.label = r->label;
    if (backbone != nullptr) s.embedding = backbone->embed(dequantize(s.image));
    out.push_back(std::move(s));
  }
  return out;
}

/// Forward-pass state for one batch member.
struct Prepared {
  std::vector<double> v_sem;
  std::vector<double> v_art;
  ArtifactEncoder::Trace trace;
};

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t t = 0; t < w; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  for (auto& th : threads) th.join();
}

/// Orders sample indices for one epoch. Stratified ordering interleaves the two
/// classes evenly so that every contiguous batch keeps the global proportion.
std::vector<std::size_t> epoch_order(const std::vector<Sample>& samples, bool stratified, Rng& rng) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (!stratified) {
    rng.shuffle(std::span<std::size_t>(order));
    return order;
  }
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < samples.size(); ++i) cls[samples[i].label].push_back(i);
  std::vector<std::pair<double, std::size_t>> keyed;
  for (auto& c : cls) {
    rng.shuffle(std::span<std::size_t>(c));
    for (std::size_t k = 0; k < c.size(); ++k)
      keyed.emplace_back((static_cast<double>(k) + rng.uniform()) / static_cast<double>(c.size()), c[k]);
  }
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  return order;
}

std::optional<double> safe_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) return std::nullopt;
  return metrics::average_precision(scores, labels);
}

}  // namespace

TrainResult train_detector(const DatasetManifest& manifest, const TrainConfig& cfg, std::ostream* log) {
  validate_config(cfg);
  const bool need_sem = cfg.fusion_mode != FusionMode::only_artifact;
  const bool need_art = cfg.fusion_mode != FusionMode::only_semantic;

  auto backbone = make_backbone(cfg.backbone);
  TrainResult result;
  result.backbone_checksum_before = backbone->weights_checksum();

  auto train = load_split(manifest, Split::train, need_sem ? backbone.get() : nullptr);
  auto val = load_split(manifest, Split::val, need_sem ? backbone.get() : nullptr);
  {
    int counts[2] = {0, 0};
    for (const auto& s : train) {
      if (s.label != 0 && s.label != 1) throw std::invalid_argument("training record with invalid label");
      ++counts[s.label];
    }
    if (counts[0] == 0 || counts[1] == 0)
      throw std::invalid_argument("training split must contain both real and synthetic images (found " +
                                  std::to_string(counts[0]) + " real, " + std::to_string(counts[1]) + " synthetic)");
  }

  std::unique_ptr<ReconstructionBackend> backend = make_backend(cfg.recon_backend);
  if (!backend) {
    auto ae = std::make_unique<PatchAutoencoder>(cfg.autoencoder, derive_seed(cfg.seed, 0xAE));
    std::vector<Image> reals;
    for (const auto& s : train)
      if (s.label == 0) reals.push_back(dequantize(s.image));
    auto options = cfg.autoencoder_training;
    options.seed = derive_seed(cfg.seed, 0xAE, 1);
    result.autoencoder_error = ae->train(reals, options);
    backend = std::move(ae);
  }

  SemanticNormalizer normalizer;
  if (need_sem) {
    std::vector<std::vector<float>> embeddings;
    for (const auto& s : train) embeddings.push_back(s.embedding);
    normalizer = SemanticNormalizer::fit(embeddings, cfg.normalize_embeddings);
  } else {
    normalizer = {cfg.normalize_embeddings, std::vector<double>(static_cast<std::size_t>(backbone->dim()), 0.0),
                  std::vector<double>(static_cast<std::size_t>(backbone->dim()), 1.0)};
  }

  ArtifactEncoder encoder(cfg.encoder, derive_seed(cfg.seed, 0xE7C));
  FusionNetwork::Config fc{backbone->dim(), encoder.output_dim(), cfg.regulator_hidden, cfg.fusion_mode};
  FusionNetwork fusion(fc, derive_seed(cfg.seed, 0xF05));
  Detector detector(std::move(backbone), std::move(backend), std::move(encoder), std::move(fusion), std::move(normalizer));
  detector.config_snapshot() = to_json(cfg);

  auto params = detector.trainable_parameters();
  nn::Adam adam(params, {.learning_rate = cfg.learning_rate});
  const std::size_t sem_dim = static_cast<std::size_t>(detector.backbone().dim());
  const std::size_t art_dim = static_cast<std::size_t>(detector.encoder().output_dim());

  // Features of one sample, optionally JPEG-augmented. The artifact trace is kept for backprop.
  auto prepare = [&](const Sample& s, const std::optional<TransformSpec>& aug, Prepared& out, bool keep_trace) {
    Image img = dequantize(s.image);
    if (aug) img = apply_transform(img, *aug);
    if (need_sem) {
      out.v_sem = aug ? detector.normalizer().apply(detector.backbone().embed(img)) : detector.normalizer().apply(s.embedding);
    } else {
      out.v_sem.assign(sem_dim, 0.0);
    }
    if (need_art) {
      const auto delta = extract_artifact(img, detector.backend());
      ArtifactEncoder::Trace trace;
      const auto v = detector.encoder().forward(delta, trace);
      out.v_art.assign(v.begin(), v.end());
      if (keep_trace) out.trace = std::move(trace);
    } else {
      out.v_art.assign(art_dim, 0.0);
    }
  };

  auto evaluate_val = [&]() -> std::pair<double, std::optional<double>> {
    std::vector<Prepared> prepared(val.size());
    parallel_for(val.size(), cfg.workers, [&](std::size_t i) { prepare(val[i], std::nullopt, prepared[i], false); });
    std::vector<double> scores;
    std::vector<int> labels;
    double loss = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double z = detector.fusion().logit(prepared[i].v_sem, prepared[i].v_art);
      loss += soft_bce_with_logit(z, val[i].label);
      scores.push_back(nn::sigmoid(z));
      labels.push_back(val[i].label);
    }
    return {loss / static_cast<double>(val.size()), safe_ap(scores, labels)};
  };

  auto snapshot = [&] {
    std::vector<std::vector<double>> values;
    for (const auto& p : params) {
      std::vector<double> v(p.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = p.get(i);
      values.push_back(std::move(v));
    }
    return values;
  };

  std::vector<std::vector<double>> best_weights = snapshot();
  double best_metric = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;
  std::size_t replaced_total = 0, positions_total = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg.seed, 0x0DE, static_cast<std::uint64_t>(epoch)));
    const auto order = epoch_order(train, cfg.stratified_batches, order_rng);
    double loss_sum = 0.0;
    std::size_t epoch_positions = 0, epoch_replaced = 0;
    std::vector<double> hard_scores;
    std::vector<int> hard_labels;

    for (std::size_t start = 0, batch_index = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      std::vector<Prepared> batch(n);
      parallel_for(n, cfg.workers, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) << 32 | 0xA06, idx));
        prepare(train[idx], sample_train_augmentation(cfg.augmentation, rng), batch[i], true);
      });

      Rng batch_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) << 32 | 0xB47, batch_index));
      std::vector<double> targets(n);
      for (std::size_t i = 0; i < n; ++i) targets[i] = train[order[start + i]].label;
      const auto plan = plan_interpolation(targets, cfg.interpolation_rate, batch_rng);
      std::vector<const InterpolationPlan::Entry*> entry_at(n, nullptr);
      for (const auto& e : plan.entries) entry_at[e.position] = &e;

      std::vector<std::vector<double>> grad_art(n, std::vector<double>(art_dim, 0.0));
      std::vector<double> g_art(art_dim);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> v_sem, v_art;
        double target;
        const auto* e = entry_at[p];
        if (e != nullptr) {
          // Both branches are interpolated with the same delta so that the soft
          // target stays consistent with the whole input.
          const auto& r = batch[e->real_index];
          const auto& s = batch[e->synth_index];
          v_sem = interpolate_features({r.v_sem, 0.0}, {s.v_sem, 1.0}, e->delta).embedding;
          v_art = interpolate_features({r.v_art, 0.0}, {s.v_art, 1.0}, e->delta).embedding;
          target = e->delta;
        } else {
          v_sem = batch[p].v_sem;
          v_art = batch[p].v_art;
          target = targets[p];
        }
        const auto mask = cfg.fusion_mode == FusionMode::adaptive ? sample_dropout_mask(cfg.dropout, batch_rng) : BranchMask{};
        FusionNetwork::Trace trace;
        const double z = detector.fusion().logit(v_sem, v_art, mask, &trace);
        loss_sum += soft_bce_with_logit(z, target);
        if (e == nullptr) {
          hard_scores.push_back(nn::sigmoid(z));
          hard_labels.push_back(static_cast<int>(target));
        }
        const double g = (nn::sigmoid(z) - target) * inv_n;
        detector.fusion().backward(trace, g, need_art ? std::span<double>(g_art) : std::span<double>());
        if (!need_art) continue;
        if (e != nullptr) {
          for (std::size_t k = 0; k < art_dim; ++k) {
            grad_art[e->real_index][k] += (1.0 - e->delta) * g_art[k];
            grad_art[e->synth_index][k] += e->delta * g_art[k];
          }
        } else {
          for (std::size_t k = 0; k < art_dim; ++k) grad_art[p][k] += g_art[k];
        }
      }
      if (need_art) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<float> g(grad_art[i].begin(), grad_art[i].end());
          detector.encoder().backward(batch[i].trace, g);
        }
      }
      adam.step();
      epoch_positions += n;
      epoch_replaced += plan.entries.size();
    }

    replaced_total += epoch_replaced;
    positions_total += epoch_positions;
    EpochLog train_log;
    train_log.epoch = epoch;
    train_log.split = "train";
    train_log.loss = loss_sum / static_cast<double>(epoch_positions);
    train_log.ap = safe_ap(hard_scores, hard_labels);
    train_log.interpolated_fraction = static_cast<double>(epoch_replaced) / static_cast<double>(epoch_positions);

    std::optional<EpochLog> val_log;
    if (!val.empty()) {
      const auto [loss, ap] = evaluate_val();
      val_log = EpochLog{epoch, "val", loss, ap, 0.0, 0.0};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    train_log.seconds = seconds;
    result.log.push_back(train_log);
    if (log != nullptr) *log << to_json(train_log).dump() << '\n';
    if (val_log) {
      val_log->seconds = seconds;
      result.log.push_back(*val_log);
      if (log != nullptr) *log << to_json(*val_log).dump() << '\n';
    }
    if (log != nullptr) log->flush();

    // Model selection: validation AP when defined (ties broken by lower validation
    // loss, since AP saturates on easy data), otherwise the latest epoch.
    const bool selectable = val_log && val_log->ap;
    const double metric = selectable ? *val_log->ap : static_cast<double>(epoch);
    const double tiebreak = val_log ? val_log->loss : 0.0;
    if (metric > best_metric || (selectable && metric == best_metric && tiebreak < best_loss)) {
      best_metric = metric;
      best_loss = tiebreak;
      best_weights = snapshot();
      result.best_epoch = epoch;
      epochs_without_improvement = 0;
    } else if (++epochs_without_improvement >= cfg.early_stop_patience && cfg.early_stop_patience > 0 && selectable) {
      break;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].size(); ++i) params[k].set(i, best_weights[k][i]);

  result.interpolated_fraction = positions_total > 0 ? static_cast<double>(replaced_total) / positions_total : 0.0;
  result.backbone_checksum_after = detector.backbone().weights_checksum();
  if (result.backbone_checksum_after != result.backbone_checksum_before)
    throw std::logic_error("semantic backbone weights changed during training");
  auto& snap = detector.config_snapshot();
  snap["best_epoch"] = result.best_epoch;
  result.detector = std::move(detector);
  return result;
}

}  // namespace synthdet
