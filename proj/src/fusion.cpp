#include "synthdet/fusion.hpp"

#include <algorithm>
#include <stdexcept>

namespace synthdet {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::adaptive: return "adaptive";
    case FusionMode::only_semantic: return "only_semantic";
    case FusionMode::only_artifact: return "only_artifact";
    case FusionMode::simple_concat: return "simple_concat";
    case FusionMode::avg: return "avg";
    case FusionMode::max: return "max";
    case FusionMode::min: return "min";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::adaptive, FusionMode::only_semantic, FusionMode::only_artifact, FusionMode::simple_concat,
                 FusionMode::avg, FusionMode::max, FusionMode::min})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown fusion mode '" + std::string(name) +
                              "' (expected adaptive, only_semantic, only_artifact, simple_concat, avg, max or min)");
}

bool is_score_level(FusionMode mode) {
  return mode == FusionMode::avg || mode == FusionMode::max || mode == FusionMode::min;
}

void validate_policy(const DropoutPolicy& policy) {
  if (policy.p_drop_sem < 0.0 || policy.p_drop_art < 0.0 || !(policy.p_drop_sem + policy.p_drop_art < 1.0))
    throw std::invalid_argument("dropout probabilities must be non-negative with p_drop_sem + p_drop_art < 1");
}

BranchMask sample_dropout_mask(const DropoutPolicy& policy, Rng& rng) {
  if (policy.mode == DropoutPolicy::Mode::inference) return {};
  const double u = rng.uniform();
  if (u < policy.p_drop_sem) return {false, true};
  if (u < policy.p_drop_sem + policy.p_drop_art) return {true, false};
  return {};
}

FusedFeatures regulate_and_fuse(std::span<const double> v_sem, std::span<const double> v_art, const RegulatorFn& r_sem,
                                const RegulatorFn& r_art, BranchMask mask) {
  if (!mask.semantic && !mask.artifact) throw std::invalid_argument("both features dropped");
  FusedFeatures out;
  out.alpha = mask.semantic ? r_sem(v_sem) : 0.0;
  out.beta = mask.artifact ? r_art(v_art) : 0.0;
  out.fused.assign(v_sem.size() + v_art.size(), 0.0);
  if (mask.semantic)
    for (std::size_t i = 0; i < v_sem.size(); ++i) out.fused[i] = out.alpha * v_sem[i];
  if (mask.artifact)
    for (std::size_t i = 0; i < v_art.size(); ++i) out.fused[v_sem.size() + i] = out.beta * v_art[i];
  return out;
}

// --- regulator ------------------------------------------------------------------

Regulator::Regulator(int in_features, int hidden) : hidden_(in_features, hidden), out_(hidden, 1) {}

void Regulator::init(Rng& rng) {
  hidden_.init(rng);
  out_.init(rng);
}

double Regulator::forward(std::span<const double> x, Trace* trace) const {
  auto h = hidden_.forward(x);
  nn::relu_inplace(std::span<double>(h));
  const double y = nn::sigmoid(out_.forward(h)[0]);
  if (trace != nullptr) {
    trace->hidden = std::move(h);
    trace->output = y;
  }
  return y;
}

void Regulator::backward(std::span<const double> x, const Trace& trace, double grad_output, std::span<double> grad_x) {
  const double g = grad_output * trace.output * (1.0 - trace.output);
  std::vector<double> grad_hidden(trace.hidden.size());
  out_.backward(trace.hidden, std::span<const double>(&g, 1), grad_hidden);
  nn::relu_backward_inplace(std::span<const double>(trace.hidden), std::span<double>(grad_hidden));
  if (grad_x.empty()) {
    hidden_.backward(x, grad_hidden, {});
    return;
  }
  std::vector<double> gx(x.size());
  hidden_.backward(x, grad_hidden, gx);
  for (std::size_t i = 0; i < gx.size(); ++i) grad_x[i] += gx[i];
}

nn::ParameterList Regulator::parameters() {
  auto list = hidden_.parameters();
  nn::prefix_names(list, "hidden.");
  auto out = out_.parameters();
  nn::prefix_names(out, "out.");
  nn::append(list, std::move(out));
  return list;
}

// --- fusion network ---------------------------------------------------------------

FusionNetwork::FusionNetwork(Config config, std::uint64_t init_seed) : config_(config) {
  if (config_.semantic_dim < 1 || config_.artifact_dim < 1 || config_.regulator_hidden < 1)
    throw std::invalid_argument("fusion network dimensions must be positive");
  if (is_score_level(config_.mode))
    throw std::invalid_argument("fusion mode '" + to_string(config_.mode) + "' combines two trained models, not one network");
  Rng rng(init_seed);
  reg_sem_ = Regulator(config_.semantic_dim, config_.regulator_hidden);
  reg_art_ = Regulator(config_.artifact_dim, config_.regulator_hidden);
  reg_sem_.init(rng);
  reg_art_.init(rng);
  head_ = nn::Linear<double>(fused_dim(), 1);
  head_.init(rng);
}

void FusionNetwork::check_dims(std::span<const double> v_sem, std::span<const double> v_art) const {
  if (static_cast<int>(v_sem.size()) != config_.semantic_dim || static_cast<int>(v_art.size()) != config_.artifact_dim)
    throw std::invalid_argument("fusion input dimensions (" + std::to_string(v_sem.size()) + ", " +
                                std::to_string(v_art.size()) + ") do not match the network (" +
                                std::to_string(config_.semantic_dim) + ", " + std::to_string(config_.artifact_dim) + ")");
}

double FusionNetwork::logit(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask,
                            Trace* trace) const {
  check_dims(v_sem, v_art);
  Regulator::Trace sem_trace, art_trace;
  RegulatorFn r_sem, r_art;
  switch (config_.mode) {
    case FusionMode::adaptive:
      r_sem = [&](std::span<const double> v) { return reg_sem_.forward(v, &sem_trace); };
      r_art = [&](std::span<const double> v) { return reg_art_.forward(v, &art_trace); };
      break;
    case FusionMode::only_semantic:
      mask = {true, false};
      r_sem = [](std::span<const double>) { return 1.0; };
      break;
    case FusionMode::only_artifact:
      mask = {false, true};
      r_art = [](std::span<const double>) { return 1.0; };
      break;
    default:
      mask = {};
      r_sem = r_art = [](std::span<const double>) { return 1.0; };
      break;
  }
  auto features = regulate_and_fuse(v_sem, v_art, r_sem, r_art, mask);
  const double z = head_.forward(features.fused)[0];
  if (trace != nullptr) {
    trace->v_sem.assign(v_sem.begin(), v_sem.end());
    trace->v_art.assign(v_art.begin(), v_art.end());
    trace->mask = mask;
    trace->sem = std::move(sem_trace);
    trace->art = std::move(art_trace);
    trace->features = std::move(features);
    trace->logit = z;
  }
  return z;
}

double FusionNetwork::score(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask) const {
  return nn::sigmoid(logit(v_sem, v_art, mask));
}

FusedFeatures FusionNetwork::fuse(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask) const {
  Trace trace;
  logit(v_sem, v_art, mask, &trace);
  return trace.features;
}

void FusionNetwork::backward(const Trace& trace, double grad_logit, std::span<double> grad_art) {
  const auto ns = trace.v_sem.size();
  std::vector<double> grad_fused(trace.features.fused.size());
  head_.backward(trace.features.fused, std::span<const double>(&grad_logit, 1), grad_fused);

  if (!grad_art.empty()) {
    std::fill(grad_art.begin(), grad_art.end(), 0.0);
    for (std::size_t i = 0; i < trace.v_art.size(); ++i) grad_art[i] = trace.features.beta * grad_fused[ns + i];
  }
  if (!uses_regulators()) return;

  if (trace.mask.semantic) {
    double grad_alpha = 0.0;
    for (std::size_t i = 0; i < ns; ++i) grad_alpha += grad_fused[i] * trace.v_sem[i];
    reg_sem_.backward(trace.v_sem, trace.sem, grad_alpha, {});
  }
  if (trace.mask.artifact) {
    double grad_beta = 0.0;
    for (std::size_t i = 0; i < trace.v_art.size(); ++i) grad_beta += grad_fused[ns + i] * trace.v_art[i];
    reg_art_.backward(trace.v_art, trace.art, grad_beta, grad_art);
  }
}

nn::ParameterList FusionNetwork::parameters() {
  nn::ParameterList list;
  if (uses_regulators()) {
    auto s = reg_sem_.parameters();
    nn::prefix_names(s, "reg_sem.");
    nn::append(list, std::move(s));
    auto a = reg_art_.parameters();
    nn::prefix_names(a, "reg_art.");
    nn::append(list, std::move(a));
  }
  auto h = head_.parameters();
  nn::prefix_names(h, "head.");
  nn::append(list, std::move(h));
  return list;
}

nlohmann::json FusionNetwork::config_json() const {
  return {{"semantic_dim", config_.semantic_dim},
          {"artifact_dim", config_.artifact_dim},
          {"regulator_hidden", config_.regulator_hidden},
          {"mode", to_string(config_.mode)}};
}

FusionNetwork::Config FusionNetwork::config_from_json(const nlohmann::json& j) {
  Config c;
  c.semantic_dim = j.at("semantic_dim").get<int>();
  c.artifact_dim = j.at("artifact_dim").get<int>();
  c.regulator_hidden = j.at("regulator_hidden").get<int>();
  c.mode = parse_fusion_mode(j.at("mode").get<std::string>());
  return c;
}

// --- ablation -----------------------------------------------------------------------

double ablation_fuse(FusionMode mode, std::optional<double> semantic_score, std::optional<double> artifact_score) {
  auto need = [](const std::optional<double>& s, const char* branch) {
    if (!s) throw std::invalid_argument(std::string("missing ") + branch + " score");
    return *s;
  };
  switch (mode) {
    case FusionMode::only_semantic: return need(semantic_score, "semantic");
    case FusionMode::only_artifact: return need(artifact_score, "artifact");
    case FusionMode::avg: return 0.5 * (need(semantic_score, "semantic") + need(artifact_score, "artifact"));
    case FusionMode::max: return std::max(need(semantic_score, "semantic"), need(artifact_score, "artifact"));
    case FusionMode::min: return std::min(need(semantic_score, "semantic"), need(artifact_score, "artifact"));
    default:
      throw std::invalid_argument("fusion mode '" + to_string(mode) + "' fuses features, not scores");
  }
}

double ablation_fuse(const FusionNetwork& net, std::span<const double> v_sem, std::span<const double> v_art) {
  if (net.config().mode != FusionMode::simple_concat)
    throw std::invalid_argument("feature-level ablation needs a simple_concat network");
  if (v_sem.empty() || v_art.empty()) throw std::invalid_argument("missing branch features");
  return net.score(v_sem, v_art);
}

}  // namespace synthdet
