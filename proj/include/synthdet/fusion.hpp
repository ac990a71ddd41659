#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "synthdet/nn/layers.hpp"
#include "synthdet/random.hpp"

namespace synthdet {

enum class FusionMode { adaptive, only_semantic, only_artifact, simple_concat, avg, max, min };

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);
/// avg, max and min combine the scores of two separately trained single-branch models.
bool is_score_level(FusionMode mode);

/// Branch keep flags (m_sem, m_art).
struct BranchMask {
  bool semantic = true;
  bool artifact = true;
  friend bool operator==(const BranchMask&, const BranchMask&) = default;
};

struct DropoutPolicy {
  enum class Mode { train, inference };
  double p_drop_sem = 0.15;
  double p_drop_art = 0.15;
  Mode mode = Mode::train;
};

void validate_policy(const DropoutPolicy& policy);

/// One categorical draw over {(1,1), (0,1), (1,0)}; never drops both.
/// Inference mode returns (1,1) without consuming randomness.
BranchMask sample_dropout_mask(const DropoutPolicy& policy, Rng& rng);

struct FusedFeatures {
  std::vector<double> fused;
  double alpha = 0.0;
  double beta = 0.0;
};

using RegulatorFn = std::function<double(std::span<const double>)>;

/// alpha = m_sem * r_sem(v_sem), beta = m_art * r_art(v_art), v = alpha v_sem ++ beta v_art.
/// A dropped branch is written as exact zeros and its regulator is not evaluated.
FusedFeatures regulate_and_fuse(std::span<const double> v_sem, std::span<const double> v_art, const RegulatorFn& r_sem,
                                const RegulatorFn& r_art, BranchMask mask);

/// Two-layer perceptron mapping a feature vector to a coefficient in (0, 1).
class Regulator {
 public:
  struct Trace {
    std::vector<double> hidden;  // post-ReLU
    double output = 0.0;         // post-sigmoid
  };

  Regulator() = default;
  Regulator(int in_features, int hidden);
  void init(Rng& rng);

  double forward(std::span<const double> x, Trace* trace = nullptr) const;
  /// Accumulates parameter gradients for dL/d(output); adds dL/dx into `grad_x` when non-empty.
  void backward(std::span<const double> x, const Trace& trace, double grad_output, std::span<double> grad_x);
  nn::ParameterList parameters();

 private:
  nn::Linear<double> hidden_;
  nn::Linear<double> out_;
};

/// Regulators, fusion and the linear classification head.
class FusionNetwork {
 public:
  struct Config {
    int semantic_dim = 0;
    int artifact_dim = 0;
    int regulator_hidden = 64;
    FusionMode mode = FusionMode::adaptive;
  };

  struct Trace {
    std::vector<double> v_sem;
    std::vector<double> v_art;
    BranchMask mask;
    Regulator::Trace sem;
    Regulator::Trace art;
    FusedFeatures features;
    double logit = 0.0;
  };

  FusionNetwork() = default;
  FusionNetwork(Config config, std::uint64_t init_seed);

  const Config& config() const noexcept { return config_; }
  int fused_dim() const noexcept { return config_.semantic_dim + config_.artifact_dim; }

  /// Only adaptive mode honours `mask`; simple_concat fixes alpha = beta = 1 and
  /// the single-branch modes fix the other coefficient to 0.
  double logit(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask = {},
               Trace* trace = nullptr) const;
  double score(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask = {}) const;
  FusedFeatures fuse(std::span<const double> v_sem, std::span<const double> v_art, BranchMask mask = {}) const;

  /// Accumulates parameter gradients for dL/d(logit). dL/dv_art is written to
  /// `grad_art` when non-empty (the semantic branch is frozen, so its input gradient is not needed).
  void backward(const Trace& trace, double grad_logit, std::span<double> grad_art);

  nn::Linear<double>& head() noexcept { return head_; }
  Regulator& semantic_regulator() noexcept { return reg_sem_; }
  Regulator& artifact_regulator() noexcept { return reg_art_; }
  nn::ParameterList parameters();

  nlohmann::json config_json() const;
  static Config config_from_json(const nlohmann::json& j);

 private:
  bool uses_regulators() const noexcept { return config_.mode == FusionMode::adaptive; }
  void check_dims(std::span<const double> v_sem, std::span<const double> v_art) const;

  Config config_;
  Regulator reg_sem_;
  Regulator reg_art_;
  nn::Linear<double> head_;
};

/// Score-level combination for the avg / max / min / only_* modes.
/// Throws std::invalid_argument when a score the mode needs is missing.
double ablation_fuse(FusionMode mode, std::optional<double> semantic_score, std::optional<double> artifact_score);

/// Feature-level simple concatenation: alpha = beta = 1, no dropout. `net` must be in simple_concat mode.
double ablation_fuse(const FusionNetwork& net, std::span<const double> v_sem, std::span<const double> v_art);

}  // namespace synthdet
