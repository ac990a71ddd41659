#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "synthdet/nn/parameter.hpp"

namespace synthdet::nn {

/// Adaptive-moment optimiser over a fixed parameter list.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(ParameterList params, Options options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  /// Applies one update with gradients scaled by `grad_scale`, then clears them.
  void step(double grad_scale = 1.0) {
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k];
      if (p.as_float) {
        update(p.as_float(), p.grad_float(), m_[k], v_[k], grad_scale, bc1, bc2);
      } else {
        update(p.as_double(), p.grad_double(), m_[k], v_[k], grad_scale, bc1, bc2);
      }
    }
  }

  void zero_grad() {
    for (const auto& p : params_) p.zero_grad();
  }

  long steps() const noexcept { return t_; }

 private:
  template <typename T>
  void update(std::span<T> value, std::span<T> grad, std::vector<double>& m, std::vector<double>& v, double grad_scale,
              double bc1, double bc2) const {
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * grad_scale;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double step = options_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.epsilon);
      value[i] = static_cast<T>(static_cast<double>(value[i]) - step);
      grad[i] = T{0};
    }
  }

  ParameterList params_;
  Options options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace synthdet::nn
