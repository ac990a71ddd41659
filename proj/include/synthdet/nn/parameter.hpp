#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "synthdet/random.hpp"

namespace synthdet::nn {

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    const auto count = static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{}));
    value.assign(count, T{0});
    grad.assign(count, T{0});
  }

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }

  /// He-normal initialisation with the given fan-in.
  void init_he(Rng& rng, std::size_t fan_in) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : value) v = static_cast<T>(rng.normal(0.0, std));
  }
  void init_uniform(Rng& rng, double bound) {
    for (auto& v : value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
};

/// A view over a module's parameters, independent of the scalar type they store.
/// Used by the optimiser and checkpoint code.
struct ParameterRef {
  std::string name;
  std::vector<int> shape;
  std::function<std::span<float>()> as_float;
  std::function<std::span<double>()> as_double;
  std::function<std::span<float>()> grad_float;
  std::function<std::span<double>()> grad_double;

  template <typename T>
  static ParameterRef of(Parameter<T>& p) {
    ParameterRef ref;
    ref.name = p.name;
    ref.shape = p.shape;
    if constexpr (std::is_same_v<T, float>) {
      ref.as_float = [&p] { return std::span<float>(p.value); };
      ref.grad_float = [&p] { return std::span<float>(p.grad); };
    } else {
      ref.as_double = [&p] { return std::span<double>(p.value); };
      ref.grad_double = [&p] { return std::span<double>(p.grad); };
    }
    return ref;
  }

  std::size_t size() const { return as_float ? as_float().size() : as_double().size(); }
  double get(std::size_t i) const { return as_float ? static_cast<double>(as_float()[i]) : as_double()[i]; }
  void set(std::size_t i, double v) const {
    if (as_float) {
      as_float()[i] = static_cast<float>(v);
    } else {
      as_double()[i] = v;
    }
  }
  double get_grad(std::size_t i) const {
    return grad_float ? static_cast<double>(grad_float()[i]) : grad_double()[i];
  }
  void zero_grad() const {
    if (grad_float) {
      auto g = grad_float();
      std::fill(g.begin(), g.end(), 0.0f);
    } else {
      auto g = grad_double();
      std::fill(g.begin(), g.end(), 0.0);
    }
  }
};

using ParameterList = std::vector<ParameterRef>;

inline void prefix_names(ParameterList& list, const std::string& prefix) {
  for (auto& p : list) p.name = prefix + p.name;
}

inline void append(ParameterList& dst, ParameterList src) {
  for (auto& p : src) dst.push_back(std::move(p));
}

}  // namespace synthdet::nn
