#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "synthdet/nn/parameter.hpp"

namespace synthdet::nn {

/// Planar (CHW) activation map.
template <typename T>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, T fill = T{0})
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  T* channel(int c) noexcept { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(int c) const noexcept { return data.data() + static_cast<std::size_t>(c) * plane(); }
  bool same_shape(const FeatureMap& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// Fully connected layer, y = W x + b with W stored row-major [out][in].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features)
      : in_(in_features), out_(out_features), weight_("weight", {out_features, in_features}), bias_("bias", {out_features}) {}

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }
  const Parameter<T>& bias() const noexcept { return bias_; }

  void init(Rng& rng) {
    weight_.init_uniform(rng, std::sqrt(6.0 / (in_ + out_)));
    std::fill(bias_.value.begin(), bias_.value.end(), T{0});
  }

  void forward(std::span<const T> x, std::span<T> y) const {
    if (static_cast<int>(x.size()) != in_ || static_cast<int>(y.size()) != out_)
      throw std::invalid_argument("linear layer: dimension mismatch");
    for (int o = 0; o < out_; ++o) {
      const T* w = weight_.value.data() + static_cast<std::size_t>(o) * in_;
      T acc = bias_.value[static_cast<std::size_t>(o)];
      for (int i = 0; i < in_; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = acc;
    }
  }

  std::vector<T> forward(std::span<const T> x) const {
    std::vector<T> y(static_cast<std::size_t>(out_));
    forward(x, y);
    return y;
  }

  /// Accumulates parameter gradients; writes dL/dx when `grad_x` is non-empty.
  void backward(std::span<const T> x, std::span<const T> grad_y, std::span<T> grad_x) {
    for (int o = 0; o < out_; ++o) {
      const T g = grad_y[static_cast<std::size_t>(o)];
      if (g == T{0}) continue;
      T* gw = weight_.grad.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) gw[i] += g * x[static_cast<std::size_t>(i)];
      bias_.grad[static_cast<std::size_t>(o)] += g;
    }
    if (!grad_x.empty()) {
      std::fill(grad_x.begin(), grad_x.end(), T{0});
      for (int o = 0; o < out_; ++o) {
        const T g = grad_y[static_cast<std::size_t>(o)];
        const T* w = weight_.value.data() + static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) grad_x[static_cast<std::size_t>(i)] += g * w[i];
      }
    }
  }

  ParameterList parameters() { return {ParameterRef::of(weight_), ParameterRef::of(bias_)}; }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

/// 2-D convolution with square kernels, zero padding; weight [out][in][k][k].
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0)
      : in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        padding_(padding),
        weight_("weight", {out_channels, in_channels, kernel, kernel}),
        bias_("bias", {out_channels}) {}

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int output_size(int input) const noexcept { return (input + 2 * padding_ - kernel_) / stride_ + 1; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weight() const noexcept { return weight_; }

  void init(Rng& rng) {
    weight_.init_he(rng, static_cast<std::size_t>(in_) * kernel_ * kernel_);
    std::fill(bias_.value.begin(), bias_.value.end(), T{0});
  }

  FeatureMap<T> forward(const FeatureMap<T>& x) const {
    if (x.channels != in_) throw std::invalid_argument("conv2d: expected " + std::to_string(in_) + " input channels");
    const int oh = output_size(x.height), ow = output_size(x.width);
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: input smaller than kernel");
    FeatureMap<T> y(out_, oh, ow);
    for (int oc = 0; oc < out_; ++oc) {
      T* yc = y.channel(oc);
      std::fill(yc, yc + y.plane(), bias_.value[static_cast<std::size_t>(oc)]);
      for (int ic = 0; ic < in_; ++ic) {
        const T* xc = x.channel(ic);
        for (int ky = 0; ky < kernel_; ++ky) {
          for (int kx = 0; kx < kernel_; ++kx) {
            const T w = weight_.value[widx(oc, ic, ky, kx)];
            const auto [x0, x1] = valid_range(kx, x.width, ow);
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ + ky - padding_;
              if (iy < 0 || iy >= x.height) continue;
              const T* row = xc + static_cast<std::size_t>(iy) * x.width;
              T* out = yc + static_cast<std::size_t>(oy) * ow;
              if (stride_ == 1) {
                const T* src = row + (kx - padding_);
                for (int ox = x0; ox < x1; ++ox) out[ox] += w * src[ox];
              } else {
                for (int ox = x0; ox < x1; ++ox) out[ox] += w * row[ox * stride_ + kx - padding_];
              }
            }
          }
        }
      }
    }
    return y;
  }

  /// Accumulates weight/bias gradients; fills `grad_x` (same shape as x) when non-null.
  void backward(const FeatureMap<T>& x, const FeatureMap<T>& grad_y, FeatureMap<T>* grad_x) {
    const int oh = grad_y.height, ow = grad_y.width;
    if (grad_x != nullptr) *grad_x = FeatureMap<T>(x.channels, x.height, x.width);
    for (int oc = 0; oc < out_; ++oc) {
      const T* gc = grad_y.channel(oc);
      T bsum{0};
      for (std::size_t i = 0; i < grad_y.plane(); ++i) bsum += gc[i];
      bias_.grad[static_cast<std::size_t>(oc)] += bsum;
      for (int ic = 0; ic < in_; ++ic) {
        const T* xc = x.channel(ic);
        T* gxc = grad_x != nullptr ? grad_x->channel(ic) : nullptr;
        for (int ky = 0; ky < kernel_; ++ky) {
          for (int kx = 0; kx < kernel_; ++kx) {
            const auto wi = widx(oc, ic, ky, kx);
            const T w = weight_.value[wi];
            const auto [x0, x1] = valid_range(kx, x.width, ow);
            T gw{0};
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ + ky - padding_;
              if (iy < 0 || iy >= x.height) continue;
              const T* row = xc + static_cast<std::size_t>(iy) * x.width;
              const T* g = gc + static_cast<std::size_t>(oy) * ow;
              for (int ox = x0; ox < x1; ++ox) gw += g[ox] * row[ox * stride_ + kx - padding_];
              if (gxc != nullptr) {
                T* grow = gxc + static_cast<std::size_t>(iy) * x.width;
                for (int ox = x0; ox < x1; ++ox) grow[ox * stride_ + kx - padding_] += w * g[ox];
              }
            }
            weight_.grad[wi] += gw;
          }
        }
      }
    }
  }

  ParameterList parameters() { return {ParameterRef::of(weight_), ParameterRef::of(bias_)}; }

 private:
  std::size_t widx(int oc, int ic, int ky, int kx) const noexcept {
    return ((static_cast<std::size_t>(oc) * in_ + ic) * kernel_ + ky) * kernel_ + kx;
  }

  /// Output columns whose input column for kernel offset kx lies inside the image.
  std::pair<int, int> valid_range(int kx, int in_width, int ow) const noexcept {
    int lo = 0;
    while (lo < ow && lo * stride_ + kx - padding_ < 0) ++lo;
    int hi = ow;
    while (hi > lo && (hi - 1) * stride_ + kx - padding_ >= in_width) --hi;
    return {lo, hi};
  }

  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
void relu_inplace(std::span<T> x) {
  for (auto& v : x) v = v > T{0} ? v : T{0};
}

/// grad *= (activation > 0), where `activation` is the ReLU output.
template <typename T>
void relu_backward_inplace(std::span<const T> activation, std::span<T> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation[i] > T{0})) grad[i] = T{0};
}

/// Non-overlapping k x k average pooling; trailing rows/columns are dropped.
template <typename T>
FeatureMap<T> avg_pool(const FeatureMap<T>& x, int k) {
  const int oh = x.height / k, ow = x.width / k;
  if (oh < 1 || ow < 1) throw std::invalid_argument("avg_pool: input smaller than window");
  FeatureMap<T> y(x.channels, oh, ow);
  const T scale = T{1} / static_cast<T>(k * k);
  for (int c = 0; c < x.channels; ++c) {
    const T* xc = x.channel(c);
    T* yc = y.channel(c);
    for (int iy = 0; iy < oh * k; ++iy) {
      const T* row = xc + static_cast<std::size_t>(iy) * x.width;
      T* out = yc + static_cast<std::size_t>(iy / k) * ow;
      for (int ix = 0; ix < ow * k; ++ix) out[ix / k] += row[ix];
    }
    for (std::size_t i = 0; i < y.plane(); ++i) yc[i] *= scale;
  }
  return y;
}

template <typename T>
FeatureMap<T> avg_pool_backward(const FeatureMap<T>& grad_y, int in_height, int in_width, int k) {
  FeatureMap<T> gx(grad_y.channels, in_height, in_width);
  const T scale = T{1} / static_cast<T>(k * k);
  for (int c = 0; c < grad_y.channels; ++c) {
    const T* g = grad_y.channel(c);
    T* out = gx.channel(c);
    for (int iy = 0; iy < grad_y.height * k; ++iy)
      for (int ix = 0; ix < grad_y.width * k; ++ix)
        out[static_cast<std::size_t>(iy) * in_width + ix] = g[static_cast<std::size_t>(iy / k) * grad_y.width + ix / k] * scale;
  }
  return gx;
}

template <typename T>
std::vector<T> global_avg_pool(const FeatureMap<T>& x) {
  std::vector<T> y(static_cast<std::size_t>(x.channels));
  for (int c = 0; c < x.channels; ++c) {
    const T* xc = x.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.plane(); ++i) acc += xc[i];
    y[static_cast<std::size_t>(c)] = static_cast<T>(acc / static_cast<double>(x.plane()));
  }
  return y;
}

template <typename T>
FeatureMap<T> global_avg_pool_backward(std::span<const T> grad_y, int channels, int height, int width) {
  FeatureMap<T> gx(channels, height, width);
  const T scale = T{1} / static_cast<T>(height * width);
  for (int c = 0; c < channels; ++c) {
    T* out = gx.channel(c);
    std::fill(out, out + gx.plane(), grad_y[static_cast<std::size_t>(c)] * scale);
  }
  return gx;
}

}  // namespace synthdet::nn

namespace synthdet::nn {

/// Rearranges each non-overlapping `block` x `block` tile into channels:
/// output channel index is (dy * block + dx) * C + c.
template <typename T>
FeatureMap<T> space_to_depth(const FeatureMap<T>& x, int block) {
  if (x.height % block != 0 || x.width % block != 0)
    throw std::invalid_argument("space_to_depth: size not divisible by block");
  const int oh = x.height / block, ow = x.width / block;
  FeatureMap<T> y(x.channels * block * block, oh, ow);
  for (int dy = 0; dy < block; ++dy)
    for (int dx = 0; dx < block; ++dx)
      for (int c = 0; c < x.channels; ++c) {
        const T* src = x.channel(c);
        T* dst = y.channel((dy * block + dx) * x.channels + c);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            dst[static_cast<std::size_t>(oy) * ow + ox] =
                src[static_cast<std::size_t>(oy * block + dy) * x.width + ox * block + dx];
      }
  return y;
}

template <typename T>
FeatureMap<T> depth_to_space(const FeatureMap<T>& y, int block) {
  const int c_out = y.channels / (block * block);
  if (c_out * block * block != y.channels) throw std::invalid_argument("depth_to_space: channels not divisible");
  FeatureMap<T> x(c_out, y.height * block, y.width * block);
  for (int dy = 0; dy < block; ++dy)
    for (int dx = 0; dx < block; ++dx)
      for (int c = 0; c < c_out; ++c) {
        const T* src = y.channel((dy * block + dx) * c_out + c);
        T* dst = x.channel(c);
        for (int oy = 0; oy < y.height; ++oy)
          for (int ox = 0; ox < y.width; ++ox)
            dst[static_cast<std::size_t>(oy * block + dy) * x.width + ox * block + dx] =
                src[static_cast<std::size_t>(oy) * y.width + ox];
      }
  return x;
}

}  // namespace synthdet::nn
