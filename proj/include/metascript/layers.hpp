#pragma once

#include "metascript/conv.hpp"
#include "metascript/rng.hpp"

namespace metascript {

template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

template <typename S>
inline Index param_count(const ParamList<S>& ps) {
  Index n = 0;
  for (const auto& p : ps) n += p.tensor.numel();
  return n;
}

namespace init {

// He-style normal init; gain slope matches the leaky activation used in
// the encoder and discriminator blocks.
template <typename S>
void kaiming_normal(Tensor<S>& w, Index fan_in, Rng& rng, double slope = 0.2) {
  double std = std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
  for (Index i = 0; i < w.numel(); ++i)
    w.value()[i] = static_cast<S>(rng.normal() * std);
}

}  // namespace init

template <typename S>
struct Conv2dLayer {
  Tensor<S> weight, bias;
  Index stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(Index in_ch, Index out_ch, Index k, Index stride_, Index pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    weight = Tensor<S>::zeros(Shape{out_ch, in_ch, k, k}, true);
    bias = Tensor<S>::zeros(Shape{out_ch}, true);
    init::kaiming_normal(weight, in_ch * k * k, rng);
  }

  Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, weight, bias, stride, pad); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename S>
struct LinearLayer {
  Tensor<S> weight, bias;

  LinearLayer() = default;
  LinearLayer(Index in_f, Index out_f, Rng& rng) {
    weight = Tensor<S>::zeros(Shape{out_f, in_f}, true);
    bias = Tensor<S>::zeros(Shape{out_f}, true);
    init::kaiming_normal(weight, in_f, rng, 1.0);
  }

  Tensor<S> forward(const Tensor<S>& x) const { return linear(x, weight, bias); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

// conv 4x4 stride 2 + per-instance norm + leaky activation; the shared
// down-sampling block of the structure encoder and the discriminator
template <typename S>
struct DownBlock {
  Conv2dLayer<S> conv;

  DownBlock() = default;
  DownBlock(Index in_ch, Index out_ch, Rng& rng) : conv(in_ch, out_ch, 4, 2, 1, rng) {}

  Tensor<S> forward(const Tensor<S>& x) const {
    return leaky_relu(instance_norm(conv.forward(x)), S(0.2));
  }

  void collect(const std::string& prefix, ParamList<S>& out) { conv.collect(prefix + ".conv", out); }
};

}  // namespace metascript
