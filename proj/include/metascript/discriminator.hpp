#pragma once

#include "metascript/layers.hpp"

#include <array>

namespace metascript {

struct DiscriminatorConfig {
  Index resolution = 128;
  Index base_channels = 64;
  Index max_channels = 512;
  Index type_count = 0;    // n character classes
  Index writer_count = 0;  // m writers

  // 5 at resolution 128; scale 3 sees a quarter-resolution input, which
  // pins the depth to log2(R) - 2 so the coarsest scale still reaches a
  // 1x1 feature map
  int down_blocks() const {
    Index r = resolution;
    int l = 0;
    while (r > 1) {
      require(r % 2 == 0, "DiscriminatorConfig: resolution must be a power of two");
      r /= 2;
      ++l;
    }
    require(l >= 3, "DiscriminatorConfig: resolution too small");
    return l - 2;
  }

  Index channels(int k) const { return std::min(base_channels << (k - 1), max_channels); }
};

// per-scale triple of (authenticity logit, type logits, writer logits)
template <typename S>
struct CriticVerdict {
  struct Scale {
    Tensor<S> authenticity;   // (N,1) raw logit; the sigmoid lives in the loss
    Tensor<S> type_logits;    // (N,n)
    Tensor<S> writer_logits;  // (N,m)
  };
  std::array<Scale, 3> scales;
};

// A stack of shared-shape down-sampling blocks with three linear heads
// fed by a global average pool.
template <typename S>
class DiscriminatorBlock {
 public:
  DiscriminatorBlock() = default;
  DiscriminatorBlock(const DiscriminatorConfig& cfg, Index input_side, Rng& rng)
      : input_side_(input_side) {
    int D = cfg.down_blocks();
    for (int k = 1; k <= D; ++k)
      downs_.emplace_back(k == 1 ? 1 : cfg.channels(k - 1), cfg.channels(k), rng);
    Index feat = cfg.channels(D);
    auth_head_ = LinearLayer<S>(feat, 1, rng);
    type_head_ = LinearLayer<S>(feat, cfg.type_count, rng);
    writer_head_ = LinearLayer<S>(feat, cfg.writer_count, rng);
  }

  typename CriticVerdict<S>::Scale forward(const Tensor<S>& x) const {
    require(x.shape().ndim() == 4 && x.shape()[1] == 1 && x.shape()[2] == input_side_ &&
                x.shape()[3] == input_side_,
            "DiscriminatorBlock: expected side " + std::to_string(input_side_) + ", got " +
                x.shape().str());
    Tensor<S> h = x;
    for (const auto& d : downs_) h = d.forward(h);
    auto feat = global_avg_pool(h);
    return {auth_head_.forward(feat), type_head_.forward(feat), writer_head_.forward(feat)};
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    for (size_t k = 0; k < downs_.size(); ++k)
      downs_[k].collect(prefix + ".down" + std::to_string(k + 1), out);
    auth_head_.collect(prefix + ".auth_head", out);
    type_head_.collect(prefix + ".type_head", out);
    writer_head_.collect(prefix + ".writer_head", out);
  }

  Index input_side() const { return input_side_; }

 private:
  Index input_side_ = 0;
  std::vector<DownBlock<S>> downs_;
  LinearLayer<S> auth_head_, type_head_, writer_head_;
};

// Three independent blocks judging the glyph at full, half and quarter
// resolution; the scaled inputs come from repeated 2x2 average pooling.
template <typename S>
class MultiScaleDiscriminator {
 public:
  MultiScaleDiscriminator() = default;
  MultiScaleDiscriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(cfg.type_count > 0 && cfg.writer_count > 0,
            "MultiScaleDiscriminator: type/writer counts must be set");
    for (int s = 0; s < 3; ++s)
      blocks_.emplace_back(cfg, cfg.resolution >> s, rng);
  }

  CriticVerdict<S> forward(const Tensor<S>& x) const {
    require(x.shape().ndim() == 4 && x.shape()[1] == 1 && x.shape()[2] == cfg_.resolution &&
                x.shape()[3] == cfg_.resolution,
            "MultiScaleDiscriminator: expected (N,1," + std::to_string(cfg_.resolution) + "," +
                std::to_string(cfg_.resolution) + "), got " + x.shape().str());
    CriticVerdict<S> v;
    Tensor<S> cur = x;
    for (int s = 0; s < 3; ++s) {
      if (s > 0) cur = avg_pool2(cur);
      v.scales[static_cast<size_t>(s)] = blocks_[static_cast<size_t>(s)].forward(cur);
    }
    return v;
  }

  ParamList<S> params() {
    ParamList<S> out;
    for (size_t s = 0; s < blocks_.size(); ++s)
      blocks_[s].collect("scale" + std::to_string(s + 1), out);
    return out;
  }

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<DiscriminatorBlock<S>> blocks_;
};

}  // namespace metascript
