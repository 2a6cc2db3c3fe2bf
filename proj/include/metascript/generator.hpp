#pragma once

#include "metascript/layers.hpp"

namespace metascript {

// Channel schedules for the whole generator are derived from three knobs
// so the full-resolution network and the desk-scale profile share one
// code path. base/max 64/512 at resolution 128 gives the encoder path
// 1->64->128->256->512->512->512 and pyramid channels
// 512,512,512,256,128,64,64 coarse to fine.
struct GeneratorConfig {
  Index resolution = 128;
  Index base_channels = 64;
  Index max_channels = 512;
  Index style_dim = 512;
  Index reference_count = 4;

  int levels() const {
    Index r = resolution;
    int l = 0;
    while (r > 1) {
      require(r % 2 == 0, "GeneratorConfig: resolution must be a power of two");
      r /= 2;
      ++l;
    }
    require(l >= 3, "GeneratorConfig: resolution too small");
    return l;
  }

  Index down_channels(int k) const {  // k-th down-sampling block, 1-based
    return std::min(base_channels << (k - 1), max_channels);
  }

  Index pyramid_channels(int level) const {  // level 1..levels(), side 2^level
    int L = levels();
    if (level == 1) return down_channels(L - 1);
    if (level == L) return base_channels;
    return down_channels(L - level);
  }
};

// U-Net over the template glyph. The bottleneck output is the coarsest
// pyramid map; each up-sampling block emits the next one.
template <typename S>
class StructureEncoder {
 public:
  StructureEncoder() = default;
  StructureEncoder(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    int L = cfg.levels();
    for (int k = 1; k <= L - 1; ++k)
      downs_.emplace_back(k == 1 ? 1 : cfg.down_channels(k - 1), cfg.down_channels(k), rng);
    for (int i = 2; i <= L; ++i) {
      Index skip_ch = i < L ? cfg.down_channels(L - i) : 1;
      ups_.emplace_back(cfg.pyramid_channels(i - 1) + skip_ch, cfg.pyramid_channels(i), 3, 1, 1, rng);
    }
  }

  // template glyph (N,1,R,R) -> pyramid of levels() maps, sides 2,4,...,R
  std::vector<Tensor<S>> forward(const Tensor<S>& x) const {
    require(x.shape().ndim() == 4 && x.shape()[1] == 1 && x.shape()[2] == cfg_.resolution &&
                x.shape()[3] == cfg_.resolution,
            "StructureEncoder: expected (N,1," + std::to_string(cfg_.resolution) + "," +
                std::to_string(cfg_.resolution) + "), got " + x.shape().str());
    int L = cfg_.levels();
    std::vector<Tensor<S>> skips;
    Tensor<S> cur = x;
    for (int k = 0; k < L - 1; ++k) {
      cur = downs_[static_cast<size_t>(k)].forward(cur);
      skips.push_back(cur);
    }
    std::vector<Tensor<S>> pyramid;
    pyramid.push_back(skips.back());
    cur = pyramid[0];
    for (int i = 2; i <= L; ++i) {
      cur = upsample_nearest2(cur);
      const Tensor<S>& skip = i < L ? skips[static_cast<size_t>(L - i - 1)] : x;
      cur = leaky_relu(instance_norm(ups_[static_cast<size_t>(i - 2)].forward(concat_channels(cur, skip))),
                       S(0.2));
      pyramid.push_back(cur);
    }
    return pyramid;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    for (size_t k = 0; k < downs_.size(); ++k)
      downs_[k].collect(prefix + ".down" + std::to_string(k + 1), out);
    for (size_t i = 0; i < ups_.size(); ++i)
      ups_[i].collect(prefix + ".up" + std::to_string(i + 2), out);
  }

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  std::vector<DownBlock<S>> downs_;
  std::vector<Conv2dLayer<S>> ups_;
};

// 18-layer residual backbone over the stacked references, global pooling
// and a final linear map to the style vector.
template <typename S>
class StyleEncoder {
 public:
  struct BasicBlock {
    Conv2dLayer<S> conv1, conv2, shortcut;
    bool projected = false;

    BasicBlock() = default;
    BasicBlock(Index in_ch, Index out_ch, Index stride, Rng& rng)
        : conv1(in_ch, out_ch, 3, stride, 1, rng), conv2(out_ch, out_ch, 3, 1, 1, rng) {
      if (stride != 1 || in_ch != out_ch) {
        shortcut = Conv2dLayer<S>(in_ch, out_ch, 1, stride, 0, rng);
        projected = true;
      }
    }

    Tensor<S> forward(const Tensor<S>& x) const {
      auto h = leaky_relu(instance_norm(conv1.forward(x)), S(0.2));
      h = instance_norm(conv2.forward(h));
      auto sk = projected ? shortcut.forward(x) : x;
      return leaky_relu(add(h, sk), S(0.2));
    }

    void collect(const std::string& prefix, ParamList<S>& out) {
      conv1.collect(prefix + ".conv1", out);
      conv2.collect(prefix + ".conv2", out);
      if (projected) shortcut.collect(prefix + ".shortcut", out);
    }
  };

  StyleEncoder() = default;
  StyleEncoder(const GeneratorConfig& cfg, Rng& rng)
      : cfg_(cfg), stem_(cfg.reference_count, cfg.base_channels, 7, 2, 3, rng) {
    Index ch = cfg.base_channels;
    for (int stage = 0; stage < 4; ++stage) {
      Index out_ch = cfg.base_channels << stage;
      Index stride = stage == 0 ? 1 : 2;
      blocks_.emplace_back(ch, out_ch, stride, rng);
      blocks_.emplace_back(out_ch, out_ch, 1, rng);
      ch = out_ch;
    }
    head_ = LinearLayer<S>(ch, cfg.style_dim, rng);
  }

  // references stacked as channels, (N,c,R,R) -> (N, style_dim)
  Tensor<S> forward(const Tensor<S>& refs) const {
    require(refs.shape().ndim() == 4 && refs.shape()[1] == cfg_.reference_count,
            "StyleEncoder: expected " + std::to_string(cfg_.reference_count) +
                " reference channels, got " + refs.shape().str());
    require(refs.shape()[2] == cfg_.resolution && refs.shape()[3] == cfg_.resolution,
            "StyleEncoder: wrong resolution " + refs.shape().str());
    auto h = leaky_relu(instance_norm(stem_.forward(refs)), S(0.2));
    h = max_pool(h, 3, 2, 1);
    for (const auto& b : blocks_) h = b.forward(h);
    return head_.forward(global_avg_pool(h));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    stem_.collect(prefix + ".stem", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(prefix + ".block" + std::to_string(i + 1), out);
    head_.collect(prefix + ".head", out);
  }

 private:
  GeneratorConfig cfg_;
  Conv2dLayer<S> stem_;
  std::vector<BasicBlock> blocks_;
  LinearLayer<S> head_;
};

// Normalization followed by two learned re-warpings, one driven by the
// structure map through a 1x1 convolution and one driven by the style
// vector through a linear layer, fused by a learned attention mask.
template <typename S>
class DenormLayer {
 public:
  static constexpr double kEps = 1e-5;

  DenormLayer() = default;
  DenormLayer(Index channels, Index alpha_channels, Index style_dim, Rng& rng)
      : channels_(channels),
        struct_proj_(alpha_channels, 2 * channels, 1, 1, 0, rng),
        style_proj_(style_dim, 2 * channels, rng),
        attn_proj_(channels, channels, 1, 1, 0, rng) {
    // scale halves start at identity so the cascade is well conditioned
    // at init; both warps then reduce to mean shifts of the normalized map
    for (Index c = 0; c < channels; ++c) {
      struct_proj_.bias.value()[c] = S(1);
      style_proj_.bias.value()[c] = S(1);
    }
  }

  Tensor<S> forward(const Tensor<S>& gamma, const Tensor<S>& alpha, const Tensor<S>& beta) const {
    require(gamma.shape().ndim() == 4 && alpha.shape().ndim() == 4 &&
                gamma.shape()[2] == alpha.shape()[2] && gamma.shape()[3] == alpha.shape()[3],
            "DenormLayer: spatial side mismatch, gamma " + gamma.shape().str() + " vs alpha " +
                alpha.shape().str());
    require(gamma.shape()[1] == channels_, "DenormLayer: channel mismatch");
    auto normed = instance_norm(gamma, S(kEps), NormEps::OnStd);
    auto sm = struct_proj_.forward(alpha);
    auto sv = style_proj_.forward(beta);
    auto eta_logits = attn_proj_.forward(normed);
    return denorm_modulate(normed, sm, sv, eta_logits);
  }

  Tensor<S> attention(const Tensor<S>& gamma) const {
    return sigmoid(attn_proj_.forward(instance_norm(gamma, S(kEps), NormEps::OnStd)));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    struct_proj_.collect(prefix + ".struct_proj", out);
    style_proj_.collect(prefix + ".style_proj", out);
    attn_proj_.collect(prefix + ".attn_proj", out);
  }

  Conv2dLayer<S>& struct_proj() { return struct_proj_; }
  LinearLayer<S>& style_proj() { return style_proj_; }
  Conv2dLayer<S>& attn_proj() { return attn_proj_; }
  Index channels() const { return channels_; }

 private:
  Index channels_ = 0;
  Conv2dLayer<S> struct_proj_;
  LinearLayer<S> style_proj_;
  Conv2dLayer<S> attn_proj_;
};

// Residual block of two (denorm -> activation -> 3x3 conv) stages.
template <typename S>
class DenormBlock {
 public:
  DenormBlock() = default;
  DenormBlock(Index in_ch, Index out_ch, Index alpha_ch, Index style_dim, Rng& rng)
      : dn1_(in_ch, alpha_ch, style_dim, rng),
        conv1_(in_ch, out_ch, 3, 1, 1, rng),
        dn2_(out_ch, alpha_ch, style_dim, rng),
        conv2_(out_ch, out_ch, 3, 1, 1, rng) {
    if (in_ch != out_ch) {
      skip_ = Conv2dLayer<S>(in_ch, out_ch, 1, 1, 0, rng);
      projected_ = true;
    }
  }

  Tensor<S> forward(const Tensor<S>& gamma, const Tensor<S>& alpha, const Tensor<S>& beta) const {
    auto h = conv1_.forward(relu(dn1_.forward(gamma, alpha, beta)));
    h = conv2_.forward(relu(dn2_.forward(h, alpha, beta)));
    auto sk = projected_ ? skip_.forward(gamma) : gamma;
    return add(sk, h);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    dn1_.collect(prefix + ".dn1", out);
    conv1_.collect(prefix + ".conv1", out);
    dn2_.collect(prefix + ".dn2", out);
    conv2_.collect(prefix + ".conv2", out);
    if (projected_) skip_.collect(prefix + ".skip", out);
  }

  DenormLayer<S>& dn1() { return dn1_; }
  DenormLayer<S>& dn2() { return dn2_; }
  Conv2dLayer<S>& conv1() { return conv1_; }
  Conv2dLayer<S>& conv2() { return conv2_; }

 private:
  DenormLayer<S> dn1_;
  Conv2dLayer<S> conv1_;
  DenormLayer<S> dn2_;
  Conv2dLayer<S> conv2_;
  Conv2dLayer<S> skip_;
  bool projected_ = false;
};

// Cascaded denormalization blocks consuming the pyramid coarse to fine,
// with x2 upsampling between blocks, seeded by a spatialized style vector.
template <typename S>
class DenormDecoder {
 public:
  DenormDecoder() = default;
  DenormDecoder(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    int L = cfg.levels();
    seed_ = LinearLayer<S>(cfg.style_dim, cfg.pyramid_channels(1) * 4, rng);
    for (int i = 1; i <= L; ++i) {
      Index in_ch = i == 1 ? cfg.pyramid_channels(1) : cfg.pyramid_channels(i - 1);
      blocks_.emplace_back(in_ch, cfg.pyramid_channels(i), cfg.pyramid_channels(i), cfg.style_dim, rng);
    }
    out_proj_ = Conv2dLayer<S>(cfg.pyramid_channels(L), 1, 3, 1, 1, rng);
  }

  Tensor<S> forward(const std::vector<Tensor<S>>& pyramid, const Tensor<S>& beta) const {
    int L = cfg_.levels();
    require(static_cast<int>(pyramid.size()) == L, "DenormDecoder: pyramid level count mismatch");
    Index N = beta.shape()[0];
    auto gamma = reshape(seed_.forward(beta), Shape{N, cfg_.pyramid_channels(1), 2, 2});
    for (int i = 1; i <= L; ++i) {
      if (i > 1) gamma = upsample_nearest2(gamma);
      gamma = blocks_[static_cast<size_t>(i - 1)].forward(gamma, pyramid[static_cast<size_t>(i - 1)], beta);
    }
    return sigmoid(out_proj_.forward(gamma));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    seed_.collect(prefix + ".seed", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(prefix + ".block" + std::to_string(i + 1), out);
    out_proj_.collect(prefix + ".out_proj", out);
  }

  DenormBlock<S>& block(int i) { return blocks_[static_cast<size_t>(i)]; }

 private:
  GeneratorConfig cfg_;
  LinearLayer<S> seed_;
  std::vector<DenormBlock<S>> blocks_;
  Conv2dLayer<S> out_proj_;
};

template <typename S>
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& cfg, Rng& rng)
      : cfg_(cfg), structure_(cfg, rng), style_(cfg, rng), decoder_(cfg, rng) {}

  std::vector<Tensor<S>> encode_structure(const Tensor<S>& tmpl) const { return structure_.forward(tmpl); }
  Tensor<S> encode_style(const Tensor<S>& refs) const { return style_.forward(refs); }

  // style vector of a single glyph: tiled across all reference channels
  Tensor<S> encode_style_single(const Tensor<S>& image) const {
    return style_.forward(tile_channels(image, cfg_.reference_count));
  }

  Tensor<S> decode(const std::vector<Tensor<S>>& pyramid, const Tensor<S>& beta) const {
    return decoder_.forward(pyramid, beta);
  }

  Tensor<S> generate(const Tensor<S>& refs, const Tensor<S>& tmpl) const {
    return decode(encode_structure(tmpl), encode_style(refs));
  }

  ParamList<S> params() {
    ParamList<S> out;
    structure_.collect("structure", out);
    style_.collect("style", out);
    decoder_.collect("decoder", out);
    return out;
  }

  const GeneratorConfig& config() const { return cfg_; }
  StructureEncoder<S>& structure() { return structure_; }
  const StructureEncoder<S>& structure() const { return structure_; }
  StyleEncoder<S>& style() { return style_; }
  DenormDecoder<S>& decoder() { return decoder_; }

 private:
  GeneratorConfig cfg_;
  StructureEncoder<S> structure_;
  StyleEncoder<S> style_;
  DenormDecoder<S> decoder_;
};

}  // namespace metascript
