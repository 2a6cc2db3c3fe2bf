#include "metascript/generator.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

using namespace metascript;

namespace {

template <typename S>
Tensor<S> randt(const Shape& s, Rng& rng, bool rg = false) {
  auto t = Tensor<S>::zeros(s, rg);
  for (Index i = 0; i < t.numel(); ++i) t.value()[i] = static_cast<S>(rng.normal());
  return t;
}

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.resolution = 32;
  c.base_channels = 8;
  c.max_channels = 32;
  c.style_dim = 24;
  c.reference_count = 2;
  return c;
}

}  // namespace

TEST_CASE("channel schedule matches the documented full-scale layout") {
  GeneratorConfig c;  // defaults: 128 / 64 / 512 / 512
  CHECK(c.levels() == 7);
  std::vector<Index> downs;
  for (int k = 1; k <= 6; ++k) downs.push_back(c.down_channels(k));
  CHECK(downs == std::vector<Index>{64, 128, 256, 512, 512, 512});
  std::vector<Index> pyr;
  for (int i = 1; i <= 7; ++i) pyr.push_back(c.pyramid_channels(i));
  CHECK(pyr == std::vector<Index>{512, 512, 512, 256, 128, 64, 64});
}

TEST_CASE("structure encoder emits the full pyramid") {
  Rng rng(1);
  auto cfg = tiny_config();
  StructureEncoder<float> enc(cfg, rng);
  auto x = randt<float>({2, 1, 32, 32}, rng);
  auto pyr = enc.forward(x);
  REQUIRE(pyr.size() == 5);
  for (size_t i = 0; i < pyr.size(); ++i) {
    Index side = Index(2) << i;
    CHECK(pyr[i].shape()[2] == side);
    CHECK(pyr[i].shape()[3] == side);
    CHECK(pyr[i].shape()[1] == cfg.pyramid_channels(static_cast<int>(i) + 1));
    CHECK(pyr[i].value().isFinite().all());
  }
  CHECK_THROWS(enc.forward(randt<float>({1, 1, 16, 16}, rng)));
}

TEST_CASE("all-zero template still produces finite maps") {
  Rng rng(2);
  StructureEncoder<float> enc(tiny_config(), rng);
  auto pyr = enc.forward(Tensor<float>::zeros(Shape{1, 1, 32, 32}));
  for (auto& p : pyr) CHECK(p.value().isFinite().all());
}

TEST_CASE("different templates produce different pyramids") {
  Rng rng(3);
  StructureEncoder<float> enc(tiny_config(), rng);
  auto a = Tensor<float>::zeros(Shape{1, 1, 32, 32});
  auto b = Tensor<float>::zeros(Shape{1, 1, 32, 32});
  for (Index i = 200; i < 400; ++i) a.value()[i] = 1.0f;
  for (Index i = 600; i < 800; ++i) b.value()[i] = 1.0f;
  auto pa = enc.forward(a), pb = enc.forward(b);
  double diff = 0;
  for (size_t l = 0; l < pa.size(); ++l) diff += (pa[l].value() - pb[l].value()).abs().maxCoeff();
  CHECK(diff > 1e-4);
}

TEST_CASE("style encoder contract") {
  Rng rng(4);
  auto cfg = tiny_config();
  StyleEncoder<float> enc(cfg, rng);
  auto refs = randt<float>({3, 2, 32, 32}, rng);
  auto beta = enc.forward(refs);
  CHECK(beta.shape() == Shape{3, 24});
  CHECK(beta.value().isFinite().all());

  // wrong reference count is rejected
  CHECK_THROWS(enc.forward(randt<float>({3, 4, 32, 32}, rng)));

  // zero stack stays finite
  CHECK(enc.forward(Tensor<float>::zeros(Shape{1, 2, 32, 32})).value().isFinite().all());

  // channel order matters: permuting references moves the embedding
  auto swapped = Tensor<float>::zeros(Shape{3, 2, 32, 32});
  Index plane = 32 * 32;
  for (Index n = 0; n < 3; ++n) {
    swapped.value().segment((n * 2 + 0) * plane, plane) = refs.value().segment((n * 2 + 1) * plane, plane);
    swapped.value().segment((n * 2 + 1) * plane, plane) = refs.value().segment((n * 2 + 0) * plane, plane);
  }
  auto beta_swapped = enc.forward(swapped);
  CHECK((beta.value() - beta_swapped.value()).abs().maxCoeff() > 1e-6);
}

TEST_CASE("denormalization layer matches the scalar oracle") {
  Rng rng(5);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Index C = 1 + rep % 3, Ca = 1 + (rep / 2) % 3, S = 2 + rep % 4;
    Index side = 2 + rep % 3;
    Rng wr(100 + static_cast<std::uint64_t>(rep));
    DenormLayer<double> layer(C, Ca, S, wr);
    auto gamma = randt<double>({2, C, side, side}, rng);
    auto alpha = randt<double>({2, Ca, side, side}, rng);
    auto beta = randt<double>({2, S}, rng);
    // float32-quantized inputs evaluated in float64
    for (auto* t : {&gamma, &alpha, &beta})
      for (Index i = 0; i < t->numel(); ++i) t->value()[i] = static_cast<float>(t->value()[i]);
    auto got = layer.forward(gamma, alpha, beta);
    auto want = oracles::denorm_layer_oracle(layer, gamma, alpha, beta);
    double err = 0;
    for (Index i = 0; i < got.numel(); ++i)
      err = std::max(err, std::abs(got.value()[i] - want[static_cast<size_t>(i)]));
    CHECK(err < 1e-6);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("normalization step centers and scales within 1e-4") {
  Rng rng(6);
  auto gamma = randt<double>({2, 3, 8, 8}, rng);
  auto normed = instance_norm(gamma, 1e-5, NormEps::OnStd);
  Index plane = 64;
  for (Index g = 0; g < 6; ++g) {
    auto seg = normed.value().segment(g * plane, plane);
    double mu = seg.mean();
    double sd = std::sqrt((seg - mu).square().mean());
    CHECK(std::abs(mu) < 1e-4);
    CHECK(std::abs(sd - 1.0) < 1e-4);
  }
}

TEST_CASE("attention mask lies strictly inside (0,1)") {
  Rng rng(7);
  DenormLayer<float> layer(4, 3, 8, rng);
  auto gamma = randt<float>({2, 4, 4, 4}, rng);
  auto eta = layer.attention(gamma);
  CHECK((eta.value() > 0.0f).all());
  CHECK((eta.value() < 1.0f).all());
}

TEST_CASE("forcing the attention bias to -inf collapses to the structure warp") {
  Rng rng(8);
  DenormLayer<double> layer(3, 2, 6, rng);
  layer.attn_proj().weight.value().setZero();
  layer.attn_proj().bias.value().setConstant(-1e4);  // sigmoid underflows to exactly 0
  auto gamma = randt<double>({1, 3, 4, 4}, rng);
  auto alpha = randt<double>({1, 2, 4, 4}, rng);
  auto beta = randt<double>({1, 6}, rng);
  auto out = layer.forward(gamma, alpha, beta);

  // structure warp alone
  auto normed = instance_norm(gamma, 1e-5, NormEps::OnStd);
  auto sm = layer.struct_proj().forward(alpha);
  auto want = add(mul(slice_channels(sm, 0, 3), normed), slice_channels(sm, 3, 6));
  for (Index i = 0; i < out.numel(); ++i) CHECK(out.value()[i] == want.value()[i]);
}

TEST_CASE("fusion is consistent when both warps agree") {
  Rng rng(9);
  DenormLayer<double> layer(3, 2, 6, rng);
  // zero projection weights, identical biases: both warps become the same map
  layer.struct_proj().weight.value().setZero();
  layer.style_proj().weight.value().setZero();
  for (Index c = 0; c < 3; ++c) {
    layer.struct_proj().bias.value()[c] = 1.7;
    layer.style_proj().bias.value()[c] = 1.7;
    layer.struct_proj().bias.value()[3 + c] = -0.4;
    layer.style_proj().bias.value()[3 + c] = -0.4;
  }
  auto gamma = randt<double>({2, 3, 4, 4}, rng);
  auto alpha = randt<double>({2, 2, 4, 4}, rng);
  auto beta = randt<double>({2, 6}, rng);
  auto out = layer.forward(gamma, alpha, beta);
  auto want = affine(instance_norm(gamma, 1e-5, NormEps::OnStd), 1.7, -0.4);
  CHECK((out.value() - want.value()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("denorm block: residual structure and shape") {
  Rng rng(10);
  DenormBlock<double> block(3, 3, 2, 6, rng);
  block.conv1().weight.value().setZero();
  block.conv1().bias.value().setZero();
  block.conv2().weight.value().setZero();
  block.conv2().bias.value().setZero();
  auto gamma = randt<double>({1, 3, 4, 4}, rng);
  auto alpha = randt<double>({1, 2, 4, 4}, rng);
  auto beta = randt<double>({1, 6}, rng);
  // zeroed convs make the residual branch vanish: output == input
  auto out = block.forward(gamma, alpha, beta);
  CHECK((out.value() - gamma.value()).abs().maxCoeff() < 1e-12);

  // shape follows the structure map side and requested channels
  DenormBlock<float> wide(4, 6, 5, 8, rng);
  auto o2 = wide.forward(randt<float>({2, 4, 8, 8}, rng), randt<float>({2, 5, 8, 8}, rng),
                         randt<float>({2, 8}, rng));
  CHECK(o2.shape() == Shape{2, 6, 8, 8});
}

TEST_CASE("denorm block gradient matches central differences") {
  Rng rng(11);
  DenormBlock<double> block(2, 2, 2, 3, rng);
  auto gamma = randt<double>({1, 2, 2, 2}, rng, true);
  auto alpha = randt<double>({1, 2, 2, 2}, rng);
  auto beta = randt<double>({1, 3}, rng);
  Rng wr(70);
  std::vector<double> w(8);
  for (auto& v : w) v = wr.uniform(-1, 1);
  auto weighted = [&]() {
    auto out = block.forward(gamma, alpha, beta);
    double s = 0;
    for (Index i = 0; i < out.numel(); ++i) s += w[static_cast<size_t>(i)] * out.value()[i];
    return s;
  };
  {
    auto out = block.forward(gamma, alpha, beta);
    auto wt = Tensor<double>::from(out.shape(), w);
    sum_all(mul(out, wt)).backward();
  }
  const double h = 1e-5;
  for (Index i = 0; i < gamma.numel(); ++i) {
    double orig = gamma.value()[i];
    gamma.value()[i] = orig + h;
    double lp = weighted();
    gamma.value()[i] = orig - h;
    double lm = weighted();
    gamma.value()[i] = orig;
    double fd = (lp - lm) / (2 * h);
    double an = gamma.grad()[i];
    CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}) < 1e-3);
  }
}

TEST_CASE("generator output is canonical and bounded") {
  Rng rng(12);
  auto cfg = tiny_config();
  Generator<float> gen(cfg, rng);
  auto refs = randt<float>({2, 2, 32, 32}, rng);
  auto tmpl = randt<float>({2, 1, 32, 32}, rng);
  auto out = gen.generate(refs, tmpl);
  CHECK(out.shape() == Shape{2, 1, 32, 32});
  CHECK((out.value() >= 0.0f).all());
  CHECK((out.value() <= 1.0f).all());
  CHECK(out.value().isFinite().all());
  // untrained output should not be a constant image
  CHECK(out.value().maxCoeff() - out.value().minCoeff() > 1e-6);
}

TEST_CASE("style vector of a single glyph goes through channel tiling") {
  Rng rng(13);
  Generator<float> gen(tiny_config(), rng);
  auto img = randt<float>({2, 1, 32, 32}, rng);
  auto beta = gen.encode_style_single(img);
  CHECK(beta.shape() == Shape{2, 24});

  // equals the style encoding of the image stacked into every channel
  auto tiled = tile_channels(img, 2);
  auto beta2 = gen.encode_style(tiled);
  CHECK((beta.value() - beta2.value()).abs().maxCoeff() == 0.0f);
}
