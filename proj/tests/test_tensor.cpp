#include "metascript/conv.hpp"

#include <doctest.h>

using namespace metascript;
using T = Tensor<double>;

namespace {

T randn(const Shape& s, Rng& rng, bool requires_grad = true) {
  T t = T::zeros(s, requires_grad);
  for (Index i = 0; i < t.numel(); ++i) t.value()[i] = rng.normal();
  return t;
}

// max relative error between analytic and central-difference gradients of
// sum(w .* f(inputs)) over every input element
template <typename F>
double gradcheck(std::vector<T> inputs, F f, double h = 1e-6) {
  Rng wr(7);
  auto probe = f(inputs);
  std::vector<double> w(static_cast<size_t>(probe.numel()));
  for (auto& v : w) v = wr.uniform(-1, 1);
  auto weighted = [&](const T& o) {
    double s = 0;
    for (Index i = 0; i < o.numel(); ++i) s += w[static_cast<size_t>(i)] * o.value()[i];
    return s;
  };
  {
    auto out = f(inputs);
    T wt = T::from(out.shape(), w);
    sum_all(mul(out, wt)).backward();
  }
  double max_rel = 0;
  for (auto& x : inputs) {
    if (!x.requires_grad()) continue;
    for (Index i = 0; i < x.numel(); ++i) {
      double orig = x.value()[i];
      x.value()[i] = orig + h;
      double lp = weighted(f(inputs));
      x.value()[i] = orig - h;
      double lm = weighted(f(inputs));
      x.value()[i] = orig;
      double fd = (lp - lm) / (2 * h);
      double an = x.has_grad() ? x.grad()[i] : 0.0;
      max_rel = std::max(max_rel, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
  }
  return max_rel;
}

}  // namespace

TEST_CASE("elementwise and activation gradients match finite differences") {
  Rng rng(3);
  auto a = randn({2, 3, 4, 4}, rng);
  auto b = randn({2, 3, 4, 4}, rng);
  CHECK(gradcheck({a, b}, [](auto& in) { return add(in[0], in[1]); }) < 1e-6);
  CHECK(gradcheck({a, b}, [](auto& in) { return mul(in[0], in[1]); }) < 1e-6);
  CHECK(gradcheck({a, b}, [](auto& in) { return sub(in[0], in[1]); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return relu(in[0]); }) < 1e-5);
  CHECK(gradcheck({a}, [](auto& in) { return leaky_relu(in[0], 0.2); }) < 1e-5);
  CHECK(gradcheck({a}, [](auto& in) { return sigmoid(in[0]); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return square(in[0]); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return abs(in[0]); }) < 1e-5);
  CHECK(gradcheck({a}, [](auto& in) { return affine(in[0], 2.5, -1.0); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return mean_all(in[0]); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return sum_all(in[0]); }) < 1e-6);
}

TEST_CASE("structural op gradients") {
  Rng rng(5);
  auto a = randn({2, 3, 4, 4}, rng);
  auto b = randn({2, 2, 4, 4}, rng);
  auto m = randn({2, 6, 4, 4}, rng);
  auto one = randn({2, 1, 4, 4}, rng);
  auto flat = randn({2, 8}, rng);
  CHECK(gradcheck({a, b}, [](auto& in) { return concat_channels(in[0], in[1]); }) < 1e-6);
  CHECK(gradcheck({m}, [](auto& in) { return slice_channels(in[0], 1, 4); }) < 1e-6);
  CHECK(gradcheck({flat}, [](auto& in) { return slice_features(in[0], 2, 7); }) < 1e-6);
  CHECK(gradcheck({one}, [](auto& in) { return tile_channels(in[0], 3); }) < 1e-6);
  CHECK(gradcheck({flat}, [](auto& in) { return reshape(in[0], Shape{2, 2, 2, 2}); }) < 1e-6);
}

TEST_CASE("matmul and linear gradients") {
  Rng rng(11);
  auto a = randn({3, 4}, rng);
  auto b = randn({4, 5}, rng);
  auto w = randn({6, 4}, rng);
  auto bias = randn({6}, rng);
  CHECK(gradcheck({a, b}, [](auto& in) { return matmul(in[0], in[1]); }) < 1e-6);
  CHECK(gradcheck({a, w, bias}, [](auto& in) { return linear(in[0], in[1], in[2]); }) < 1e-6);
}

TEST_CASE("conv2d gradients across kernel/stride/padding combos") {
  Rng rng(13);
  {
    auto x = randn({2, 3, 5, 5}, rng);
    auto w = randn({4, 3, 3, 3}, rng);
    auto b = randn({4}, rng);
    CHECK(gradcheck({x, w, b}, [](auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); }) < 1e-4);
  }
  {
    auto x = randn({2, 2, 8, 8}, rng);
    auto w = randn({3, 2, 4, 4}, rng);
    auto b = randn({3}, rng);
    CHECK(gradcheck({x, w, b}, [](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); }) < 1e-4);
  }
  {
    auto x = randn({2, 3, 4, 4}, rng);
    auto w = randn({5, 3, 1, 1}, rng);
    auto b = randn({5}, rng);
    CHECK(gradcheck({x, w, b}, [](auto& in) { return conv2d(in[0], in[1], in[2], 1, 0); }) < 1e-5);
  }
}

TEST_CASE("pooling and resampling gradients") {
  Rng rng(17);
  auto x = randn({2, 3, 6, 6}, rng);
  auto odd = randn({2, 3, 5, 5}, rng);
  CHECK(gradcheck({x}, [](auto& in) { return avg_pool2(in[0]); }) < 1e-6);
  CHECK(gradcheck({odd}, [](auto& in) { return max_pool(in[0], 3, 2, 1); }) < 1e-5);
  CHECK(gradcheck({x}, [](auto& in) { return global_avg_pool(in[0]); }) < 1e-6);
  CHECK(gradcheck({x}, [](auto& in) { return upsample_nearest2(in[0]); }) < 1e-6);
}

TEST_CASE("normalization gradients, both epsilon forms") {
  Rng rng(19);
  auto x = randn({2, 3, 4, 4}, rng);
  CHECK(gradcheck({x}, [](auto& in) { return instance_norm(in[0], 1e-4, NormEps::OnVar); }) < 1e-5);
  CHECK(gradcheck({x}, [](auto& in) { return instance_norm(in[0], 1e-5, NormEps::OnStd); }) < 1e-5);
  auto s = randn({2, 3}, rng);
  auto m = randn({2, 3}, rng);
  CHECK(gradcheck({x, s, m}, [](auto& in) { return scale_shift_nc(in[0], in[1], in[2]); }) < 1e-6);
  auto sm = randn({2, 6, 4, 4}, rng);
  auto sv = randn({2, 6}, rng);
  auto el = randn({2, 3, 4, 4}, rng);
  CHECK(gradcheck({x, sm, sv, el},
                  [](auto& in) { return denorm_modulate(in[0], in[1], in[2], in[3]); }) < 1e-5);
}

TEST_CASE("instance_norm handles constant planes without NaN") {
  auto x = T::full(Shape{1, 2, 3, 3}, 4.2, true);
  auto y = instance_norm(x, 1e-5, NormEps::OnStd);
  CHECK(y.value().isFinite().all());
  CHECK(y.value().abs().maxCoeff() == doctest::Approx(0.0));
  sum_all(y).backward();
  CHECK(x.grad().isFinite().all());
}

TEST_CASE("classification loss gradients and values") {
  Rng rng(23);
  auto z = randn({4, 5}, rng);
  std::vector<Index> labels{0, 2, 4, 1};
  CHECK(gradcheck({z}, [&](auto& in) { return cross_entropy_logits(in[0], labels); }) < 1e-6);
  auto a = randn({4, 1}, rng);
  CHECK(gradcheck({a}, [](auto& in) { return bce_logits(in[0], true); }) < 1e-6);
  CHECK(gradcheck({a}, [](auto& in) { return bce_logits(in[0], false); }) < 1e-6);

  // uniform logits = chance-level cross entropy
  auto u = T::zeros(Shape{3, 7});
  CHECK(cross_entropy_logits(u, {0, 3, 6}).item() == doctest::Approx(std::log(7.0)));
  // sigmoid(0) = 0.5 on both targets
  auto zero = T::zeros(Shape{2, 1});
  CHECK(bce_logits(zero, true).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce_logits(zero, false).item() == doctest::Approx(std::log(2.0)));
  // extreme logits stay finite
  auto big = T::full(Shape{2, 1}, 1e4);
  CHECK(std::isfinite(bce_logits(big, false).item()));
  CHECK(bce_logits(big, true).item() == doctest::Approx(0.0));
}

TEST_CASE("detach cuts the graph") {
  auto x = T::full(Shape{2, 2}, 1.5, true);
  auto y = mul(x.detach(), x.detach());
  CHECK_FALSE(y.requires_grad());
  auto z = sum_all(mul(x, x));
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("shape errors are reported") {
  auto a = T::zeros(Shape{2, 3});
  auto b = T::zeros(Shape{3, 3});
  CHECK_THROWS(add(a, b));
  CHECK_THROWS(matmul(a, a));
  CHECK_THROWS(reshape(a, Shape{4, 2}));
  CHECK_THROWS(T::zeros(Shape{2, 3}).item());
}

TEST_CASE("no_grad mode builds no history") {
  auto x = T::full(Shape{2, 2}, 2.0, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
