#pragma once

#include "metascript/generator.hpp"
#include "metascript/discriminator.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

// Scalar-loop reference implementations used as independent oracles.
// Everything here is plain index arithmetic over raw values; none of it
// goes through the autodiff op stack it checks.
namespace oracles {

using metascript::Index;

// flat NCHW accessor
struct View {
  const double* p;
  Index N, C, H, W;
  double at(Index n, Index c, Index y, Index x) const { return p[((n * C + c) * H + y) * W + x]; }
};

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// The denormalization layer: normalize per (sample, channel) by
// (std + 1e-5), warp by a 1x1 convolution of the structure map, warp by a
// linear map of the style vector, fuse through the attention mask.
inline std::vector<double> denorm_layer_oracle(const View& gamma, const View& alpha,
                                               const double* beta, Index style_dim,
                                               const double* w_struct, const double* b_struct,
                                               const double* w_style, const double* b_style,
                                               const double* w_attn, const double* b_attn) {
  Index N = gamma.N, C = gamma.C, H = gamma.H, W = gamma.W, Ca = alpha.C;
  std::vector<double> ybar(static_cast<size_t>(N * C * H * W));
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      double mu = 0;
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) mu += gamma.at(n, c, y, x);
      mu /= static_cast<double>(H * W);
      double var = 0;
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) var += (gamma.at(n, c, y, x) - mu) * (gamma.at(n, c, y, x) - mu);
      var /= static_cast<double>(H * W);
      double denom = std::sqrt(var) + 1e-5;
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x)
          ybar[static_cast<size_t>(((n * C + c) * H + y) * W + x)] = (gamma.at(n, c, y, x) - mu) / denom;
    }

  auto yb = [&](Index n, Index c, Index y, Index x) {
    return ybar[static_cast<size_t>(((n * C + c) * H + y) * W + x)];
  };
  std::vector<double> out(static_cast<size_t>(N * C * H * W));
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
          // 1x1 convolution of alpha for the scale (channel c) and shift (channel C+c)
          double s_scale = b_struct[c], s_shift = b_struct[C + c];
          for (Index a = 0; a < Ca; ++a) {
            s_scale += w_struct[c * Ca + a] * alpha.at(n, a, y, x);
            s_shift += w_struct[(C + c) * Ca + a] * alpha.at(n, a, y, x);
          }
          // linear map of beta
          double t_scale = b_style[c], t_shift = b_style[C + c];
          for (Index s = 0; s < style_dim; ++s) {
            t_scale += w_style[c * style_dim + s] * beta[n * style_dim + s];
            t_shift += w_style[(C + c) * style_dim + s] * beta[n * style_dim + s];
          }
          // attention from a 1x1 convolution of the normalized map
          double a_logit = b_attn[c];
          for (Index c2 = 0; c2 < C; ++c2) a_logit += w_attn[c * C + c2] * yb(n, c2, y, x);
          double eta = sigmoid(a_logit);
          double warped_s = s_scale * yb(n, c, y, x) + s_shift;
          double warped_t = t_scale * yb(n, c, y, x) + t_shift;
          out[static_cast<size_t>(((n * C + c) * H + y) * W + x)] =
              (1.0 - eta) * warped_s + eta * warped_t;
        }
  return out;
}

// convenience wrapper pulling the weights out of a DenormLayer<double>
inline std::vector<double> denorm_layer_oracle(metascript::DenormLayer<double>& layer,
                                               const metascript::Tensor<double>& gamma,
                                               const metascript::Tensor<double>& alpha,
                                               const metascript::Tensor<double>& beta) {
  View g{gamma.value().data(), gamma.shape()[0], gamma.shape()[1], gamma.shape()[2], gamma.shape()[3]};
  View a{alpha.value().data(), alpha.shape()[0], alpha.shape()[1], alpha.shape()[2], alpha.shape()[3]};
  return denorm_layer_oracle(g, a, beta.value().data(), beta.shape()[1],
                             layer.struct_proj().weight.value().data(),
                             layer.struct_proj().bias.value().data(),
                             layer.style_proj().weight.value().data(),
                             layer.style_proj().bias.value().data(),
                             layer.attn_proj().weight.value().data(),
                             layer.attn_proj().bias.value().data());
}

// 2x2 stride-2 average pooling
inline std::vector<double> avg_pool2_oracle(const View& x) {
  Index OH = x.H / 2, OW = x.W / 2;
  std::vector<double> out(static_cast<size_t>(x.N * x.C * OH * OW));
  for (Index n = 0; n < x.N; ++n)
    for (Index c = 0; c < x.C; ++c)
      for (Index y = 0; y < OH; ++y)
        for (Index xx = 0; xx < OW; ++xx)
          out[static_cast<size_t>(((n * x.C + c) * OH + y) * OW + xx)] =
              0.25 * (x.at(n, c, 2 * y, 2 * xx) + x.at(n, c, 2 * y, 2 * xx + 1) +
                      x.at(n, c, 2 * y + 1, 2 * xx) + x.at(n, c, 2 * y + 1, 2 * xx + 1));
  return out;
}

// ---------------------------------------------------------------------------
// scalar reference of the training objective (Eqs 10-18 semantics): take
// raw logit arrays and images, produce every term and the weighted totals

struct LossOracleInput {
  // per scale s: authenticity logits (N), type logits (N x n), writer logits (N x m)
  std::array<std::vector<double>, 3> auth_fake, auth_real;
  std::array<std::vector<double>, 3> type_fake, type_real, writer_fake, writer_real;
  Index N = 0, n_types = 0, n_writers = 0;
  std::vector<Index> labels_type, labels_writer;
  // structure pyramids as flat per-level arrays
  std::vector<std::vector<double>> pyramid_fake, pyramid_template;
  std::vector<double> style_fake, style_refs;
  std::vector<double> fake, truth;
};

struct LossOracleOutput {
  double g_adv = 0, g_cls = 0, g_str = 0, g_sty = 0, g_rec = 0, g_total = 0;
  double d_adv = 0, d_cls = 0, d_total = 0;
};

inline double ce_row_oracle(const std::vector<double>& logits, Index row, Index K, Index label) {
  double mx = -1e300;
  for (Index k = 0; k < K; ++k) mx = std::max(mx, logits[static_cast<size_t>(row * K + k)]);
  double z = 0;
  for (Index k = 0; k < K; ++k) z += std::exp(logits[static_cast<size_t>(row * K + k)] - mx);
  double p = std::exp(logits[static_cast<size_t>(row * K + label)] - mx) / z;
  return -std::log(std::max(p, 1e-30));
}

inline LossOracleOutput loss_oracle(const LossOracleInput& in, const metascript::LossWeights& w) {
  LossOracleOutput out;
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  for (int s = 0; s < 3; ++s) {
    // generator adversarial: -log sigmoid(fake logit), batch mean per scale
    double adv = 0;
    for (Index i = 0; i < in.N; ++i)
      adv += -std::log(std::max(sigmoid(in.auth_fake[static_cast<size_t>(s)][static_cast<size_t>(i)]), 1e-30));
    out.g_adv += adv / static_cast<double>(in.N);

    double cls = 0;
    for (Index i = 0; i < in.N; ++i)
      cls += ce_row_oracle(in.type_fake[static_cast<size_t>(s)], i, in.n_types, in.labels_type[static_cast<size_t>(i)]) +
             ce_row_oracle(in.writer_fake[static_cast<size_t>(s)], i, in.n_writers, in.labels_writer[static_cast<size_t>(i)]);
    out.g_cls += cls / static_cast<double>(in.N);

    double d_adv = 0;
    for (Index i = 0; i < in.N; ++i) {
      d_adv += -std::log(std::max(sigmoid(in.auth_real[static_cast<size_t>(s)][static_cast<size_t>(i)]), 1e-30));
      d_adv += -std::log(std::max(1.0 - sigmoid(in.auth_fake[static_cast<size_t>(s)][static_cast<size_t>(i)]), 1e-30));
    }
    out.d_adv += d_adv / static_cast<double>(in.N);

    double d_cls = 0;
    for (Index i = 0; i < in.N; ++i) {
      d_cls += ce_row_oracle(in.type_real[static_cast<size_t>(s)], i, in.n_types, in.labels_type[static_cast<size_t>(i)]) +
               ce_row_oracle(in.writer_real[static_cast<size_t>(s)], i, in.n_writers, in.labels_writer[static_cast<size_t>(i)]) +
               ce_row_oracle(in.type_fake[static_cast<size_t>(s)], i, in.n_types, in.labels_type[static_cast<size_t>(i)]) +
               ce_row_oracle(in.writer_fake[static_cast<size_t>(s)], i, in.n_writers, in.labels_writer[static_cast<size_t>(i)]);
    }
    out.d_cls += d_cls / static_cast<double>(in.N);
  }

  // structure: half the per-element mean squared difference, per level, summed
  for (size_t l = 0; l < in.pyramid_fake.size(); ++l) {
    double acc = 0;
    for (size_t i = 0; i < in.pyramid_fake[l].size(); ++i) {
      double d = in.pyramid_fake[l][i] - in.pyramid_template[l][i];
      acc += d * d;
    }
    out.g_str += 0.5 * acc / static_cast<double>(in.pyramid_fake[l].size());
  }

  {
    double acc = 0;
    for (size_t i = 0; i < in.style_fake.size(); ++i) {
      double d = in.style_fake[i] - in.style_refs[i];
      acc += d * d;
    }
    out.g_sty = 0.5 * acc / static_cast<double>(in.style_fake.size());
  }

  {
    std::vector<double> l1(in.fake.size());
    for (size_t i = 0; i < in.fake.size(); ++i) l1[i] = std::abs(in.fake[i] - in.truth[i]);
    out.g_rec = mean(l1);
  }

  out.g_total = w.adv_g * out.g_adv + w.cls_g * out.g_cls + w.str_g * out.g_str +
                w.sty_g * out.g_sty + w.rec_g * out.g_rec;
  out.d_total = w.adv_d * out.d_adv + w.cls_d * out.d_cls;
  return out;
}

// ---------------------------------------------------------------------------
// Frechet distance through the nonsymmetric product route: eigendecompose
// Sa*Sb directly (complex solver), trace of its principal square root

inline double frechet_oracle(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                             const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b) {
  Eigen::MatrixXd prod = cov_a * cov_b;
  Eigen::EigenSolver<Eigen::MatrixXd> es(prod);
  std::complex<double> tr(0, 0);
  for (Eigen::Index i = 0; i < prod.rows(); ++i) tr += std::sqrt(es.eigenvalues()[i]);
  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr.real();
}

// closed-form inception score by direct summation
inline double inception_score_oracle(const Eigen::MatrixXd& probs) {
  Eigen::VectorXd marginal = probs.colwise().mean();
  double kl = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
      if (probs(i, j) > 0) kl += probs(i, j) * (std::log(probs(i, j)) - std::log(marginal[j]));
  return std::exp(kl / static_cast<double>(probs.rows()));
}

}  // namespace oracles
