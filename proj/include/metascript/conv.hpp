#pragma once

#include "metascript/ops.hpp"

namespace metascript {

namespace detail {

// Patch matrix is (Cin*kh*kw) x (N*OH*OW), column-major so each output
// pixel's receptive field is one contiguous column.
template <typename S>
using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
void im2col(const S* x, Index N, Index C, Index H, Index W, Index kh, Index kw,
            Index stride, Index pad, Index OH, Index OW, ColMat<S>& col) {
  col.resize(C * kh * kw, N * OH * OW);
  for (Index n = 0; n < N; ++n) {
    const S* xn = x + n * C * H * W;
    for (Index oh = 0; oh < OH; ++oh) {
      for (Index ow = 0; ow < OW; ++ow) {
        S* dst = col.data() + (static_cast<Index>((n * OH + oh) * OW + ow)) * col.rows();
        Index ih0 = oh * stride - pad, iw0 = ow * stride - pad;
        for (Index c = 0; c < C; ++c) {
          const S* xc = xn + c * H * W;
          for (Index ky = 0; ky < kh; ++ky) {
            Index ih = ih0 + ky;
            if (ih < 0 || ih >= H) {
              for (Index kx = 0; kx < kw; ++kx) *dst++ = S(0);
              continue;
            }
            const S* row = xc + ih * W;
            for (Index kx = 0; kx < kw; ++kx) {
              Index iw = iw0 + kx;
              *dst++ = (iw >= 0 && iw < W) ? row[iw] : S(0);
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const ColMat<S>& col, Index N, Index C, Index H, Index W, Index kh,
                Index kw, Index stride, Index pad, Index OH, Index OW, S* dx) {
  for (Index n = 0; n < N; ++n) {
    S* xn = dx + n * C * H * W;
    for (Index oh = 0; oh < OH; ++oh) {
      for (Index ow = 0; ow < OW; ++ow) {
        const S* src = col.data() + (static_cast<Index>((n * OH + oh) * OW + ow)) * col.rows();
        Index ih0 = oh * stride - pad, iw0 = ow * stride - pad;
        for (Index c = 0; c < C; ++c) {
          S* xc = xn + c * H * W;
          for (Index ky = 0; ky < kh; ++ky) {
            Index ih = ih0 + ky;
            if (ih < 0 || ih >= H) {
              src += kw;
              continue;
            }
            S* row = xc + ih * W;
            for (Index kx = 0; kx < kw; ++kx) {
              Index iw = iw0 + kx;
              if (iw >= 0 && iw < W) row[iw] += *src;
              ++src;
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

namespace detail {

// 1x1 stride-1 convolutions are plain per-image GEMMs; skipping the patch
// matrix roughly halves decoder time.
template <typename S>
Tensor<S> conv2d_1x1(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  Index N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Index O = weight.shape()[0], plane = H * W;
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto out = Tensor<S>::make_op(Shape{N, O, H, W}, {x, weight, bias}, [x, weight, bias, N, C, O, plane](auto& n) mutable {
    Eigen::Map<const RowMat> Wm(weight.value().data(), O, C);
    for (Index i = 0; i < N; ++i) {
      Eigen::Map<const RowMat> G(n.grad.data() + i * O * plane, O, plane);
      Eigen::Map<const RowMat> X(x.value().data() + i * C * plane, C, plane);
      if (weight.requires_grad()) {
        Eigen::Map<RowMat> dW(weight.grad().data(), O, C);
        dW.noalias() += G * X.transpose();
      }
      if (x.requires_grad()) {
        Eigen::Map<RowMat> dX(x.grad().data() + i * C * plane, C, plane);
        dX.noalias() += Wm.transpose() * G;
      }
    }
    if (bias.requires_grad())
      for (Index i = 0; i < N; ++i)
        for (Index c = 0; c < O; ++c)
          bias.grad()[c] += n.grad.segment((i * O + c) * plane, plane).sum();
  });
  Eigen::Map<const RowMat> Wm(weight.value().data(), O, C);
  for (Index i = 0; i < N; ++i) {
    Eigen::Map<const RowMat> X(x.value().data() + i * C * plane, C, plane);
    Eigen::Map<RowMat> Y(out.value().data() + i * O * plane, O, plane);
    Y.noalias() = Wm * X;
    Y.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bias.value().data(), O);
  }
  return out;
}

}  // namespace detail

// 2-D convolution, weight (Cout, Cin, kh, kw), bias (Cout).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 Index stride, Index pad) {
  require(x.shape().ndim() == 4 && weight.shape().ndim() == 4, "conv2d: need NCHW input and OIHW weight");
  Index N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Index O = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  require(weight.shape()[1] == C, "conv2d: weight expects " + std::to_string(weight.shape()[1]) +
                                      " input channels, got " + std::to_string(C));
  require(bias.numel() == O, "conv2d: bias size mismatch");
  if (kh == 1 && kw == 1 && stride == 1 && pad == 0) return detail::conv2d_1x1(x, weight, bias);
  Index OH = (H + 2 * pad - kh) / stride + 1;
  Index OW = (W + 2 * pad - kw) / stride + 1;
  require(OH > 0 && OW > 0, "conv2d: output would be empty for input " + x.shape().str());

  Index K = C * kh * kw, M = N * OH * OW, plane = OH * OW;
  auto col = std::make_shared<detail::ColMat<S>>();
  detail::im2col(x.value().data(), N, C, H, W, kh, kw, stride, pad, OH, OW, *col);

  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> Wm(weight.value().data(), O, K);
  RowMat P = Wm * (*col);  // (O, M)

  Shape os{N, O, OH, OW};
  auto out = Tensor<S>::make_op(
      os, {x, weight, bias},
      [x, weight, bias, col, N, C, H, W, O, kh, kw, stride, pad, OH, OW, K, M, plane](auto& n) mutable {
        RowMat dP(O, M);
        for (Index i = 0; i < N; ++i)
          for (Index c = 0; c < O; ++c)
            dP.row(c).segment(i * plane, plane) =
                n.grad.segment((i * O + c) * plane, plane).transpose();
        if (bias.requires_grad()) {
          auto db = dP.rowwise().sum();
          for (Index c = 0; c < O; ++c) bias.grad()[c] += db[c];
        }
        if (weight.requires_grad()) {
          Eigen::Map<RowMat> dW(weight.grad().data(), O, K);
          dW.noalias() += dP * col->transpose();
        }
        if (x.requires_grad()) {
          Eigen::Map<const RowMat> Wm2(weight.value().data(), O, K);
          detail::ColMat<S> dcol = Wm2.transpose() * dP;
          detail::col2im_add(dcol, N, C, H, W, kh, kw, stride, pad, OH, OW, x.grad().data());
        }
      });
  for (Index i = 0; i < N; ++i)
    for (Index c = 0; c < O; ++c)
      out.value().segment((i * O + c) * plane, plane) =
          P.row(c).segment(i * plane, plane).transpose().array() + bias.value()[c];
  return out;
}

// 2x2 average pooling with stride 2; halves each spatial side exactly.
template <typename S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
  require(x.shape().ndim() == 4, "avg_pool2: need NCHW");
  Index N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2: odd spatial side " + x.shape().str());
  Index OH = H / 2, OW = W / 2;
  auto out = Tensor<S>::make_op(Shape{N, C, OH, OW}, {x}, [x, N, C, H, W, OH, OW](auto& n) mutable {
    if (!x.requires_grad()) return;
    for (Index g = 0; g < N * C; ++g) {
      const S* gp = n.grad.data() + g * OH * OW;
      S* dx = x.grad().data() + g * H * W;
      for (Index oh = 0; oh < OH; ++oh)
        for (Index ow = 0; ow < OW; ++ow) {
          S v = gp[oh * OW + ow] * S(0.25);
          dx[(2 * oh) * W + 2 * ow] += v;
          dx[(2 * oh) * W + 2 * ow + 1] += v;
          dx[(2 * oh + 1) * W + 2 * ow] += v;
          dx[(2 * oh + 1) * W + 2 * ow + 1] += v;
        }
    }
  });
  for (Index g = 0; g < N * C; ++g) {
    const S* xp = x.value().data() + g * H * W;
    S* op = out.value().data() + g * OH * OW;
    for (Index oh = 0; oh < OH; ++oh)
      for (Index ow = 0; ow < OW; ++ow)
        op[oh * OW + ow] = (xp[(2 * oh) * W + 2 * ow] + xp[(2 * oh) * W + 2 * ow + 1] +
                            xp[(2 * oh + 1) * W + 2 * ow] + xp[(2 * oh + 1) * W + 2 * ow + 1]) *
                           S(0.25);
  }
  return out;
}

// max pooling (used by the residual style backbone stem)
template <typename S>
Tensor<S> max_pool(const Tensor<S>& x, Index k, Index stride, Index pad) {
  require(x.shape().ndim() == 4, "max_pool: need NCHW");
  Index N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Index OH = (H + 2 * pad - k) / stride + 1;
  Index OW = (W + 2 * pad - k) / stride + 1;
  require(OH > 0 && OW > 0, "max_pool: output would be empty");
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<size_t>(N * C * OH * OW));
  auto out = Tensor<S>::zeros(Shape{N, C, OH, OW});
  for (Index g = 0; g < N * C; ++g) {
    const S* xp = x.value().data() + g * H * W;
    for (Index oh = 0; oh < OH; ++oh)
      for (Index ow = 0; ow < OW; ++ow) {
        S best = std::numeric_limits<S>::lowest();
        Index bi = -1;
        for (Index ky = 0; ky < k; ++ky) {
          Index ih = oh * stride - pad + ky;
          if (ih < 0 || ih >= H) continue;
          for (Index kx = 0; kx < k; ++kx) {
            Index iw = ow * stride - pad + kx;
            if (iw < 0 || iw >= W) continue;
            if (xp[ih * W + iw] > best) {
              best = xp[ih * W + iw];
              bi = ih * W + iw;
            }
          }
        }
        // fully padded window: treat as zero
        out.value()[g * OH * OW + oh * OW + ow] = bi >= 0 ? best : S(0);
        (*argmax)[static_cast<size_t>(g * OH * OW + oh * OW + ow)] = bi;
      }
  }
  auto v = out.value();
  auto res = Tensor<S>::make_op(out.shape(), {x}, [x, argmax, N, C, H, W, OH, OW](auto& n) mutable {
    if (!x.requires_grad()) return;
    for (Index g = 0; g < N * C; ++g) {
      S* dx = x.grad().data() + g * H * W;
      for (Index i = 0; i < OH * OW; ++i) {
        Index bi = (*argmax)[static_cast<size_t>(g * OH * OW + i)];
        if (bi >= 0) dx[bi] += n.grad[g * OH * OW + i];
      }
    }
  });
  res.value() = v;
  return res;
}

// (N,C,H,W) -> (N,C) spatial mean
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  require(x.shape().ndim() == 4, "global_avg_pool: need NCHW");
  Index N = x.shape()[0], C = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  S inv = S(1) / static_cast<S>(plane);
  auto out = Tensor<S>::make_op(Shape{N, C}, {x}, [x, N, C, plane, inv](auto& n) mutable {
    if (!x.requires_grad()) return;
    for (Index g = 0; g < N * C; ++g)
      x.grad().segment(g * plane, plane) += n.grad[g] * inv;
  });
  for (Index g = 0; g < N * C; ++g)
    out.value()[g] = x.value().segment(g * plane, plane).sum() * inv;
  return out;
}

// nearest-neighbor x2 upsampling
template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& x) {
  require(x.shape().ndim() == 4, "upsample_nearest2: need NCHW");
  Index N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Index OH = H * 2, OW = W * 2;
  auto out = Tensor<S>::make_op(Shape{N, C, OH, OW}, {x}, [x, N, C, H, W, OH, OW](auto& n) mutable {
    if (!x.requires_grad()) return;
    for (Index g = 0; g < N * C; ++g) {
      const S* gp = n.grad.data() + g * OH * OW;
      S* dx = x.grad().data() + g * H * W;
      for (Index h = 0; h < H; ++h)
        for (Index w = 0; w < W; ++w)
          dx[h * W + w] += gp[(2 * h) * OW + 2 * w] + gp[(2 * h) * OW + 2 * w + 1] +
                           gp[(2 * h + 1) * OW + 2 * w] + gp[(2 * h + 1) * OW + 2 * w + 1];
    }
  });
  for (Index g = 0; g < N * C; ++g) {
    const S* xp = x.value().data() + g * H * W;
    S* op = out.value().data() + g * OH * OW;
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) {
        S v = xp[h * W + w];
        op[(2 * h) * OW + 2 * w] = v;
        op[(2 * h) * OW + 2 * w + 1] = v;
        op[(2 * h + 1) * OW + 2 * w] = v;
        op[(2 * h + 1) * OW + 2 * w + 1] = v;
      }
  }
  return out;
}

}  // namespace metascript
