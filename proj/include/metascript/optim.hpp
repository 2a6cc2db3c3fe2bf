#pragma once

#include "metascript/layers.hpp"

namespace metascript {

// Adam over a fixed parameter list. Moments live here, keyed by position,
// so the list must not be reordered between steps.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<S> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i] = Tensor<S>::Storage::Zero(params_[i].tensor.numel());
      v_[i] = Tensor<S>::Storage::Zero(params_[i].tensor.numel());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    ++t_;
    S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].tensor;
      if (!p.has_grad()) continue;
      auto& g = p.grad();
      m_[i] = S(beta1_) * m_[i] + S(1 - beta1_) * g;
      v_[i] = S(beta2_) * v_[i] + S(1 - beta2_) * g.square();
      p.value() -= S(lr_) * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + S(eps_));
    }
  }

  const ParamList<S>& params() const { return params_; }

 private:
  ParamList<S> params_;
  double lr_ = 1e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<typename Tensor<S>::Storage> m_, v_;
};

}  // namespace metascript
