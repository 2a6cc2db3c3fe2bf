#pragma once

#include "metascript/discriminator.hpp"

#include <cmath>

namespace metascript {

// Zero disables a term and removes its gradient contribution entirely.
struct LossWeights {
  double adv_g = 1.0;
  double cls_g = 1.0;
  double str_g = 0.5;
  double sty_g = 0.1;
  double rec_g = 20.0;
  double adv_d = 1.0;
  double cls_d = 1.0;

  void validate() const {
    for (double v : {adv_g, cls_g, str_g, sty_g, rec_g, adv_d, cls_d})
      require(std::isfinite(v) && v >= 0.0, "LossWeights: weights must be finite and >= 0");
  }
};

template <typename S>
struct GeneratorLossResult {
  Tensor<S> total;  // scalar, differentiable
  double adv = 0, cls = 0, str = 0, sty = 0, rec = 0;
  double weighted_total = 0;
};

template <typename S>
struct DiscriminatorLossResult {
  Tensor<S> total;
  double adv = 0, cls = 0;
  double weighted_total = 0;
};

namespace detail {

template <typename S>
inline void check_term_finite(const Tensor<S>& t, const char* name) {
  require(std::isfinite(static_cast<double>(t.item())), std::string("loss term ") + name + " is not finite");
}

}  // namespace detail

// Generator objective: non-saturating adversarial term plus classification,
// structure, style and reconstruction terms, each summed over the three
// discriminator scales where applicable and averaged over the batch.
template <typename S>
GeneratorLossResult<S> generator_loss(const CriticVerdict<S>& verdict_fake,
                                      const std::vector<Tensor<S>>& pyramid_fake,
                                      const std::vector<Tensor<S>>& pyramid_template,
                                      const Tensor<S>& style_fake, const Tensor<S>& style_refs,
                                      const Tensor<S>& fake, const Tensor<S>& truth,
                                      const std::vector<Index>& type_labels,
                                      const std::vector<Index>& writer_labels,
                                      const LossWeights& w) {
  w.validate();
  GeneratorLossResult<S> r;
  std::vector<std::pair<double, Tensor<S>>> terms;

  if (w.adv_g > 0) {
    Tensor<S> adv;
    for (const auto& s : verdict_fake.scales) {
      auto t = bce_logits(s.authenticity, true);
      adv = adv.defined() ? add(adv, t) : t;
    }
    detail::check_term_finite(adv, "adv");
    r.adv = adv.item();
    terms.emplace_back(w.adv_g, adv);
  }

  if (w.cls_g > 0) {
    Tensor<S> cls;
    for (const auto& s : verdict_fake.scales) {
      auto t = add(cross_entropy_logits(s.type_logits, type_labels),
                   cross_entropy_logits(s.writer_logits, writer_labels));
      cls = cls.defined() ? add(cls, t) : t;
    }
    detail::check_term_finite(cls, "cls");
    r.cls = cls.item();
    terms.emplace_back(w.cls_g, cls);
  }

  if (w.str_g > 0) {
    require(pyramid_fake.size() == pyramid_template.size(), "generator_loss: pyramid size mismatch");
    Tensor<S> str;
    for (size_t l = 0; l < pyramid_fake.size(); ++l) {
      auto t = scale(mean_all(square(sub(pyramid_fake[l], pyramid_template[l]))), S(0.5));
      str = str.defined() ? add(str, t) : t;
    }
    detail::check_term_finite(str, "str");
    r.str = str.item();
    terms.emplace_back(w.str_g, str);
  }

  if (w.sty_g > 0) {
    auto sty = scale(mean_all(square(sub(style_fake, style_refs))), S(0.5));
    detail::check_term_finite(sty, "sty");
    r.sty = sty.item();
    terms.emplace_back(w.sty_g, sty);
  }

  if (w.rec_g > 0) {
    auto rec = mean_all(abs(sub(fake, truth)));
    detail::check_term_finite(rec, "rec");
    r.rec = rec.item();
    terms.emplace_back(w.rec_g, rec);
  }

  Tensor<S> total;
  for (auto& [weight, term] : terms) {
    auto t = scale(term, static_cast<S>(weight));
    total = total.defined() ? add(total, t) : t;
  }
  if (!total.defined()) total = Tensor<S>::zeros(Shape{1});
  r.total = total;
  r.weighted_total = total.item();
  return r;
}

// Discriminator objective: real/fake binary terms plus classification on
// both real and generated samples, generated samples trained toward the
// target labels.
template <typename S>
DiscriminatorLossResult<S> discriminator_loss(const CriticVerdict<S>& verdict_real,
                                              const CriticVerdict<S>& verdict_fake,
                                              const std::vector<Index>& type_labels,
                                              const std::vector<Index>& writer_labels,
                                              const LossWeights& w) {
  w.validate();
  DiscriminatorLossResult<S> r;
  std::vector<std::pair<double, Tensor<S>>> terms;

  if (w.adv_d > 0) {
    Tensor<S> adv;
    for (size_t s = 0; s < 3; ++s) {
      auto t = add(bce_logits(verdict_real.scales[s].authenticity, true),
                   bce_logits(verdict_fake.scales[s].authenticity, false));
      adv = adv.defined() ? add(adv, t) : t;
    }
    detail::check_term_finite(adv, "adv");
    r.adv = adv.item();
    terms.emplace_back(w.adv_d, adv);
  }

  if (w.cls_d > 0) {
    Tensor<S> cls;
    for (size_t s = 0; s < 3; ++s) {
      auto t = add(add(cross_entropy_logits(verdict_real.scales[s].type_logits, type_labels),
                       cross_entropy_logits(verdict_real.scales[s].writer_logits, writer_labels)),
                   add(cross_entropy_logits(verdict_fake.scales[s].type_logits, type_labels),
                       cross_entropy_logits(verdict_fake.scales[s].writer_logits, writer_labels)));
      cls = cls.defined() ? add(cls, t) : t;
    }
    detail::check_term_finite(cls, "cls");
    r.cls = cls.item();
    terms.emplace_back(w.cls_d, cls);
  }

  Tensor<S> total;
  for (auto& [weight, term] : terms) {
    auto t = scale(term, static_cast<S>(weight));
    total = total.defined() ? add(total, t) : t;
  }
  if (!total.defined()) total = Tensor<S>::zeros(Shape{1});
  r.total = total;
  r.weighted_total = total.item();
  return r;
}

// Fraction of authenticity calls the discriminator gets right, over all
// scales and the batch; logit > 0 means "real".
template <typename S>
double authenticity_accuracy(const CriticVerdict<S>& verdict_real,
                             const CriticVerdict<S>& verdict_fake) {
  Index correct = 0, total = 0;
  for (size_t s = 0; s < 3; ++s) {
    const auto& zr = verdict_real.scales[s].authenticity.value();
    const auto& zf = verdict_fake.scales[s].authenticity.value();
    for (Index i = 0; i < zr.size(); ++i) correct += zr[i] > 0 ? 1 : 0;
    for (Index i = 0; i < zf.size(); ++i) correct += zf[i] <= 0 ? 1 : 0;
    total += zr.size() + zf.size();
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace metascript
