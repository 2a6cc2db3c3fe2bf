#pragma once

#include "metascript/train.hpp"

#include <Eigen/Dense>

namespace metascript {

// ---------------------------------------------------------------------------
// activation statistics + Frechet distance

struct ActivationStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased, symmetric
  long count = 0;

  // rows are samples, columns are feature dimensions
  static ActivationStats from_features(const Eigen::MatrixXd& feats) {
    require(feats.rows() >= 2, "ActivationStats: need at least 2 samples");
    ActivationStats s;
    s.count = feats.rows();
    s.mean = feats.colwise().mean();
    Eigen::MatrixXd centered = feats.rowwise() - s.mean.transpose();
    s.cov = centered.transpose() * centered / static_cast<double>(feats.rows() - 1);
    s.cov = 0.5 * (s.cov + s.cov.transpose().eval());
    return s;
  }

  void validate() const {
    require(count >= 2, "ActivationStats: sample count must be >= 2");
    require(mean.allFinite() && cov.allFinite(), "ActivationStats: non-finite statistics");
    require(cov.rows() == cov.cols() && cov.rows() == mean.size(), "ActivationStats: shape mismatch");
  }
};

namespace detail {

// PSD square root by eigendecomposition; eigenvalues in [-1e-6, 0) are
// numerical noise and clipped, anything lower is a hard error
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  require(es.info() == Eigen::Success, "psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    require(ev[i] > -1e-6, "psd_sqrt: matrix is not positive semidefinite (eigenvalue " +
                               std::to_string(ev[i]) + ")");
    ev[i] = ev[i] > 0 ? std::sqrt(ev[i]) : 0.0;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), computed through the
// symmetric form tr((Sa^(1/2) Sb Sa^(1/2))^(1/2))
inline double frechet_distance(const ActivationStats& a, const ActivationStats& b) {
  a.validate();
  b.validate();
  require(a.mean.size() == b.mean.size(), "frechet_distance: feature dimensions differ");
  Eigen::MatrixXd root_a = detail::psd_sqrt(a.cov);
  Eigen::MatrixXd inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose().eval());
  Eigen::MatrixXd cross = detail::psd_sqrt(inner);
  double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return std::max(0.0, d2);
}

// ---------------------------------------------------------------------------
// inception score

// probs rows are per-image class distributions; single split by default,
// the classic 10-split variant averages the per-chunk scores
inline double inception_score(const Eigen::MatrixXd& probs, int splits = 1) {
  require(probs.rows() >= 2, "inception_score: need at least 2 images");
  require(splits >= 1 && splits <= probs.rows(), "inception_score: bad split count");
  const double tiny = 1e-12;
  double total = 0;
  Eigen::Index per = probs.rows() / splits;
  for (int s = 0; s < splits; ++s) {
    Eigen::Index begin = s * per;
    Eigen::Index len = (s == splits - 1) ? probs.rows() - begin : per;
    Eigen::MatrixXd chunk = probs.middleRows(begin, len);
    Eigen::VectorXd marginal = chunk.colwise().mean();
    double kl = 0;
    for (Eigen::Index i = 0; i < chunk.rows(); ++i)
      for (Eigen::Index j = 0; j < chunk.cols(); ++j) {
        double p = std::max(chunk(i, j), tiny);
        kl += chunk(i, j) * (std::log(p) - std::log(std::max(marginal[j], tiny)));
      }
    total += std::exp(kl / static_cast<double>(chunk.rows()));
  }
  return total / splits;
}

// ---------------------------------------------------------------------------
// glyph classifier (feature extractor for RA / IS / FID)

struct ClassifierConfig {
  Index resolution = 32;
  std::string backbone = "cnn_small";  // cnn_small | cnn_large
  int epochs = 40;
  int batch_size = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  Index base_channels() const { return backbone == "cnn_large" ? 64 : 16; }

  nlohmann::json to_json() const {
    return {{"resolution", resolution}, {"backbone", backbone}, {"epochs", epochs},
            {"batch_size", batch_size}, {"lr", lr}, {"holdout_fraction", holdout_fraction},
            {"seed", seed}};
  }
  static ClassifierConfig from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.resolution = j.at("resolution").get<Index>();
    c.backbone = j.at("backbone").get<std::string>();
    c.epochs = j.value("epochs", 40);
    c.batch_size = j.value("batch_size", 32);
    c.lr = j.value("lr", 1e-3);
    c.holdout_fraction = j.value("holdout_fraction", 0.2);
    c.seed = j.value("seed", 0ULL);
    return c;
  }
};

template <typename S>
class GlyphClassifier {
 public:
  GlyphClassifier() = default;
  GlyphClassifier(const ClassifierConfig& cfg, Index type_count, Rng& rng)
      : cfg_(cfg), type_count_(type_count) {
    require(type_count >= 2, "GlyphClassifier: need at least 2 classes");
    Index side = cfg.resolution;
    Index ch = 1;
    int k = 1;
    while (side > 4) {  // down to a 4x4 map
      Index out = std::min(cfg.base_channels() << (k - 1), Index(8) * cfg.base_channels());
      downs_.emplace_back(ch, out, rng);
      ch = out;
      side /= 2;
      ++k;
    }
    feature_dim_ = ch;
    head_ = LinearLayer<S>(ch, type_count, rng);
  }

  Index feature_dim() const { return feature_dim_; }
  Index type_count() const { return type_count_; }
  const ClassifierConfig& config() const { return cfg_; }

  // penultimate pooled features, the layer used for FID
  Tensor<S> features(const Tensor<S>& x) const {
    require(x.shape().ndim() == 4 && x.shape()[2] == cfg_.resolution, "GlyphClassifier: wrong input " + x.shape().str());
    Tensor<S> h = x;
    for (const auto& d : downs_) h = d.forward(h);
    return global_avg_pool(h);
  }

  Tensor<S> logits(const Tensor<S>& x) const { return head_.forward(features(x)); }

  Eigen::MatrixXd probabilities(const Tensor<S>& x) const {
    NoGradGuard ng;
    auto z = logits(x);
    Index N = z.shape()[0], K = z.shape()[1];
    Eigen::MatrixXd out(N, K);
    for (Index i = 0; i < N; ++i) {
      auto row = z.value().segment(i * K, K);
      double mx = row.maxCoeff();
      double denom = 0;
      for (Index j = 0; j < K; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
      for (Index j = 0; j < K; ++j) out(i, j) = std::exp(static_cast<double>(row[j]) - mx) / denom;
    }
    return out;
  }

  Eigen::MatrixXd features_matrix(const Tensor<S>& x) const {
    NoGradGuard ng;
    auto f = features(x);
    Index N = f.shape()[0], F = f.shape()[1];
    Eigen::MatrixXd out(N, F);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < F; ++j) out(i, j) = static_cast<double>(f.value()[i * F + j]);
    return out;
  }

  ParamList<S> params() {
    ParamList<S> out;
    for (size_t i = 0; i < downs_.size(); ++i)
      downs_[i].collect("down" + std::to_string(i + 1), out);
    head_.collect("head", out);
    return out;
  }

 private:
  ClassifierConfig cfg_;
  Index type_count_ = 0;
  Index feature_dim_ = 0;
  std::vector<DownBlock<S>> downs_;
  LinearLayer<S> head_;
};

struct ClassifierTrainResult {
  GlyphClassifier<float> classifier;
  double holdout_accuracy = 0;
  Index type_count = 0;
};

// Character-type classifier trained on the dataset glyphs with a random
// per-image holdout; errors out if any class has no samples.
inline ClassifierTrainResult train_eval_classifier(const DatasetIndex& index,
                                                   const ClassifierConfig& cfg) {
  std::vector<std::pair<std::string, Index>> samples;  // path, type
  std::vector<long> per_class(static_cast<size_t>(index.type_count()), 0);
  for (int w = 0; w < index.writer_count(); ++w)
    for (const auto& e : index.glyphs_of(w)) {
      samples.emplace_back(e.path, e.type);
      ++per_class[static_cast<size_t>(e.type)];
    }
  for (int t = 0; t < index.type_count(); ++t)
    require(per_class[static_cast<size_t>(t)] > 0,
            "train_eval_classifier: class U+" + codepoint_hex(index.characters()[static_cast<size_t>(t)]) +
                " has zero samples");

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(1), shuffle_rng = rng.fork(2);
  for (size_t i = samples.size(); i > 1; --i)
    std::swap(samples[i - 1], samples[shuffle_rng.below(static_cast<std::uint32_t>(i))]);
  size_t holdout = static_cast<size_t>(std::round(cfg.holdout_fraction * samples.size()));
  holdout = std::min(holdout, samples.size() - 1);
  std::vector<std::pair<std::string, Index>> eval_set(samples.end() - static_cast<long>(holdout), samples.end());
  samples.resize(samples.size() - holdout);

  ClassifierTrainResult result;
  result.type_count = index.type_count();
  result.classifier = GlyphClassifier<float>(cfg, index.type_count(), init_rng);
  Adam<float> opt(result.classifier.params(), cfg.lr, 0.9, 0.999);

  int res = static_cast<int>(cfg.resolution);
  auto load_batch = [&](const std::vector<std::pair<std::string, Index>>& set, size_t begin,
                        size_t count) {
    auto x = Tensor<float>::zeros(Shape{static_cast<Index>(count), 1, res, res});
    std::vector<Index> labels;
    for (size_t i = 0; i < count; ++i) {
      copy_glyph_channel(x, static_cast<Index>(i), 0, load_glyph_png(set[begin + i].first, res));
      labels.push_back(set[begin + i].second);
    }
    return std::make_pair(x, labels);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = samples.size(); i > 1; --i)
      std::swap(samples[i - 1], samples[shuffle_rng.below(static_cast<std::uint32_t>(i))]);
    for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(cfg.batch_size)) {
      size_t count = std::min(static_cast<size_t>(cfg.batch_size), samples.size() - at);
      auto [x, labels] = load_batch(samples, at, count);
      opt.zero_grad();
      auto loss = cross_entropy_logits(result.classifier.logits(x), labels);
      loss.backward();
      opt.step();
    }
  }

  const auto& probe = eval_set.empty() ? samples : eval_set;
  long correct = 0;
  for (size_t at = 0; at < probe.size(); at += 64) {
    size_t count = std::min<size_t>(64, probe.size() - at);
    auto [x, labels] = load_batch(probe, at, count);
    Eigen::MatrixXd p = result.classifier.probabilities(x);
    for (size_t i = 0; i < count; ++i) {
      Eigen::Index best;
      p.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      if (best == labels[i]) ++correct;
    }
  }
  result.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(probe.size());
  return result;
}

inline void save_classifier(const std::string& path, GlyphClassifier<float>& clf) {
  nlohmann::json config = clf.config().to_json();
  config["type_count"] = clf.type_count();
  save_checkpoint<float>(path, config, 0, {{"classifier", clf.params()}});
}

inline GlyphClassifier<float> load_classifier(const std::string& path) {
  Checkpoint ck(path);
  require(ck.has_group("classifier"), "not a classifier checkpoint: " + path);
  ClassifierConfig cfg = ClassifierConfig::from_json(ck.config());
  Index n = ck.config().at("type_count").get<Index>();
  Rng dummy(0);
  GlyphClassifier<float> clf(cfg, n, dummy);
  auto params = clf.params();
  ck.load_into("classifier", params);
  return clf;
}

// ---------------------------------------------------------------------------
// recognition accuracy

// fraction of images whose argmax class matches the labeled type
inline double recognition_accuracy(const GlyphClassifier<float>& clf, const Tensor<float>& images,
                                   const std::vector<Index>& types) {
  require(images.shape()[0] > 0, "recognition_accuracy: empty set");
  require(images.shape()[0] == static_cast<Index>(types.size()), "recognition_accuracy: label count mismatch");
  Eigen::MatrixXd p = clf.probabilities(images);
  long correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best;
    p.row(i).maxCoeff(&best);
    if (best == types[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(p.rows());
}

// ---------------------------------------------------------------------------
// full evaluation protocol: per test writer, draw c seeded references,
// generate every character the writer has, then score RA / IS / FID of
// generated against real

struct EvalOptions {
  int is_splits = 1;
  std::uint64_t seed = 0;
  const std::vector<GlyphImage>* fixed_references = nullptr;  // style override
};

struct EvalResult {
  double ra = 0, is = 0, fid = 0;
  long generated_count = 0;
};

inline EvalResult evaluate_generator(const Generator<float>& gen, const GlyphClassifier<float>& clf,
                                     const DatasetIndex& testset, const EvalOptions& opts = {}) {
  NoGradGuard ng;
  int res = static_cast<int>(gen.config().resolution);
  int c = static_cast<int>(gen.config().reference_count);
  require(clf.config().resolution == res, "evaluate_generator: classifier resolution mismatch");
  Rng rng(opts.seed);

  std::vector<Tensor<float>> generated;
  std::vector<Index> gen_types;
  std::vector<Tensor<float>> real;

  for (int w = 0; w < testset.writer_count(); ++w) {
    const auto& glyphs = testset.glyphs_of(w);
    auto refs = Tensor<float>::zeros(Shape{1, c, res, res});
    if (opts.fixed_references) {
      require(static_cast<int>(opts.fixed_references->size()) == c,
              "evaluate_generator: style override must supply exactly c references");
      for (int k = 0; k < c; ++k) copy_glyph_channel(refs, 0, k, (*opts.fixed_references)[static_cast<size_t>(k)]);
    } else {
      require(static_cast<int>(glyphs.size()) >= c,
              "evaluate_generator: writer " + testset.writer_ids()[static_cast<size_t>(w)] +
                  " has fewer than c glyphs");
      std::vector<int> pool(glyphs.size());
      for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
      for (int i = 0; i < c; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<std::uint32_t>(pool.size() - static_cast<size_t>(i))));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      }
      for (int k = 0; k < c; ++k)
        copy_glyph_channel(refs, 0, k, load_glyph_png(glyphs[static_cast<size_t>(pool[static_cast<size_t>(k)])].path, res));
    }
    auto beta = gen.encode_style(refs);
    for (const auto& e : glyphs) {
      auto tmpl = Tensor<float>::zeros(Shape{1, 1, res, res});
      copy_glyph_channel(tmpl, 0, 0, load_glyph_png(testset.prototype_path(e.type), res));
      generated.push_back(gen.decode(gen.encode_structure(tmpl), beta));
      gen_types.push_back(e.type);
      auto truth = Tensor<float>::zeros(Shape{1, 1, res, res});
      copy_glyph_channel(truth, 0, 0, load_glyph_png(e.path, res));
      real.push_back(truth);
    }
  }
  require(!generated.empty(), "evaluate_generator: empty test set");

  auto stack = [&](const std::vector<Tensor<float>>& xs) {
    auto out = Tensor<float>::zeros(Shape{static_cast<Index>(xs.size()), 1, res, res});
    for (size_t i = 0; i < xs.size(); ++i)
      out.value().segment(static_cast<Index>(i) * res * res, res * res) = xs[i].value();
    return out;
  };
  auto gen_batch = stack(generated);
  auto real_batch = stack(real);

  EvalResult r;
  r.generated_count = static_cast<long>(generated.size());
  r.ra = recognition_accuracy(clf, gen_batch, gen_types);
  r.is = inception_score(clf.probabilities(gen_batch), opts.is_splits);
  auto stats_gen = ActivationStats::from_features(clf.features_matrix(gen_batch));
  auto stats_real = ActivationStats::from_features(clf.features_matrix(real_batch));
  r.fid = frechet_distance(stats_gen, stats_real);
  return r;
}

}  // namespace metascript
