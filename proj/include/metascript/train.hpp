#pragma once

#include "metascript/checkpoint.hpp"
#include "metascript/config.hpp"
#include "metascript/dataset.hpp"
#include "metascript/objectives.hpp"
#include "metascript/generator.hpp"
#include "metascript/optim.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

namespace metascript {

struct TrainConfig {
  std::string dataset_root;
  std::string runs_dir = "runs";
  std::string run_name = "run";

  // "desk" quarters the channel schedule and drops to 32x32 so the whole
  // suite runs in minutes on a CPU; "paper" is the full-scale setting
  std::string profile = "paper";

  Index resolution = 128;
  Index base_channels = 64;
  Index max_channels = 512;
  Index style_dim = 512;

  int reference_count = 4;
  int batch_size = 32;
  long iterations = 100000;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights;
  std::uint64_t seed = 0;
  long checkpoint_every = 1000;
  long log_every = 1;
  double holdout_fraction = 0.0;
  bool keep_history = false;  // retain per-iteration stats in memory

  void apply_profile(const std::string& name) {
    profile = name;
    if (name == "desk") {
      resolution = 32;
      base_channels = 16;
      max_channels = 128;
      style_dim = 128;
    } else if (name == "paper") {
      resolution = 128;
      base_channels = 64;
      max_channels = 512;
      style_dim = 512;
    } else {
      throw std::runtime_error("unknown profile '" + name + "' (expected paper or desk)");
    }
  }

  void validate() const {
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(iterations >= 1, "config: iterations must be >= 1");
    require(reference_count >= 1, "config: reference_count must be >= 1");
    require(lr_g > 0 && lr_d > 0, "config: learning rates must be > 0");
    require(holdout_fraction >= 0 && holdout_fraction < 1, "config: holdout_fraction in [0,1)");
    require(checkpoint_every >= 1 && log_every >= 1, "config: cadences must be >= 1");
    weights.validate();
  }

  GeneratorConfig generator_config() const {
    return {resolution, base_channels, max_channels, style_dim, reference_count};
  }

  DiscriminatorConfig discriminator_config(Index n, Index m) const {
    return {resolution, base_channels, max_channels, n, m};
  }

  static TrainConfig from_key_values(const KeyValues& kv);
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

inline TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  auto prof = kv.find("profile");
  if (prof != kv.end()) c.apply_profile(prof->second);
  for (const auto& [key, value] : kv) {
    auto d = [&] { return std::stod(value); };
    auto i = [&] { return std::stol(value); };
    if (key == "profile") continue;
    else if (key == "dataset_root") c.dataset_root = value;
    else if (key == "runs_dir") c.runs_dir = value;
    else if (key == "run_name") c.run_name = value;
    else if (key == "resolution") c.resolution = i();
    else if (key == "base_channels") c.base_channels = i();
    else if (key == "max_channels") c.max_channels = i();
    else if (key == "style_dim") c.style_dim = i();
    else if (key == "reference_count") c.reference_count = static_cast<int>(i());
    else if (key == "batch_size") c.batch_size = static_cast<int>(i());
    else if (key == "iterations") c.iterations = i();
    else if (key == "lr_g") c.lr_g = d();
    else if (key == "lr_d") c.lr_d = d();
    else if (key == "adam_beta1") c.adam_beta1 = d();
    else if (key == "adam_beta2") c.adam_beta2 = d();
    else if (key == "lambda_adv_g") c.weights.adv_g = d();
    else if (key == "lambda_cls_g") c.weights.cls_g = d();
    else if (key == "lambda_str_g") c.weights.str_g = d();
    else if (key == "lambda_sty_g") c.weights.sty_g = d();
    else if (key == "lambda_rec_g") c.weights.rec_g = d();
    else if (key == "lambda_adv_d") c.weights.adv_d = d();
    else if (key == "lambda_cls_d") c.weights.cls_d = d();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "checkpoint_every") c.checkpoint_every = i();
    else if (key == "log_every") c.log_every = i();
    else if (key == "holdout_fraction") c.holdout_fraction = d();
    else throw std::runtime_error("unknown config key '" + key + "'");
  }
  return c;
}

inline nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["dataset_root"] = dataset_root;
  j["runs_dir"] = runs_dir;
  j["run_name"] = run_name;
  j["profile"] = profile;
  j["resolution"] = resolution;
  j["base_channels"] = base_channels;
  j["max_channels"] = max_channels;
  j["style_dim"] = style_dim;
  j["reference_count"] = reference_count;
  j["batch_size"] = batch_size;
  j["iterations"] = iterations;
  j["lr_g"] = lr_g;
  j["lr_d"] = lr_d;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["lambda_adv_g"] = weights.adv_g;
  j["lambda_cls_g"] = weights.cls_g;
  j["lambda_str_g"] = weights.str_g;
  j["lambda_sty_g"] = weights.sty_g;
  j["lambda_rec_g"] = weights.rec_g;
  j["lambda_adv_d"] = weights.adv_d;
  j["lambda_cls_d"] = weights.cls_d;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["log_every"] = log_every;
  j["holdout_fraction"] = holdout_fraction;
  return j;
}

inline TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.dataset_root = j.value("dataset_root", std::string());
  c.runs_dir = j.value("runs_dir", std::string("runs"));
  c.run_name = j.value("run_name", std::string("run"));
  c.profile = j.value("profile", std::string("paper"));
  c.resolution = j.at("resolution").get<Index>();
  c.base_channels = j.at("base_channels").get<Index>();
  c.max_channels = j.at("max_channels").get<Index>();
  c.style_dim = j.at("style_dim").get<Index>();
  c.reference_count = j.at("reference_count").get<int>();
  c.batch_size = j.value("batch_size", 32);
  c.iterations = j.value("iterations", 100000L);
  c.lr_g = j.value("lr_g", 1e-4);
  c.lr_d = j.value("lr_d", 1e-4);
  c.adam_beta1 = j.value("adam_beta1", 0.5);
  c.adam_beta2 = j.value("adam_beta2", 0.999);
  c.weights.adv_g = j.value("lambda_adv_g", 1.0);
  c.weights.cls_g = j.value("lambda_cls_g", 1.0);
  c.weights.str_g = j.value("lambda_str_g", 0.5);
  c.weights.sty_g = j.value("lambda_sty_g", 0.1);
  c.weights.rec_g = j.value("lambda_rec_g", 20.0);
  c.weights.adv_d = j.value("lambda_adv_d", 1.0);
  c.weights.cls_d = j.value("lambda_cls_d", 1.0);
  c.seed = j.value("seed", 0ULL);
  c.checkpoint_every = j.value("checkpoint_every", 1000L);
  c.log_every = j.value("log_every", 1L);
  c.holdout_fraction = j.value("holdout_fraction", 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// batches

struct Batch {
  Tensor<float> refs, templates, truths;
  std::vector<Index> types, writers;
};

inline void copy_glyph_channel(Tensor<float>& t, Index n, Index c, const GlyphImage& g) {
  Index side = t.shape()[2];
  require(g.resolution() == side, "copy_glyph_channel: resolution mismatch");
  Index base = (n * t.shape()[1] + c) * side * side;
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x)
      t.value()[base + y * side + x] = g.pixels(static_cast<int>(y), static_cast<int>(x));
}

inline Batch make_batch(const DatasetIndex& index, int c, int batch, Rng& rng, int resolution) {
  Batch b;
  b.refs = Tensor<float>::zeros(Shape{batch, c, resolution, resolution});
  b.templates = Tensor<float>::zeros(Shape{batch, 1, resolution, resolution});
  b.truths = Tensor<float>::zeros(Shape{batch, 1, resolution, resolution});
  for (int n = 0; n < batch; ++n) {
    TrainingTuple t = sample_training_tuple(index, c, rng, resolution);
    for (int k = 0; k < c; ++k) copy_glyph_channel(b.refs, n, k, t.references[static_cast<size_t>(k)]);
    copy_glyph_channel(b.templates, n, 0, t.template_glyph);
    copy_glyph_channel(b.truths, n, 0, t.truth);
    b.types.push_back(t.type_label);
    b.writers.push_back(t.writer_label);
  }
  return b;
}

// keep only the selected writers (labels are re-numbered)
inline DatasetIndex filter_writers(const DatasetIndex& index, const std::vector<int>& keep) {
  DatasetIndex out;
  for (int t = 0; t < index.type_count(); ++t)
    out.add_character(index.characters()[static_cast<size_t>(t)], index.prototype_path(t));
  for (int w : keep) {
    int nw = out.writer_count();
    out.add_writer(index.writer_ids()[static_cast<size_t>(w)]);
    for (const auto& e : index.glyphs_of(w)) out.add_glyph(nw, e.type, e.path);
  }
  return out;
}

// ---------------------------------------------------------------------------
// engine

struct IterStats {
  long iter = 0;
  double d_adv = 0, d_cls = 0, d_total = 0;
  double g_adv = 0, g_cls = 0, g_str = 0, g_sty = 0, g_rec = 0, g_total = 0;
  double d_acc = 0;
};

struct TrainResult {
  std::string run_dir;
  std::string final_checkpoint;
  std::string metrics_path;
  long completed = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<IterStats> history;
  Index type_count = 0, writer_count = 0;
};

inline nlohmann::json stats_to_json(const IterStats& s) {
  return {{"iter", s.iter},     {"d_adv", s.d_adv}, {"d_cls", s.d_cls}, {"d_total", s.d_total},
          {"g_adv", s.g_adv},   {"g_cls", s.g_cls}, {"g_str", s.g_str}, {"g_sty", s.g_sty},
          {"g_rec", s.g_rec},   {"g_total", s.g_total}, {"d_acc", s.d_acc}};
}

// Alternating update: one discriminator step on real plus detached fake,
// then one generator step, per iteration. Non-finite losses abort the run
// and leave the last written checkpoint in place.
inline TrainResult train(const TrainConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  require(!config.dataset_root.empty(), "config: dataset_root is required");

  DatasetIndex full = load_dataset(config.dataset_root);
  Rng rng(config.seed);
  Rng init_g = rng.fork(1), init_d = rng.fork(2), data_rng = rng.fork(3), split_rng = rng.fork(4);

  DatasetIndex index = full;
  if (config.holdout_fraction > 0) {
    std::vector<int> order(static_cast<size_t>(full.writer_count()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[split_rng.below(static_cast<std::uint32_t>(i))]);
    int hold = static_cast<int>(std::round(config.holdout_fraction * full.writer_count()));
    hold = std::min(hold, full.writer_count() - 1);
    order.resize(order.size() - static_cast<size_t>(hold));
    std::sort(order.begin(), order.end());
    index = filter_writers(full, order);
  }

  Index n = index.type_count(), m = index.writer_count();
  Generator<float> gen(config.generator_config(), init_g);
  MultiScaleDiscriminator<float> disc(config.discriminator_config(n, m), init_d);
  Adam<float> opt_g(gen.params(), config.lr_g, config.adam_beta1, config.adam_beta2);
  Adam<float> opt_d(disc.params(), config.lr_d, config.adam_beta1, config.adam_beta2);

  TrainResult result;
  result.type_count = n;
  result.writer_count = m;
  fs::path run_dir = fs::path(config.runs_dir) / config.run_name;
  fs::create_directories(run_dir);
  result.run_dir = run_dir.string();
  result.metrics_path = (run_dir / "metrics.jsonl").string();
  std::ofstream metrics(result.metrics_path);

  nlohmann::json snapshot = config.to_json();
  snapshot["type_count"] = n;
  snapshot["writer_count"] = m;
  {
    std::ofstream cf(run_dir / "config.json");
    cf << snapshot.dump(2) << "\n";
  }

  auto write_checkpoint = [&](long iter) {
    std::string path = (run_dir / ("ckpt_" + std::to_string(iter) + ".msck")).string();
    save_checkpoint<float>(path, snapshot, iter,
                           {{"generator", gen.params()}, {"discriminator", disc.params()}});
    result.final_checkpoint = path;
  };

  for (long iter = 1; iter <= config.iterations; ++iter) {
    Batch batch = make_batch(index, config.reference_count, config.batch_size, data_rng,
                             static_cast<int>(config.resolution));
    IterStats s;
    s.iter = iter;

    // generator forward, shared by both phases
    auto pyramid_tmpl = gen.encode_structure(batch.templates);
    auto style_refs = gen.encode_style(batch.refs);
    auto fake = gen.decode(pyramid_tmpl, style_refs);

    // discriminator phase: real + detached fake
    opt_d.zero_grad();
    opt_g.zero_grad();
    auto verdict_real = disc.forward(batch.truths);
    auto verdict_fake_detached = disc.forward(fake.detach());
    auto d_loss = discriminator_loss(verdict_real, verdict_fake_detached, batch.types, batch.writers,
                                     config.weights);
    s.d_adv = d_loss.adv;
    s.d_cls = d_loss.cls;
    s.d_total = d_loss.weighted_total;
    s.d_acc = authenticity_accuracy(verdict_real, verdict_fake_detached);
    if (!std::isfinite(s.d_total)) {
      result.aborted = true;
      result.abort_reason = "non-finite discriminator loss at iteration " + std::to_string(iter);
      break;
    }
    if (d_loss.total.requires_grad()) d_loss.total.backward();
    opt_d.step();

    // generator phase against the updated discriminator
    opt_d.zero_grad();
    opt_g.zero_grad();
    auto verdict_fake = disc.forward(fake);
    auto pyramid_fake = gen.encode_structure(fake);
    auto style_fake = gen.encode_style_single(fake);
    auto g_loss = generator_loss(verdict_fake, pyramid_fake, pyramid_tmpl, style_fake, style_refs,
                                 fake, batch.truths, batch.types, batch.writers, config.weights);
    s.g_adv = g_loss.adv;
    s.g_cls = g_loss.cls;
    s.g_str = g_loss.str;
    s.g_sty = g_loss.sty;
    s.g_rec = g_loss.rec;
    s.g_total = g_loss.weighted_total;
    if (!std::isfinite(s.g_total)) {
      result.aborted = true;
      result.abort_reason = "non-finite generator loss at iteration " + std::to_string(iter);
      break;
    }
    if (g_loss.total.requires_grad()) g_loss.total.backward();
    opt_g.step();

    result.completed = iter;
    if (config.keep_history) result.history.push_back(s);
    if (iter % config.log_every == 0) metrics << stats_to_json(s).dump() << "\n";
    if (iter % config.checkpoint_every == 0) write_checkpoint(iter);
  }

  if (!result.aborted && result.completed % config.checkpoint_every != 0)
    write_checkpoint(result.completed);
  if (result.aborted)
    std::cerr << "training aborted: " << result.abort_reason
              << (result.final_checkpoint.empty() ? " (no checkpoint written)"
                                                  : " (last good checkpoint: " + result.final_checkpoint + ")")
              << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// checkpoint loading

struct LoadedGenerator {
  TrainConfig config;
  Generator<float> net;
  Index type_count = 0, writer_count = 0;
};

inline LoadedGenerator load_generator(const std::string& checkpoint_path) {
  Checkpoint ck(checkpoint_path);
  LoadedGenerator out;
  out.config = TrainConfig::from_json(ck.config());
  out.type_count = ck.config().value("type_count", Index(0));
  out.writer_count = ck.config().value("writer_count", Index(0));
  Rng dummy(0);
  out.net = Generator<float>(out.config.generator_config(), dummy);
  auto params = out.net.params();
  ck.load_into("generator", params);
  return out;
}

// ---------------------------------------------------------------------------
// experiment probes and the ablation runner

// mean pairwise L1 distance between generated glyphs of distinct types,
// the mode-collapse probe
inline double diversity_probe(const Generator<float>& gen, const DatasetIndex& index, int count,
                              Rng& rng) {
  NoGradGuard ng;
  int c = static_cast<int>(gen.config().reference_count);
  int res = static_cast<int>(gen.config().resolution);
  int writer = static_cast<int>(rng.below(static_cast<std::uint32_t>(index.writer_count())));
  const auto& glyphs = index.glyphs_of(writer);
  require(static_cast<int>(glyphs.size()) >= c, "diversity_probe: writer too small");

  auto refs = Tensor<float>::zeros(Shape{1, c, res, res});
  for (int k = 0; k < c; ++k)
    copy_glyph_channel(refs, 0, k, load_glyph_png(glyphs[static_cast<size_t>(k)].path, res));
  auto beta = gen.encode_style(refs);

  std::vector<Tensor<float>> images;
  std::vector<int> types;
  for (int i = 0; i < count; ++i) {
    int type = i % index.type_count();
    auto tmpl = Tensor<float>::zeros(Shape{1, 1, res, res});
    copy_glyph_channel(tmpl, 0, 0, load_glyph_png(index.prototype_path(type), res));
    images.push_back(gen.decode(gen.encode_structure(tmpl), beta));
    types.push_back(type);
  }
  double total = 0;
  long pairs = 0;
  for (size_t i = 0; i < images.size(); ++i)
    for (size_t j = i + 1; j < images.size(); ++j) {
      if (types[i] == types[j]) continue;
      total += static_cast<double>((images[i].value() - images[j].value()).abs().mean());
      ++pairs;
    }
  require(pairs > 0, "diversity_probe: need at least two distinct types");
  return total / static_cast<double>(pairs);
}

// mean absolute spatial gradient, low values mean blurry output
inline double sharpness_probe(const Tensor<float>& image) {
  Index side = image.shape()[2];
  const auto& v = image.value();
  double total = 0;
  long count = 0;
  for (Index n = 0; n < image.shape()[0]; ++n) {
    Index base = n * side * side;
    for (Index y = 0; y + 1 < side; ++y)
      for (Index x = 0; x + 1 < side; ++x) {
        Index at = base + y * side + x;
        total += std::abs(v[at + 1] - v[at]) + std::abs(v[at + side] - v[at]);
        count += 2;
      }
  }
  return total / static_cast<double>(count);
}

struct GenerationProbes {
  double diversity = 0;        // pairwise L1 across types
  double sharpness = 0;        // edge energy of generated glyphs
  double proto_affinity = 0;   // L1 distance to the template, low = near-prototype
};

inline GenerationProbes generation_probes(const Generator<float>& gen, const DatasetIndex& index,
                                          int count, Rng& rng) {
  GenerationProbes p;
  p.diversity = diversity_probe(gen, index, count, rng);
  NoGradGuard ng;
  int c = static_cast<int>(gen.config().reference_count);
  int res = static_cast<int>(gen.config().resolution);
  int writer = static_cast<int>(rng.below(static_cast<std::uint32_t>(index.writer_count())));
  const auto& glyphs = index.glyphs_of(writer);
  auto refs = Tensor<float>::zeros(Shape{1, c, res, res});
  for (int k = 0; k < c && k < static_cast<int>(glyphs.size()); ++k)
    copy_glyph_channel(refs, 0, k, load_glyph_png(glyphs[static_cast<size_t>(k)].path, res));
  auto beta = gen.encode_style(refs);
  double sharp = 0, affinity = 0;
  int made = 0;
  for (int t = 0; t < index.type_count(); ++t) {
    auto tmpl = Tensor<float>::zeros(Shape{1, 1, res, res});
    copy_glyph_channel(tmpl, 0, 0, load_glyph_png(index.prototype_path(t), res));
    auto img = gen.decode(gen.encode_structure(tmpl), beta);
    sharp += sharpness_probe(img);
    affinity += static_cast<double>((img.value() - tmpl.value()).abs().mean());
    ++made;
  }
  p.sharpness = sharp / made;
  p.proto_affinity = affinity / made;
  return p;
}

struct AblationDelta {
  std::string label;
  std::string zero_term;                // adv | cls | str | sty | rec, empty for none
  std::optional<int> reference_count;   // alternative axis: sweep c
};

struct AblationRow {
  std::string label;
  TrainResult result;
  GenerationProbes probes;
  double ra = std::numeric_limits<double>::quiet_NaN();
  double is = std::numeric_limits<double>::quiet_NaN();
  double fid = std::numeric_limits<double>::quiet_NaN();
};

// RA / IS / FID for a checkpoint; wired by the caller so the engine does
// not depend on the evaluation stack
using AblationMetricsFn = std::function<std::array<double, 3>(const std::string& checkpoint)>;

inline TrainConfig apply_delta(TrainConfig config, const AblationDelta& delta) {
  if (!delta.zero_term.empty()) {
    if (delta.zero_term == "adv") config.weights.adv_g = config.weights.adv_d = 0;
    else if (delta.zero_term == "cls") config.weights.cls_g = config.weights.cls_d = 0;
    else if (delta.zero_term == "str") config.weights.str_g = 0;
    else if (delta.zero_term == "sty") config.weights.sty_g = 0;
    else if (delta.zero_term == "rec") config.weights.rec_g = 0;
    else throw std::runtime_error("unknown ablation term '" + delta.zero_term + "'");
  }
  if (delta.reference_count) config.reference_count = *delta.reference_count;
  return config;
}

inline std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                             const std::vector<AblationDelta>& matrix,
                                             AblationMetricsFn metrics = nullptr,
                                             int probe_count = 16) {
  std::vector<AblationRow> rows;
  for (const auto& delta : matrix) {
    TrainConfig config = apply_delta(base, delta);
    config.run_name = base.run_name + "_" + (delta.label.empty() ? "delta" : delta.label);
    for (auto& ch : config.run_name)
      if (ch == ' ' || ch == '/' || ch == '\\') ch = '_';
    AblationRow row;
    row.label = delta.label;
    row.result = train(config);
    if (!row.result.aborted && !row.result.final_checkpoint.empty()) {
      auto loaded = load_generator(row.result.final_checkpoint);
      DatasetIndex index = load_dataset(config.dataset_root);
      Rng prng(config.seed + 99);
      row.probes = generation_probes(loaded.net, index, probe_count, prng);
      if (metrics) {
        auto m = metrics(row.result.final_checkpoint);
        row.ra = m[0];
        row.is = m[1];
        row.fid = m[2];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| run | RA | IS | FID | diversity | sharpness |\n";
  os << "|-----|----|----|-----|-----------|-----------|\n";
  for (const auto& r : rows) {
    os << "| " << r.label << " | ";
    auto cell = [&](double v) {
      if (std::isnan(v)) os << "- | ";
      else os << v << " | ";
    };
    cell(r.ra);
    cell(r.is);
    cell(r.fid);
    cell(r.probes.diversity);
    cell(r.probes.sharpness);
    os << "\n";
  }
  return os.str();
}

}  // namespace metascript
