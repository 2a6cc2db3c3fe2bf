#include "metascript/evalmetrics.hpp"
#include "metascript/glyphsource.hpp"
#include "metascript/gnt.hpp"
#include "metascript/png_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace ms = metascript;

namespace {

char32_t parse_char_arg(const std::string& arg) {
  if (arg.rfind("U+", 0) == 0 || arg.rfind("u+", 0) == 0)
    return static_cast<char32_t>(std::stoul(arg.substr(2), nullptr, 16));
  auto decoded = ms::utf8_decode(arg);
  if (decoded.size() != 1)
    throw std::runtime_error("--char expects a single character or U+XXXX, got '" + arg + "'");
  return decoded[0];
}

std::string read_text_arg(const std::string& arg) {
  if (arg == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream f(arg);
  if (!f) throw std::runtime_error("cannot open text file " + arg);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string runs_dir_default() {
  const char* env = std::getenv("METASCRIPT_RUNS_DIR");
  return env && *env ? env : "runs";
}

int cmd_import(const std::string& gnt_dir, const std::string& root, int resolution) {
  int n = ms::import_casia(gnt_dir, root, resolution);
  std::cout << "imported " << n << " glyphs into " << root << "\n";
  return 0;
}

int cmd_render_prototypes(const std::string& font_path, const std::string& chars,
                          const std::string& charset_file, const std::string& out_dir,
                          int resolution) {
  std::string text = chars;
  if (!charset_file.empty()) text += read_text_arg(charset_file);
  if (text.empty()) throw std::runtime_error("no characters given (use --chars or --charset)");
  ms::FontFace font(font_path);
  std::filesystem::create_directories(out_dir);
  int written = 0, skipped = 0;
  std::set<char32_t> seen;
  for (char32_t cp : ms::utf8_decode(text)) {
    if (cp == U'\n' || cp == U' ' || cp == U'\r' || !seen.insert(cp).second) continue;
    try {
      ms::GlyphImage g = ms::render_prototype(font, cp, resolution);
      // stored dark-on-bright like the rest of the dataset
      ms::write_png_gray(out_dir + "/" + ms::codepoint_hex(cp) + ".png", 1.0f - g.pixels);
      ++written;
    } catch (const std::exception& e) {
      std::cerr << "warning: " << e.what() << "\n";
      ++skipped;
    }
  }
  std::cout << "rendered " << written << " prototypes into " << out_dir;
  if (skipped) std::cout << " (" << skipped << " skipped)";
  std::cout << "\n";
  if (written == 0) throw std::runtime_error("no prototypes rendered");
  return 0;
}

struct TrainFlags {
  std::string config_path, ablation_path, classifier_path;
  std::string dataset_root, run_name, runs_dir, profile;
  long iterations = 0, batch_size = 0, references = 0, seed = 0;
  double lr_g = 0, lr_d = 0;
};

int cmd_train(CLI::App* cmd, const TrainFlags& flags) {
  ms::TrainConfig config;
  if (!flags.config_path.empty())
    config = ms::TrainConfig::from_key_values(ms::parse_config_file(flags.config_path));
  config.runs_dir = runs_dir_default();

  // explicit flags override config-file keys, which override defaults
  if (cmd->count("--profile")) config.apply_profile(flags.profile);
  if (cmd->count("--dataset-root")) config.dataset_root = flags.dataset_root;
  if (cmd->count("--run-name")) config.run_name = flags.run_name;
  if (cmd->count("--runs-dir")) config.runs_dir = flags.runs_dir;
  if (cmd->count("--iterations")) config.iterations = flags.iterations;
  if (cmd->count("--batch-size")) config.batch_size = static_cast<int>(flags.batch_size);
  if (cmd->count("--references")) config.reference_count = static_cast<int>(flags.references);
  if (cmd->count("--seed")) config.seed = static_cast<std::uint64_t>(flags.seed);
  if (cmd->count("--lr-g")) config.lr_g = flags.lr_g;
  if (cmd->count("--lr-d")) config.lr_d = flags.lr_d;

  const std::string& ablation_path = flags.ablation_path;
  const std::string& classifier_path = flags.classifier_path;
  if (!ablation_path.empty()) {
    std::ifstream f(ablation_path);
    if (!f) throw std::runtime_error("cannot open ablation matrix " + ablation_path);
    nlohmann::json matrix_json = nlohmann::json::parse(f);
    std::vector<ms::AblationDelta> matrix;
    for (const auto& d : matrix_json) {
      ms::AblationDelta delta;
      delta.label = d.value("label", std::string("delta"));
      delta.zero_term = d.value("zero", std::string());
      if (d.contains("c")) delta.reference_count = d.at("c").get<int>();
      matrix.push_back(delta);
    }
    ms::AblationMetricsFn metrics = nullptr;
    if (!classifier_path.empty()) {
      auto clf = std::make_shared<ms::GlyphClassifier<float>>(ms::load_classifier(classifier_path));
      std::string root = config.dataset_root;
      std::uint64_t seed = config.seed;
      metrics = [clf, root, seed](const std::string& ckpt) {
        auto gen = ms::load_generator(ckpt);
        ms::EvalOptions opts;
        opts.seed = seed;
        auto r = ms::evaluate_generator(gen.net, *clf, ms::load_dataset(root), opts);
        return std::array<double, 3>{r.ra, r.is, r.fid};
      };
    }
    auto rows = ms::run_ablation(config, matrix, metrics);
    std::cout << ms::ablation_table(rows);
    for (const auto& r : rows)
      if (r.result.aborted) return 1;
    return 0;
  }

  ms::TrainResult result = ms::train(config);
  if (result.aborted) {
    std::cerr << "error: " << result.abort_reason << "\n";
    return 1;
  }
  std::cout << "trained " << result.completed << " iterations, checkpoint " << result.final_checkpoint
            << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& classifier_path,
             const std::string& refs_dir, const std::string& testset, bool as_json, bool fit,
             const std::string& fit_root, int fit_epochs, const std::string& backbone, long seed,
             int is_splits) {
  auto gen = ms::load_generator(checkpoint);
  int res = static_cast<int>(gen.config.resolution);

  ms::GlyphClassifier<float> clf;
  if (fit) {
    ms::ClassifierConfig cc;
    cc.resolution = res;
    cc.backbone = backbone;
    cc.epochs = fit_epochs;
    cc.seed = static_cast<std::uint64_t>(seed);
    std::string root = fit_root.empty() ? testset : fit_root;
    auto trained = ms::train_eval_classifier(ms::load_dataset(root), cc);
    std::cerr << "classifier holdout accuracy " << trained.holdout_accuracy << "\n";
    ms::save_classifier(classifier_path, trained.classifier);
    clf = std::move(trained.classifier);
  } else {
    clf = ms::load_classifier(classifier_path);
  }

  ms::EvalOptions opts;
  opts.seed = static_cast<std::uint64_t>(seed);
  opts.is_splits = is_splits;
  std::vector<ms::GlyphImage> fixed;
  if (!refs_dir.empty()) {
    fixed = ms::load_reference_dir(refs_dir, static_cast<int>(gen.config.reference_count), res);
    opts.fixed_references = &fixed;
  }
  auto r = ms::evaluate_generator(gen.net, clf, ms::load_dataset(testset), opts);
  if (as_json) {
    nlohmann::json j{{"ra", r.ra}, {"is", r.is}, {"fid", r.fid}, {"count", r.generated_count}};
    std::cout << j.dump() << "\n";
  } else {
    std::printf("RA %.4f  IS %.4f  FID %.4f  (%ld generated)\n", r.ra, r.is, r.fid,
                r.generated_count);
  }
  return 0;
}

ms::PrototypeProvider make_prototype_provider(const std::string& proto_dir,
                                              const std::string& font_path) {
  if (!proto_dir.empty()) return ms::prototypes_from_dir(proto_dir);
  if (!font_path.empty())
    return ms::prototypes_from_font(std::make_shared<ms::FontFace>(font_path));
  throw std::runtime_error("need --prototypes <dir> or --font <ttf> to supply templates");
}

int cmd_generate(const std::string& checkpoint, const std::string& refs_dir,
                 const std::string& char_arg, const std::string& out_path,
                 const std::string& proto_dir, const std::string& font_path) {
  auto gen = ms::load_generator(checkpoint);
  int res = static_cast<int>(gen.config.resolution);
  auto refs = ms::load_reference_dir(refs_dir, static_cast<int>(gen.config.reference_count), res);
  ms::GeneratorGlyphSource source(std::move(gen.net), refs,
                                  make_prototype_provider(proto_dir, font_path));
  ms::GlyphImage g = source.glyph(parse_char_arg(char_arg));
  ms::write_png_gray(out_path, 1.0f - g.pixels);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_compose(const std::string& checkpoint, const std::string& refs_dir,
                const std::string& text_arg, int size, int width, long seed,
                const std::string& out_path, const std::string& proto_dir,
                const std::string& font_path, int margin) {
  auto gen = ms::load_generator(checkpoint);
  int res = static_cast<int>(gen.config.resolution);
  auto refs = ms::load_reference_dir(refs_dir, static_cast<int>(gen.config.reference_count), res);
  ms::GeneratorGlyphSource source(std::move(gen.net), refs,
                                  make_prototype_provider(proto_dir, font_path));

  std::shared_ptr<ms::FontFace> font;
  if (!font_path.empty()) font = std::make_shared<ms::FontFace>(font_path);
  ms::PunctuationSource punct(font.get());

  ms::LayoutSpec spec;
  spec.cell_size = size;
  spec.line_width = width;
  spec.seed = static_cast<std::uint64_t>(seed);
  spec.margin = margin;
  ms::Page page = ms::compose(read_text_arg(text_arg), spec, source, punct);
  ms::write_png_gray(out_path, page.image);
  std::cout << "wrote " << out_path << " (" << page.line_count << " lines, "
            << page.character_cells << " characters)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaScript: few-shot handwritten Chinese content generation"};
  app.require_subcommand(1);
  std::function<int()> action;

  // import-casia
  auto* imp = app.add_subcommand("import-casia", "Convert CASIA GNT files into the dataset layout");
  static std::string imp_gnt, imp_root;
  static int imp_res = ms::kCanonicalResolution;
  imp->add_option("gnt_dir", imp_gnt, "directory of .gnt files")->required();
  imp->add_option("root", imp_root, "dataset root to create")->required();
  imp->add_option("--resolution", imp_res, "canonical glyph resolution");
  imp->callback([&] { action = [] { return cmd_import(imp_gnt, imp_root, imp_res); }; });

  // render-prototypes
  auto* rp = app.add_subcommand("render-prototypes", "Render standard-font prototype glyphs");
  static std::string rp_font, rp_chars, rp_charset, rp_out;
  static int rp_res = ms::kCanonicalResolution;
  rp->add_option("--font", rp_font, "TTF font file")->required();
  rp->add_option("--chars", rp_chars, "characters to render (UTF-8)");
  rp->add_option("--charset", rp_charset, "file of characters to render");
  rp->add_option("--out", rp_out, "output directory (e.g. <root>/prototypes)")->required();
  rp->add_option("--resolution", rp_res, "canonical glyph resolution");
  rp->callback([&] {
    action = [] { return cmd_render_prototypes(rp_font, rp_chars, rp_charset, rp_out, rp_res); };
  });

  // train
  auto* tr = app.add_subcommand("train", "Train the generator against the discriminator");
  static TrainFlags tf;
  tr->add_option("--config", tf.config_path, "flat key=value config file");
  tr->add_option("--dataset-root", tf.dataset_root, "dataset root (overrides config)");
  tr->add_option("--run-name", tf.run_name, "run directory name");
  tr->add_option("--runs-dir", tf.runs_dir, "runs directory (also via METASCRIPT_RUNS_DIR)");
  tr->add_option("--profile", tf.profile, "paper or desk profile")
      ->check(CLI::IsMember({"paper", "desk"}));
  tr->add_option("--iterations", tf.iterations, "training iterations");
  tr->add_option("--batch-size", tf.batch_size, "batch size");
  tr->add_option("--references", tf.references, "style reference count c");
  tr->add_option("--seed", tf.seed, "random seed");
  tr->add_option("--lr-g", tf.lr_g, "generator learning rate");
  tr->add_option("--lr-d", tf.lr_d, "discriminator learning rate");
  tr->add_option("--ablation", tf.ablation_path, "JSON ablation matrix; runs one training per delta");
  tr->add_option("--classifier", tf.classifier_path,
                 "classifier checkpoint for ablation RA/IS/FID columns");
  tr->callback([&] { action = [tr] { return cmd_train(tr, tf); }; });

  // eval
  auto* ev = app.add_subcommand("eval", "Compute RA / IS / FID for a trained generator");
  static std::string ev_ckpt, ev_clf, ev_refs, ev_testset, ev_fit_root, ev_backbone = "cnn_small";
  static bool ev_json = false, ev_fit = false;
  static long ev_seed = 0;
  static int ev_splits = 1, ev_fit_epochs = 40;
  ev->add_option("--checkpoint", ev_ckpt, "generator checkpoint")->required();
  ev->add_option("--classifier", ev_clf, "classifier checkpoint (trained here with --fit)")->required();
  ev->add_option("--refs", ev_refs, "reference glyph directory overriding per-writer styles");
  ev->add_option("--testset", ev_testset, "test dataset root")->required();
  ev->add_flag("--json", ev_json, "machine-readable output");
  ev->add_flag("--fit", ev_fit, "train the classifier first and save it to --classifier");
  ev->add_option("--fit-root", ev_fit_root, "dataset root for classifier training (default: testset)");
  ev->add_option("--fit-epochs", ev_fit_epochs, "classifier training epochs");
  ev->add_option("--backbone", ev_backbone, "classifier backbone")
      ->check(CLI::IsMember({"cnn_small", "cnn_large"}));
  ev->add_option("--seed", ev_seed, "seed for reference selection");
  ev->add_option("--is-splits", ev_splits, "inception score split count");
  ev->callback([&] {
    action = [] {
      return cmd_eval(ev_ckpt, ev_clf, ev_refs, ev_testset, ev_json, ev_fit, ev_fit_root,
                      ev_fit_epochs, ev_backbone, ev_seed, ev_splits);
    };
  });

  // generate
  auto* gn = app.add_subcommand("generate", "Generate a single styled character");
  static std::string gn_ckpt, gn_refs, gn_char, gn_out, gn_protos, gn_font;
  gn->add_option("--checkpoint", gn_ckpt, "generator checkpoint")->required();
  gn->add_option("--refs", gn_refs, "reference glyph directory")->required();
  gn->add_option("--char", gn_char, "character (UTF-8 or U+XXXX)")->required();
  gn->add_option("--out", gn_out, "output PNG")->required();
  gn->add_option("--prototypes", gn_protos, "prototype directory for templates");
  gn->add_option("--font", gn_font, "TTF font for templates");
  gn->callback([&] {
    action = [] { return cmd_generate(gn_ckpt, gn_refs, gn_char, gn_out, gn_protos, gn_font); };
  });

  // compose
  auto* cp = app.add_subcommand("compose", "Typeset text into a handwritten-style page");
  static std::string cp_ckpt, cp_refs, cp_text, cp_out, cp_protos, cp_font;
  static int cp_size = 64, cp_width = 1024, cp_margin = 16;
  static long cp_seed = 7;
  cp->add_option("--checkpoint", cp_ckpt, "generator checkpoint")->required();
  cp->add_option("--refs", cp_refs, "reference glyph directory")->required();
  cp->add_option("--text", cp_text, "text file, or - for stdin")->required();
  cp->add_option("--size", cp_size, "character cell size in pixels");
  cp->add_option("--width", cp_width, "line width in pixels");
  cp->add_option("--seed", cp_seed, "jitter seed");
  cp->add_option("--out", cp_out, "output PNG")->required();
  cp->add_option("--prototypes", cp_protos, "prototype directory for templates");
  cp->add_option("--font", cp_font, "TTF font for templates and punctuation");
  cp->add_option("--margin", cp_margin, "page margin in pixels");
  cp->callback([&] {
    action = [] {
      return cmd_compose(cp_ckpt, cp_refs, cp_text, cp_size, cp_width, cp_seed, cp_out, cp_protos,
                         cp_font, cp_margin);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  }
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
