#pragma once

#include "metascript/train.hpp"
#include "metascript/typewriter.hpp"

#include <map>

namespace metascript {

// template lookup for the composer: either a prototypes/ directory from a
// dataset root or on-the-fly rendering from a standard font
using PrototypeProvider = std::function<GlyphImage(char32_t cp, int resolution)>;

inline PrototypeProvider prototypes_from_dir(const std::string& dir) {
  return [dir](char32_t cp, int resolution) {
    std::string path = dir + "/" + codepoint_hex(cp) + ".png";
    return load_glyph_png(path, resolution);
  };
}

inline PrototypeProvider prototypes_from_font(std::shared_ptr<FontFace> font) {
  return [font](char32_t cp, int resolution) { return render_prototype(*font, cp, resolution); };
}

// Character source backed by a trained generator. The style vector is
// computed once per instance; per-character outputs are cached so a page
// repeats glyph renditions only through the jitter stage.
class GeneratorGlyphSource : public GlyphSource {
 public:
  GeneratorGlyphSource(Generator<float> net, const std::vector<GlyphImage>& references,
                       PrototypeProvider prototypes)
      : net_(std::move(net)), prototypes_(std::move(prototypes)) {
    NoGradGuard ng;
    int c = static_cast<int>(net_.config().reference_count);
    int res = static_cast<int>(net_.config().resolution);
    require(static_cast<int>(references.size()) == c,
            "GeneratorGlyphSource: expected " + std::to_string(c) + " references, got " +
                std::to_string(references.size()));
    auto refs = Tensor<float>::zeros(Shape{1, c, res, res});
    for (int k = 0; k < c; ++k) copy_glyph_channel(refs, 0, k, references[static_cast<size_t>(k)]);
    style_ = net_.encode_style(refs);
  }

  GlyphImage glyph(char32_t cp) override {
    auto it = cache_.find(cp);
    if (it != cache_.end()) return it->second;
    NoGradGuard ng;
    int res = static_cast<int>(net_.config().resolution);
    GlyphImage proto = prototypes_(cp, res);
    auto tmpl = Tensor<float>::zeros(Shape{1, 1, res, res});
    copy_glyph_channel(tmpl, 0, 0, proto);
    auto img = net_.decode(net_.encode_structure(tmpl), style_);
    GlyphImage out;
    out.pixels = Eigen::ArrayXXf(res, res);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) out.pixels(y, x) = img.value()[y * res + x];
    cache_.emplace(cp, out);
    return out;
  }

 private:
  Generator<float> net_;
  PrototypeProvider prototypes_;
  Tensor<float> style_;
  std::map<char32_t, GlyphImage> cache_;
};

// c references read from a directory of glyph PNGs, sorted by filename
inline std::vector<GlyphImage> load_reference_dir(const std::string& dir, int c, int resolution) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(static_cast<int>(files.size()) >= c,
          "reference directory " + dir + " holds " + std::to_string(files.size()) +
              " glyphs, need " + std::to_string(c));
  std::vector<GlyphImage> out;
  for (int k = 0; k < c; ++k) out.push_back(load_glyph_png(files[static_cast<size_t>(k)].string(), resolution));
  return out;
}

}  // namespace metascript
