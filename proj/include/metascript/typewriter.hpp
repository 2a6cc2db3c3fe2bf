#pragma once

#include "metascript/glyph.hpp"
#include "metascript/fontrender.hpp"
#include "metascript/rng.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace metascript {

// ---------------------------------------------------------------------------
// content tokenization

enum class TokenKind { Character, Space, LineBreak, Punctuation };

struct Token {
  TokenKind kind;
  char32_t codepoint;
};

struct ContentDocument {
  std::vector<Token> tokens;

  // lossless: re-encoding the token codepoints reproduces the input text
  std::string rejoin() const;
};

std::u32string utf8_decode(const std::string& text);
std::string utf8_encode(const std::u32string& text);

const std::set<char32_t>& default_punctuation();

// CJK codepoints become character tokens, '\n' a line break, ' ' a space,
// the punctuation set punctuation; anything else falls back to a
// punctuation token with a warning.
ContentDocument tokenize(const std::string& text,
                         const std::set<char32_t>& punctuation = default_punctuation());

// ---------------------------------------------------------------------------
// glyph jitter

struct JitterParams {
  double scale_lo = 0.95, scale_hi = 1.05;
  double rotate_deg = 3.0;
  double dy_frac = 0.04;  // vertical offset, fraction of the cell size
};

// seeded affine jitter about the patch center: scale, rotation, vertical
// offset, background fill; draws exactly three uniforms per call
Eigen::ArrayXXf random_transform(const Eigen::ArrayXXf& patch, Rng& rng,
                                 const JitterParams& params = {});

// ---------------------------------------------------------------------------
// layout

struct LayoutSpec {
  int cell_size = 64;    // expected character size in pixels
  int line_width = 1024; // wrap threshold for the cursor
  double line_spacing = 1.15;
  int margin = 16;
  std::uint64_t seed = 0;
  JitterParams jitter;

  void validate() const {
    if (cell_size <= 0) throw std::runtime_error("LayoutSpec: cell_size must be positive");
    if (line_width < cell_size) throw std::runtime_error("LayoutSpec: line_width must be >= cell_size");
    if (margin < 0) throw std::runtime_error("LayoutSpec: margin must be >= 0");
  }
};

struct Page {
  Eigen::ArrayXXf image;  // 1 = paper, 0 = ink
  int line_count = 0;
  int character_cells = 0;
};

// per-character glyph provider; throwing marks the cell as failed and a
// placeholder box is plotted instead
class GlyphSource {
 public:
  virtual ~GlyphSource() = default;
  virtual GlyphImage glyph(char32_t cp) = 0;
};

// punctuation templates rendered from a standard font at half cell width;
// falls back to a small builtin mark when no font is available or the
// glyph is missing
class PunctuationSource {
 public:
  PunctuationSource() = default;
  explicit PunctuationSource(const FontFace* font) : font_(font) {}

  // patch of cell_size rows x cell_size/2 columns, ink = 1
  Eigen::ArrayXXf patch(char32_t cp, int cell_size) const;

 private:
  const FontFace* font_ = nullptr;
};

Page compose(const ContentDocument& doc, const LayoutSpec& spec, GlyphSource& glyphs,
             const PunctuationSource& punctuation);

inline Page compose(const std::string& text, const LayoutSpec& spec, GlyphSource& glyphs,
                    const PunctuationSource& punctuation) {
  return compose(tokenize(text), spec, glyphs, punctuation);
}

}  // namespace metascript
