#include "metascript/typewriter.hpp"

#include <cmath>
#include <iostream>

namespace metascript {

std::u32string utf8_decode(const std::string& text) {
  std::u32string out;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char b = static_cast<unsigned char>(text[i]);
    char32_t cp;
    int extra;
    if (b < 0x80) {
      cp = b;
      extra = 0;
    } else if ((b & 0xe0) == 0xc0) {
      cp = b & 0x1f;
      extra = 1;
    } else if ((b & 0xf0) == 0xe0) {
      cp = b & 0x0f;
      extra = 2;
    } else if ((b & 0xf8) == 0xf0) {
      cp = b & 0x07;
      extra = 3;
    } else {
      throw std::runtime_error("invalid UTF-8 at byte " + std::to_string(i));
    }
    if (i + static_cast<size_t>(extra) >= text.size())
      throw std::runtime_error("truncated UTF-8 sequence at byte " + std::to_string(i));
    for (int k = 1; k <= extra; ++k) {
      unsigned char cb = static_cast<unsigned char>(text[i + static_cast<size_t>(k)]);
      if ((cb & 0xc0) != 0x80) throw std::runtime_error("invalid UTF-8 continuation at byte " + std::to_string(i + static_cast<size_t>(k)));
      cp = (cp << 6) | (cb & 0x3f);
    }
    out.push_back(cp);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

std::string utf8_encode(const std::u32string& text) {
  std::string out;
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
      out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
  }
  return out;
}

std::string ContentDocument::rejoin() const {
  std::u32string text;
  for (const auto& t : tokens) text.push_back(t.codepoint);
  return utf8_encode(text);
}

const std::set<char32_t>& default_punctuation() {
  static const std::set<char32_t> set = [] {
    std::set<char32_t> s;
    for (char32_t cp : U"。，、！？；：…—·（）"
                       U"《》〈〉“”‘’【】")
      if (cp) s.insert(cp);
    for (char ch : std::string(".,!?;:()'\"-"))
      s.insert(static_cast<char32_t>(ch));
    return s;
  }();
  return set;
}

namespace {

bool is_cjk(char32_t cp) {
  return (cp >= 0x4e00 && cp <= 0x9fff) || (cp >= 0x3400 && cp <= 0x4dbf) ||
         (cp >= 0xf900 && cp <= 0xfaff) || (cp >= 0x20000 && cp <= 0x2a6df);
}

}  // namespace

ContentDocument tokenize(const std::string& text, const std::set<char32_t>& punctuation) {
  ContentDocument doc;
  std::set<char32_t> warned;
  for (char32_t cp : utf8_decode(text)) {
    if (cp == U'\n') {
      doc.tokens.push_back({TokenKind::LineBreak, cp});
    } else if (cp == U' ') {
      doc.tokens.push_back({TokenKind::Space, cp});
    } else if (punctuation.count(cp)) {
      doc.tokens.push_back({TokenKind::Punctuation, cp});
    } else if (is_cjk(cp)) {
      doc.tokens.push_back({TokenKind::Character, cp});
    } else {
      if (warned.insert(cp).second)
        std::cerr << "warning: treating unknown codepoint U+" << std::hex << static_cast<unsigned>(cp)
                  << std::dec << " as punctuation\n";
      doc.tokens.push_back({TokenKind::Punctuation, cp});
    }
  }
  return doc;
}

Eigen::ArrayXXf random_transform(const Eigen::ArrayXXf& patch, Rng& rng, const JitterParams& p) {
  double s = rng.uniform(p.scale_lo, p.scale_hi);
  double theta = rng.uniform(-p.rotate_deg, p.rotate_deg) * 3.14159265358979323846 / 180.0;
  double dy = rng.uniform(-p.dy_frac, p.dy_frac) * static_cast<double>(patch.rows());
  if (patch.size() == 0) return patch;
  if (s == 1.0 && theta == 0.0 && dy == 0.0) return patch;

  int h = static_cast<int>(patch.rows()), w = static_cast<int>(patch.cols());
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  double cos_t = std::cos(theta), sin_t = std::sin(theta);
  Eigen::ArrayXXf out(h, w);
  // inverse map: rotate by -theta, scale by 1/s, undo the offset
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double ry = (y - cy - dy) / s, rx = (x - cx) / s;
      double sx = cos_t * rx + sin_t * ry + cx;
      double sy = -sin_t * rx + cos_t * ry + cy;
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      double tx = sx - x0, ty = sy - y0;
      auto at = [&](int yy, int xx) -> double {
        return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : patch(yy, xx);
      };
      out(y, x) = static_cast<float>((1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                                     ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)));
    }
  }
  return out;
}

Eigen::ArrayXXf PunctuationSource::patch(char32_t cp, int cell_size) const {
  int w = std::max(1, cell_size / 2);
  Eigen::ArrayXXf out = Eigen::ArrayXXf::Zero(cell_size, w);
  if (font_ && font_->has_glyph(cp)) {
    int box = std::max(4, w);
    Eigen::ArrayXXf ink = font_->rasterize(cp, box, 0.15);
    // anchor near the baseline region of the cell
    int top = std::max(0, cell_size - box);
    int cols = std::min(box, w);
    out.block(top, (w - cols) / 2, box - std::max(0, box - cell_size), cols) =
        ink.block(0, 0, box - std::max(0, box - cell_size), cols);
    return out;
  }
  // builtin fallback mark: a small square sitting on the baseline
  int side = std::max(2, cell_size / 8);
  int top = cell_size - side - cell_size / 8;
  int left = (w - side) / 2;
  out.block(top, left, side, side).setConstant(1.0f);
  return out;
}

namespace {

void plot(Eigen::ArrayXXf& page, int top, int left, const Eigen::ArrayXXf& ink) {
  for (int y = 0; y < ink.rows(); ++y)
    for (int x = 0; x < ink.cols(); ++x) {
      int py = top + y, px = left + x;
      if (py < 0 || py >= page.rows() || px < 0 || px >= page.cols()) continue;
      page(py, px) *= 1.0f - std::min(1.0f, std::max(0.0f, ink(y, x)));
    }
}

Eigen::ArrayXXf placeholder_box(int cell) {
  Eigen::ArrayXXf box = Eigen::ArrayXXf::Zero(cell, cell);
  int t = std::max(1, cell / 16);
  box.topRows(t).setConstant(1.0f);
  box.bottomRows(t).setConstant(1.0f);
  box.leftCols(t).setConstant(1.0f);
  box.rightCols(t).setConstant(1.0f);
  return box;
}

}  // namespace

Page compose(const ContentDocument& doc, const LayoutSpec& spec, GlyphSource& glyphs,
             const PunctuationSource& punctuation) {
  spec.validate();
  Rng rng(spec.seed);
  const int cell = spec.cell_size;
  const int advance = static_cast<int>(std::lround(spec.line_spacing * cell));

  int max_line = 0;
  int line = 0;
  int cursor = 0;  // x offset inside the text column
  struct Placed {
    int line, x;
    Eigen::ArrayXXf ink;
  };
  std::vector<Placed> placed;
  int cells = 0;

  for (const auto& token : doc.tokens) {
    if (token.kind == TokenKind::LineBreak) {
      ++line;
      max_line = std::max(max_line, line);
      cursor = 0;
      continue;
    }
    Eigen::ArrayXXf ink;
    int width;
    if (token.kind == TokenKind::Space) {
      width = std::max(1, cell / 2);
      ink = Eigen::ArrayXXf::Zero(cell, width);
    } else if (token.kind == TokenKind::Character) {
      try {
        GlyphImage g = glyphs.glyph(token.codepoint);
        ink = resize_bilinear(g.pixels, cell, cell);
      } catch (const std::exception& e) {
        std::cerr << "warning: glyph generation failed for U+" << std::hex
                  << static_cast<unsigned>(token.codepoint) << std::dec << ": " << e.what() << "\n";
        ink = placeholder_box(cell);
      }
      width = cell;
      ++cells;
    } else {
      ink = punctuation.patch(token.codepoint, cell);
      width = static_cast<int>(ink.cols());
    }
    ink = random_transform(ink, rng, spec.jitter);
    placed.push_back({line, cursor, std::move(ink)});
    cursor += width;
    if (cursor >= spec.line_width) {
      ++line;
      max_line = std::max(max_line, line);
      cursor = 0;
    }
  }

  Page page;
  page.character_cells = cells;
  page.line_count = max_line + 1;
  int height = 2 * spec.margin + (page.line_count - 1) * advance + cell;
  int width = 2 * spec.margin + spec.line_width + cell;
  page.image = Eigen::ArrayXXf::Constant(height, width, 1.0f);
  for (const auto& p : placed)
    plot(page.image, spec.margin + p.line * advance, spec.margin + p.x, p.ink);
  return page;
}

}  // namespace metascript
