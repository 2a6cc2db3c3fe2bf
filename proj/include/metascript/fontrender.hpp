#pragma once

#include "metascript/glyph.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace metascript {

// Minimal TrueType reader: cmap formats 0/4/6/12, glyf outlines with
// quadratic curves and composite glyphs. Enough to rasterize prototypes
// from a standard font; no hinting, no CFF.
class FontFace {
 public:
  explicit FontFace(const std::string& path);
  explicit FontFace(std::vector<std::uint8_t> bytes);
  ~FontFace();
  FontFace(FontFace&&) noexcept;
  FontFace& operator=(FontFace&&) noexcept;

  bool has_glyph(char32_t cp) const;

  // anti-aliased ink coverage (ink=1), glyph scaled to fit the canvas
  // with the given margin fraction and centered by outline bounding box
  Eigen::ArrayXXf rasterize(char32_t cp, int side, double margin_frac) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Glyph rendered from a standard font: centered, margin fraction 0.08,
// ink=1 polarity. Deterministic given (font, codepoint, resolution).
GlyphImage render_prototype(const FontFace& font, char32_t cp, int resolution);

}  // namespace metascript
