#pragma once

#include "metascript/dataset.hpp"
#include "metascript/glyph.hpp"
#include "metascript/png_io.hpp"
#include "metascript/rng.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

// ---------------------------------------------------------------------------
// scratch directories

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("metascript_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// minimal TrueType builder: head/maxp/cmap(format 4)/loca(short)/glyf with
// rectangle contours; only the tables the project parser reads

struct FixtureGlyph {
  char32_t codepoint;
  // rectangles in font units (1000/em): x0, y0, x1, y1, y up
  std::vector<std::array<int, 4>> rects;
};

namespace detail {

inline void u16be(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x & 0xff));
}
inline void u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  u16be(v, static_cast<std::uint16_t>(x >> 16));
  u16be(v, static_cast<std::uint16_t>(x & 0xffff));
}
inline void i16be(std::vector<std::uint8_t>& v, int x) { u16be(v, static_cast<std::uint16_t>(static_cast<std::int16_t>(x))); }

inline std::vector<std::uint8_t> build_simple_glyph(const std::vector<std::array<int, 4>>& rects) {
  std::vector<std::uint8_t> g;
  int ncont = static_cast<int>(rects.size());
  int xmin = 32767, ymin = 32767, xmax = -32768, ymax = -32768;
  for (const auto& r : rects) {
    xmin = std::min(xmin, r[0]);
    ymin = std::min(ymin, r[1]);
    xmax = std::max(xmax, r[2]);
    ymax = std::max(ymax, r[3]);
  }
  i16be(g, ncont);
  i16be(g, xmin);
  i16be(g, ymin);
  i16be(g, xmax);
  i16be(g, ymax);
  for (size_t i = 0; i < rects.size(); ++i) u16be(g, static_cast<std::uint16_t>(4 * (i + 1) - 1));
  u16be(g, 0);  // no instructions
  for (size_t i = 0; i < rects.size() * 4; ++i) g.push_back(0x01);  // on-curve, long coords
  // x deltas then y deltas, contour order (x0,y0) (x1,y0) (x1,y1) (x0,y1)
  int px = 0;
  for (const auto& r : rects) {
    i16be(g, r[0] - px);
    i16be(g, r[2] - r[0]);
    i16be(g, 0);
    i16be(g, r[0] - r[2]);
    px = r[0];
  }
  int py = 0;
  for (const auto& r : rects) {
    i16be(g, r[1] - py);
    i16be(g, 0);
    i16be(g, r[3] - r[1]);
    i16be(g, 0);
    py = r[3];
  }
  if (g.size() % 2) g.push_back(0);  // short loca needs 2-byte alignment
  return g;
}

}  // namespace detail

// all tables the metascript parser needs, nothing more
inline std::vector<std::uint8_t> build_fixture_font(const std::vector<FixtureGlyph>& glyphs) {
  using namespace detail;
  std::vector<FixtureGlyph> sorted = glyphs;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.codepoint < b.codepoint; });
  std::uint16_t num_glyphs = static_cast<std::uint16_t>(sorted.size() + 1);  // + .notdef

  // glyf + loca
  std::vector<std::uint8_t> glyf;
  std::vector<std::uint16_t> loca_half{0};  // .notdef empty
  loca_half.push_back(0);
  for (const auto& g : sorted) {
    auto data = build_simple_glyph(g.rects);
    glyf.insert(glyf.end(), data.begin(), data.end());
    loca_half.push_back(static_cast<std::uint16_t>(glyf.size() / 2));
  }
  std::vector<std::uint8_t> loca;
  for (std::uint16_t h : loca_half) u16be(loca, h);

  // cmap format 4, one segment per mapped codepoint + terminator
  std::vector<std::uint8_t> cmap;
  u16be(cmap, 0);  // version
  u16be(cmap, 1);  // one encoding record
  u16be(cmap, 3);  // platform windows
  u16be(cmap, 1);  // unicode BMP
  u32be(cmap, 12);
  std::uint16_t segs = static_cast<std::uint16_t>(sorted.size() + 1);
  std::vector<std::uint8_t> sub;
  u16be(sub, 4);
  u16be(sub, static_cast<std::uint16_t>(16 + segs * 8));
  u16be(sub, 0);  // language
  u16be(sub, static_cast<std::uint16_t>(segs * 2));
  u16be(sub, 0);  // searchRange etc, unused by the parser
  u16be(sub, 0);
  u16be(sub, 0);
  for (const auto& g : sorted) u16be(sub, static_cast<std::uint16_t>(g.codepoint));
  u16be(sub, 0xffff);
  u16be(sub, 0);  // reserved pad
  for (const auto& g : sorted) u16be(sub, static_cast<std::uint16_t>(g.codepoint));
  u16be(sub, 0xffff);
  for (size_t i = 0; i < sorted.size(); ++i)
    u16be(sub, static_cast<std::uint16_t>((i + 1) - sorted[i].codepoint));
  u16be(sub, 1);
  for (size_t i = 0; i <= sorted.size(); ++i) u16be(sub, 0);  // idRangeOffset
  cmap.insert(cmap.end(), sub.begin(), sub.end());

  // head (54 bytes) and maxp (6 bytes used)
  std::vector<std::uint8_t> head(54, 0);
  head[18] = 1000 >> 8;  // unitsPerEm
  head[19] = 1000 & 0xff;
  // indexToLocFormat at offset 50 stays 0 (short)
  std::vector<std::uint8_t> maxp;
  u32be(maxp, 0x00010000);
  u16be(maxp, num_glyphs);

  struct Table {
    const char* tag;
    std::vector<std::uint8_t>* data;
  };
  std::vector<Table> tables{{"cmap", &cmap}, {"glyf", &glyf}, {"head", &head}, {"loca", &loca}, {"maxp", &maxp}};

  std::vector<std::uint8_t> font;
  u32be(font, 0x00010000);
  u16be(font, static_cast<std::uint16_t>(tables.size()));
  u16be(font, 0);
  u16be(font, 0);
  u16be(font, 0);
  std::uint32_t offset = 12 + 16 * static_cast<std::uint32_t>(tables.size());
  for (auto& t : tables) {
    for (int i = 0; i < 4; ++i) font.push_back(static_cast<std::uint8_t>(t.tag[i]));
    u32be(font, 0);  // checksum unchecked
    u32be(font, offset);
    u32be(font, static_cast<std::uint32_t>(t.data->size()));
    offset += static_cast<std::uint32_t>(t.data->size());
  }
  for (auto& t : tables) font.insert(font.end(), t.data->begin(), t.data->end());
  return font;
}

// the standard fixture set: a few CJK shapes and two ASCII punctuation marks
inline std::vector<std::uint8_t> standard_fixture_font() {
  std::vector<FixtureGlyph> glyphs;
  glyphs.push_back({U'一', {{50, 450, 950, 550}}});                                 // wide bar
  glyphs.push_back({U'二', {{100, 250, 900, 350}, {100, 650, 900, 750}}});          // two bars
  glyphs.push_back({U'三', {{100, 150, 900, 250}, {100, 450, 900, 550}, {100, 750, 900, 850}}});
  glyphs.push_back({U'十', {{450, 50, 550, 950}, {100, 450, 900, 550}}});           // cross
  glyphs.push_back({U'丨', {{450, 50, 550, 950}}});                                 // vertical bar
  glyphs.push_back({U'.', {{430, 0, 570, 140}}});
  glyphs.push_back({U',', {{430, 0, 570, 200}}});
  return build_fixture_font(glyphs);
}

// ---------------------------------------------------------------------------
// synthetic dataset: parametric stroke glyphs per character id, writers as
// deterministic style transforms, learnable at desk scale

inline Eigen::ArrayXXf synth_prototype(int char_id, int canvas = 64) {
  Eigen::ArrayXXf img = Eigen::ArrayXXf::Zero(canvas, canvas);
  metascript::Rng rng(0xC0FFEE + static_cast<std::uint64_t>(char_id) * 7919);
  int strokes = 2 + char_id % 3;
  auto bar = [&](bool horizontal) {
    int thick = canvas / 10 + static_cast<int>(rng.below(static_cast<std::uint32_t>(canvas / 12)));
    int pos = canvas / 8 + static_cast<int>(rng.below(static_cast<std::uint32_t>(canvas * 3 / 4 - thick)));
    int lo = canvas / 10 + static_cast<int>(rng.below(static_cast<std::uint32_t>(canvas / 8)));
    int hi = canvas - canvas / 10 - static_cast<int>(rng.below(static_cast<std::uint32_t>(canvas / 8)));
    if (horizontal)
      img.block(pos, lo, thick, hi - lo).setConstant(1.0f);
    else
      img.block(lo, pos, hi - lo, thick).setConstant(1.0f);
  };
  for (int s = 0; s < strokes; ++s) bar(rng.below(2) == 0);
  return img;
}

// shear + scale + shift + intensity, one recipe per writer
inline Eigen::ArrayXXf synth_writer_style(const Eigen::ArrayXXf& proto, int writer_id) {
  int n = static_cast<int>(proto.rows());
  double shear = writer_id % 2 == 0 ? -0.22 : 0.25;
  double scale = writer_id % 2 == 0 ? 0.92 : 1.06;
  double dy = writer_id % 2 == 0 ? 2.0 : -2.0;
  float intensity = writer_id % 2 == 0 ? 1.0f : 0.8f;
  Eigen::ArrayXXf out = Eigen::ArrayXXf::Zero(n, n);
  double cy = (n - 1) / 2.0, cx = (n - 1) / 2.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double ry = (y - cy - dy) / scale;
      double rx = (x - cx) / scale - shear * ry;
      int sy = static_cast<int>(std::lround(ry + cy));
      int sx = static_cast<int>(std::lround(rx + cx));
      if (sy >= 0 && sy < n && sx >= 0 && sx < n) out(y, x) = proto(sy, sx) * intensity;
    }
  return out;
}

// dataset root with the documented layout; PNGs stored dark-on-bright
inline void make_synthetic_root(const std::string& root, int chars, int writers,
                                int resolution = 32) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "prototypes");
  for (int k = 0; k < chars; ++k) {
    char32_t cp = static_cast<char32_t>(0x4e00 + k);
    auto proto = metascript::canonicalize_ink(synth_prototype(k), resolution);
    metascript::write_png_gray((fs::path(root) / "prototypes" / (metascript::codepoint_hex(cp) + ".png")).string(),
                               1.0f - proto.pixels);
  }
  for (int w = 0; w < writers; ++w) {
    fs::path wdir = fs::path(root) / "writers" / ("w" + std::to_string(w));
    fs::create_directories(wdir);
    for (int k = 0; k < chars; ++k) {
      char32_t cp = static_cast<char32_t>(0x4e00 + k);
      auto styled = metascript::canonicalize_ink(synth_writer_style(synth_prototype(k), w), resolution);
      metascript::write_png_gray((wdir / (metascript::codepoint_hex(cp) + ".png")).string(),
                                 1.0f - styled.pixels);
    }
  }
}

}  // namespace fixtures
