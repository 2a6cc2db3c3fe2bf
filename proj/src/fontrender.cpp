#include "metascript/fontrender.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace metascript {

namespace {

struct Reader {
  const std::uint8_t* p;
  size_t len;

  std::uint8_t u8(size_t at) const {
    if (at + 1 > len) throw std::runtime_error("truncated font table");
    return p[at];
  }
  std::uint16_t u16(size_t at) const {
    if (at + 2 > len) throw std::runtime_error("truncated font table");
    return static_cast<std::uint16_t>((p[at] << 8) | p[at + 1]);
  }
  std::int16_t i16(size_t at) const { return static_cast<std::int16_t>(u16(at)); }
  std::uint32_t u32(size_t at) const {
    if (at + 4 > len) throw std::runtime_error("truncated font table");
    return (static_cast<std::uint32_t>(p[at]) << 24) | (static_cast<std::uint32_t>(p[at + 1]) << 16) |
           (static_cast<std::uint32_t>(p[at + 2]) << 8) | p[at + 3];
  }
};

std::string hex_cp(char32_t cp) {
  char b[16];
  std::snprintf(b, sizeof(b), "%04X", static_cast<unsigned>(cp));
  return b;
}

struct Pt {
  double x, y;
};

using Contour = std::vector<Pt>;  // flattened closed polyline

struct Affine {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;
  Pt apply(double x, double y) const { return {a * x + c * y + e, b * x + d * y + f}; }
  Affine then(const Affine& o) const {
    // apply *this first, then o
    return {o.a * a + o.c * b, o.b * a + o.d * b, o.a * c + o.c * d,
            o.b * c + o.d * d, o.a * e + o.c * f + o.e, o.b * e + o.d * f + o.f};
  }
};

void flatten_quad(Contour& out, Pt p0, Pt c, Pt p1) {
  double dev = std::abs(p0.x - 2 * c.x + p1.x) + std::abs(p0.y - 2 * c.y + p1.y);
  int k = std::clamp(static_cast<int>(std::ceil(std::sqrt(dev * 0.25))), 2, 24);
  for (int i = 1; i <= k; ++i) {
    double t = static_cast<double>(i) / k, u = 1 - t;
    out.push_back({u * u * p0.x + 2 * u * t * c.x + t * t * p1.x,
                   u * u * p0.y + 2 * u * t * c.y + t * t * p1.y});
  }
}

}  // namespace

struct FontFace::Impl {
  std::vector<std::uint8_t> data;
  Reader whole{nullptr, 0};
  size_t cmap = 0, cmap_len = 0;
  size_t loca = 0, loca_len = 0;
  size_t glyf = 0, glyf_len = 0;
  std::uint16_t units_per_em = 1000;
  std::int16_t loc_format = 0;
  std::uint16_t num_glyphs = 0;
  size_t cmap_sub = 0;  // offset of the selected cmap subtable
  std::uint16_t cmap_format = 0;

  void parse() {
    whole = {data.data(), data.size()};
    std::uint32_t tag = whole.u32(0);
    size_t base = 0;
    if (tag == 0x74746366) {  // 'ttcf': take the first face
      base = whole.u32(12);
      tag = whole.u32(base);
    }
    if (tag != 0x00010000 && tag != 0x74727565)
      throw std::runtime_error("not a TrueType font (CFF/OpenType outlines unsupported)");
    std::uint16_t num_tables = whole.u16(base + 4);
    size_t head = 0, maxp = 0;
    for (std::uint16_t i = 0; i < num_tables; ++i) {
      size_t rec = base + 12 + i * 16;
      std::uint32_t t = whole.u32(rec);
      std::uint32_t off = whole.u32(rec + 8), len = whole.u32(rec + 12);
      if (off + len > data.size()) throw std::runtime_error("font table out of bounds");
      switch (t) {
        case 0x636d6170: cmap = off; cmap_len = len; break;  // cmap
        case 0x68656164: head = off; break;                  // head
        case 0x6c6f6361: loca = off; loca_len = len; break;  // loca
        case 0x676c7966: glyf = off; glyf_len = len; break;  // glyf
        case 0x6d617870: maxp = off; break;                  // maxp
        default: break;
      }
    }
    if (!cmap || !head || !loca || !glyf || !maxp)
      throw std::runtime_error("font lacks required tables (cmap/head/loca/glyf/maxp)");
    units_per_em = whole.u16(head + 18);
    loc_format = whole.i16(head + 50);
    num_glyphs = whole.u16(maxp + 4);
    pick_cmap();
  }

  void pick_cmap() {
    Reader r{data.data() + cmap, cmap_len};
    std::uint16_t n = r.u16(2);
    size_t best = 0;
    int best_score = -1;
    for (std::uint16_t i = 0; i < n; ++i) {
      std::uint16_t plat = r.u16(4 + i * 8);
      std::uint16_t enc = r.u16(6 + i * 8);
      std::uint32_t off = r.u32(8 + i * 8);
      int score = -1;
      if (plat == 3 && enc == 10) score = 4;       // full unicode
      else if (plat == 0 && enc >= 4) score = 4;
      else if (plat == 3 && enc == 1) score = 3;   // BMP
      else if (plat == 0) score = 2;
      else if (plat == 1 && enc == 0) score = 1;
      if (score > best_score) {
        best_score = score;
        best = off;
      }
    }
    if (best_score < 0) throw std::runtime_error("font has no usable character map");
    cmap_sub = cmap + best;
    cmap_format = whole.u16(cmap_sub);
    if (cmap_format != 0 && cmap_format != 4 && cmap_format != 6 && cmap_format != 12)
      throw std::runtime_error("unsupported cmap format " + std::to_string(cmap_format));
  }

  std::uint32_t glyph_index(char32_t cp) const {
    Reader r{data.data() + cmap_sub, data.size() - cmap_sub};
    switch (cmap_format) {
      case 0: {
        if (cp > 255) return 0;
        return r.u8(6 + cp);
      }
      case 4: {
        if (cp > 0xffff) return 0;
        std::uint16_t seg2 = r.u16(6);
        std::uint16_t segs = seg2 / 2;
        size_t ends = 14, starts = ends + seg2 + 2, deltas = starts + seg2, ranges = deltas + seg2;
        for (std::uint16_t s = 0; s < segs; ++s) {
          if (cp > r.u16(ends + s * 2)) continue;
          std::uint16_t start = r.u16(starts + s * 2);
          if (cp < start) return 0;
          std::uint16_t delta = r.u16(deltas + s * 2);
          std::uint16_t ro = r.u16(ranges + s * 2);
          if (ro == 0) return (cp + delta) & 0xffff;
          size_t at = ranges + s * 2 + ro + (cp - start) * 2;
          std::uint16_t gid = r.u16(at);
          return gid == 0 ? 0 : (gid + delta) & 0xffff;
        }
        return 0;
      }
      case 6: {
        std::uint16_t first = r.u16(6), count = r.u16(8);
        if (cp < first || cp >= static_cast<char32_t>(first + count)) return 0;
        return r.u16(10 + (cp - first) * 2);
      }
      case 12: {
        std::uint32_t groups = r.u32(12);
        for (std::uint32_t g = 0; g < groups; ++g) {
          size_t at = 16 + g * 12;
          std::uint32_t s = r.u32(at), e = r.u32(at + 4), gi = r.u32(at + 8);
          if (cp >= s && cp <= e) return gi + (cp - s);
        }
        return 0;
      }
      default: return 0;
    }
  }

  // byte range of one glyph in glyf, empty if the glyph has no outline
  bool glyph_range(std::uint32_t gid, size_t& off, size_t& len) const {
    if (gid >= num_glyphs) return false;
    Reader r{data.data() + loca, loca_len};
    size_t a, b;
    if (loc_format == 0) {
      a = static_cast<size_t>(r.u16(gid * 2)) * 2;
      b = static_cast<size_t>(r.u16(gid * 2 + 2)) * 2;
    } else {
      a = r.u32(gid * 4);
      b = r.u32(gid * 4 + 4);
    }
    if (b <= a) return false;
    off = glyf + a;
    len = b - a;
    return true;
  }

  void outline(std::uint32_t gid, const Affine& xf, std::vector<Contour>& out, int depth) const {
    if (depth > 5) throw std::runtime_error("composite glyph nesting too deep");
    size_t off, len;
    if (!glyph_range(gid, off, len)) return;
    Reader r{data.data() + off, len};
    std::int16_t ncont = r.i16(0);
    if (ncont >= 0) {
      simple_outline(r, ncont, xf, out);
      return;
    }
    // composite
    size_t at = 10;
    while (true) {
      std::uint16_t flags = r.u16(at);
      std::uint16_t comp_gid = r.u16(at + 2);
      at += 4;
      double dx = 0, dy = 0;
      if (flags & 0x0001) {  // words
        if (flags & 0x0002) {
          dx = r.i16(at);
          dy = r.i16(at + 2);
        }
        at += 4;
      } else {
        if (flags & 0x0002) {
          dx = static_cast<std::int8_t>(r.u8(at));
          dy = static_cast<std::int8_t>(r.u8(at + 1));
        }
        at += 2;
      }
      Affine comp;
      if (flags & 0x0008) {
        double s = r.i16(at) / 16384.0;
        comp.a = comp.d = s;
        at += 2;
      } else if (flags & 0x0040) {
        comp.a = r.i16(at) / 16384.0;
        comp.d = r.i16(at + 2) / 16384.0;
        at += 4;
      } else if (flags & 0x0080) {
        comp.a = r.i16(at) / 16384.0;
        comp.b = r.i16(at + 2) / 16384.0;
        comp.c = r.i16(at + 4) / 16384.0;
        comp.d = r.i16(at + 6) / 16384.0;
        at += 8;
      }
      comp.e = dx;
      comp.f = dy;
      outline(comp_gid, comp.then(xf), out, depth + 1);
      if (!(flags & 0x0020)) break;
    }
  }

  void simple_outline(const Reader& r, std::int16_t ncont, const Affine& xf,
                      std::vector<Contour>& out) const {
    std::vector<std::uint16_t> ends(static_cast<size_t>(ncont));
    size_t at = 10;
    for (int i = 0; i < ncont; ++i, at += 2) ends[static_cast<size_t>(i)] = r.u16(at);
    std::uint16_t npts = ncont ? ends.back() + 1 : 0;
    std::uint16_t ins = r.u16(at);
    at += 2 + ins;

    std::vector<std::uint8_t> flags;
    flags.reserve(npts);
    while (flags.size() < npts) {
      std::uint8_t f = r.u8(at++);
      flags.push_back(f);
      if (f & 0x08) {
        std::uint8_t rep = r.u8(at++);
        for (int k = 0; k < rep; ++k) flags.push_back(f);
      }
    }
    std::vector<double> xs(npts), ys(npts);
    double v = 0;
    for (std::uint16_t i = 0; i < npts; ++i) {
      std::uint8_t f = flags[i];
      if (f & 0x02) {
        std::uint8_t d = r.u8(at++);
        v += (f & 0x10) ? d : -static_cast<double>(d);
      } else if (!(f & 0x10)) {
        v += r.i16(at);
        at += 2;
      }
      xs[i] = v;
    }
    v = 0;
    for (std::uint16_t i = 0; i < npts; ++i) {
      std::uint8_t f = flags[i];
      if (f & 0x04) {
        std::uint8_t d = r.u8(at++);
        v += (f & 0x20) ? d : -static_cast<double>(d);
      } else if (!(f & 0x20)) {
        v += r.i16(at);
        at += 2;
      }
      ys[i] = v;
    }

    std::uint16_t start = 0;
    for (int ci = 0; ci < ncont; ++ci) {
      std::uint16_t end = ends[static_cast<size_t>(ci)];
      std::uint16_t count = end - start + 1;
      if (count < 2) {
        start = end + 1;
        continue;
      }
      auto on = [&](std::uint16_t i) { return (flags[start + i] & 0x01) != 0; };
      auto pt = [&](std::uint16_t i) { return xf.apply(xs[start + i], ys[start + i]); };

      // find an on-curve starting point; if none, synthesize a midpoint
      int first_on = -1;
      for (std::uint16_t i = 0; i < count; ++i)
        if (on(i)) {
          first_on = i;
          break;
        }
      Contour c;
      Pt cur{};
      if (first_on < 0) {
        Pt a = pt(0), b = pt(1);
        cur = {(a.x + b.x) / 2, (a.y + b.y) / 2};
      } else {
        cur = pt(static_cast<std::uint16_t>(first_on));
      }
      c.push_back(cur);
      std::uint16_t base = first_on < 0 ? 0 : static_cast<std::uint16_t>(first_on);
      Pt pending{};  // off-curve control waiting for its end point
      bool have_pending = false;
      for (std::uint16_t k = 1; k <= count; ++k) {
        std::uint16_t i = static_cast<std::uint16_t>((base + k) % count);
        Pt p = pt(i);
        if (on(i)) {
          if (have_pending) {
            flatten_quad(c, c.back(), pending, p);
            have_pending = false;
          } else {
            c.push_back(p);
          }
        } else {
          if (have_pending) {
            Pt mid{(pending.x + p.x) / 2, (pending.y + p.y) / 2};
            flatten_quad(c, c.back(), pending, mid);
          }
          pending = p;
          have_pending = true;
        }
      }
      if (have_pending) flatten_quad(c, c.back(), pending, c.front());
      out.push_back(std::move(c));
      start = end + 1;
    }
  }
};

FontFace::FontFace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open font " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  impl_ = std::make_unique<Impl>();
  impl_->data = std::move(bytes);
  impl_->parse();
}

FontFace::FontFace(std::vector<std::uint8_t> bytes) {
  impl_ = std::make_unique<Impl>();
  impl_->data = std::move(bytes);
  impl_->parse();
}

FontFace::~FontFace() = default;
FontFace::FontFace(FontFace&&) noexcept = default;
FontFace& FontFace::operator=(FontFace&&) noexcept = default;

bool FontFace::has_glyph(char32_t cp) const { return impl_->glyph_index(cp) != 0; }

Eigen::ArrayXXf FontFace::rasterize(char32_t cp, int side, double margin_frac) const {
  std::uint32_t gid = impl_->glyph_index(cp);
  if (gid == 0) throw std::runtime_error("font has no glyph for U+" + hex_cp(cp));
  std::vector<Contour> contours;
  impl_->outline(gid, Affine{}, contours, 0);
  if (contours.empty()) throw std::runtime_error("empty glyph outline for U+" + hex_cp(cp));

  double minx = 1e30, miny = 1e30, maxx = -1e30, maxy = -1e30;
  for (const auto& c : contours)
    for (const auto& p : c) {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
  double w = maxx - minx, h = maxy - miny;
  if (w <= 0 && h <= 0) throw std::runtime_error("degenerate glyph outline");

  const int ss = 4;  // supersampling factor per axis
  int grid = side * ss;
  double usable = side * (1.0 - 2.0 * margin_frac);
  double s = usable * ss / std::max(w, h);
  double ox = (grid - w * s) / 2 - minx * s;
  double oy = (grid - h * s) / 2 - miny * s;

  // device edges; font y goes up, image y goes down
  struct Edge {
    double x0, y0, x1, y1;
    int dir;
  };
  std::vector<Edge> edges;
  for (const auto& c : contours) {
    for (size_t i = 0; i < c.size(); ++i) {
      const Pt& a = c[i];
      const Pt& b = c[(i + 1) % c.size()];
      double ax = a.x * s + ox, ay = grid - (a.y * s + oy);
      double bx = b.x * s + ox, by = grid - (b.y * s + oy);
      if (ay == by) continue;
      edges.push_back(ay < by ? Edge{ax, ay, bx, by, 1} : Edge{bx, by, ax, ay, -1});
    }
  }

  // non-zero winding fill, one sample per supersample cell center
  Eigen::ArrayXXf acc = Eigen::ArrayXXf::Zero(grid, grid);
  std::vector<std::pair<double, int>> xs;
  for (int row = 0; row < grid; ++row) {
    double yc = row + 0.5;
    xs.clear();
    for (const auto& e : edges) {
      if (yc < e.y0 || yc >= e.y1) continue;
      double t = (yc - e.y0) / (e.y1 - e.y0);
      xs.emplace_back(e.x0 + t * (e.x1 - e.x0), e.dir);
    }
    std::sort(xs.begin(), xs.end());
    int winding = 0;
    double span_start = 0;
    for (const auto& [x, d] : xs) {
      int prev = winding;
      winding += d;
      if (prev == 0 && winding != 0) span_start = x;
      if (prev != 0 && winding == 0) {
        int x0 = std::clamp(static_cast<int>(std::ceil(span_start - 0.5)), 0, grid - 1);
        int x1 = std::clamp(static_cast<int>(std::floor(x - 0.5)), -1, grid - 1);
        for (int px = x0; px <= x1; ++px)
          if (px + 0.5 >= span_start && px + 0.5 < x) acc(row, px) = 1.0f;
      }
    }
  }

  Eigen::ArrayXXf img = Eigen::ArrayXXf::Zero(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      img(y, x) = acc.block(y * ss, x * ss, ss, ss).mean();
  return img;
}

GlyphImage render_prototype(const FontFace& font, char32_t cp, int resolution) {
  Eigen::ArrayXXf ink = font.rasterize(cp, resolution, 0.08);
  if (ink.maxCoeff() <= 0.0f) throw std::runtime_error("empty glyph raster");
  GlyphImage g{std::move(ink)};
  g.validate();
  return g;
}

}  // namespace metascript
