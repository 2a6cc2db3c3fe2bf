#include "metascript/glyph.hpp"

#include <algorithm>
#include <cmath>

namespace metascript {

Eigen::ArrayXXf resize_bilinear(const Eigen::ArrayXXf& src, int out_h, int out_w) {
  int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  if (h == out_h && w == out_w) return src;
  Eigen::ArrayXXf dst(out_h, out_w);
  float sy = static_cast<float>(h) / out_h;
  float sx = static_cast<float>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    float fy = (y + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    float ty = fy - y0;
    int ya = std::clamp(y0, 0, h - 1), yb = std::clamp(y0 + 1, 0, h - 1);
    for (int x = 0; x < out_w; ++x) {
      float fx = (x + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      float tx = fx - x0;
      int xa = std::clamp(x0, 0, w - 1), xb = std::clamp(x0 + 1, 0, w - 1);
      dst(y, x) = (1 - ty) * ((1 - tx) * src(ya, xa) + tx * src(ya, xb)) +
                  ty * ((1 - tx) * src(yb, xa) + tx * src(yb, xb));
    }
  }
  return dst;
}

namespace {

Eigen::ArrayXXf pad_to_square(const Eigen::ArrayXXf& img, float fill) {
  int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  if (h == w) return img;
  int side = std::max(h, w);
  Eigen::ArrayXXf out = Eigen::ArrayXXf::Constant(side, side, fill);
  int oy = (side - h) / 2, ox = (side - w) / 2;
  out.block(oy, ox, h, w) = img;
  return out;
}

}  // namespace

GlyphImage canonicalize_ink(const Eigen::ArrayXXf& ink, int resolution) {
  Eigen::ArrayXXf sq = pad_to_square(ink, 0.0f);
  Eigen::ArrayXXf scaled = resize_bilinear(sq, resolution, resolution);
  scaled = scaled.max(0.0f).min(1.0f);
  GlyphImage g{std::move(scaled)};
  g.validate();
  return g;
}

GlyphImage preprocess(const Eigen::ArrayXXf& raw, int resolution) {
  if (raw.size() == 0) throw std::runtime_error("preprocess: empty input");
  float lo = raw.minCoeff(), hi = raw.maxCoeff();
  if (!(hi > lo)) throw std::runtime_error("preprocess: empty glyph");
  Eigen::ArrayXXf norm = (raw - lo) / (hi - lo);
  // Ink is the sparse class of a glyph; a bright majority means paper
  // background, so flip to ink=1. Already-converted images pass through,
  // which keeps preprocess idempotent.
  if (norm.mean() > 0.5f) norm = 1.0f - norm;
  return canonicalize_ink(norm, resolution);
}

}  // namespace metascript
