#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace metascript {

// Single-channel raster of one character. Values in [0,1] with ink = 1
// and background = 0; scans arrive white-paper/dark-ink and are inverted
// on load.
struct GlyphImage {
  Eigen::ArrayXXf pixels;  // row-major indexing pixels(y, x)

  int resolution() const { return static_cast<int>(pixels.rows()); }
  bool empty() const { return pixels.size() == 0; }

  void validate() const {
    if (pixels.rows() != pixels.cols())
      throw std::runtime_error("GlyphImage: not square (" + std::to_string(pixels.rows()) + "x" +
                               std::to_string(pixels.cols()) + ")");
    if (pixels.size() == 0) throw std::runtime_error("GlyphImage: empty");
    if (!(pixels >= 0.0f).all() || !(pixels <= 1.0f).all() || !pixels.isFinite().all())
      throw std::runtime_error("GlyphImage: values outside [0,1]");
  }
};

// Canonical square resolution used throughout training.
inline constexpr int kCanonicalResolution = 128;

// Pad-to-square with background, bilinear scale to the target resolution,
// normalize intensity to [0,1] and convert to ink=1 polarity. raw is a
// grayscale scan, any size, brighter = paper.
GlyphImage preprocess(const Eigen::ArrayXXf& raw, int resolution = kCanonicalResolution);

// Same canonicalization for an image that is already ink=1 polarity.
GlyphImage canonicalize_ink(const Eigen::ArrayXXf& ink, int resolution);

// Bilinear resample to an arbitrary square size (used by the typewriter).
Eigen::ArrayXXf resize_bilinear(const Eigen::ArrayXXf& src, int out_h, int out_w);

}  // namespace metascript
