#pragma once

#include <Eigen/Core>

#include <string>

namespace metascript {

// 8-bit grayscale PNG round trip. Reading converts any color type to
// grayscale in [0,1]; writing clamps to [0,1] and quantizes.
Eigen::ArrayXXf read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const Eigen::ArrayXXf& img);

}  // namespace metascript
