#pragma once

#include <string>

#include "crowdkd/tensor.hpp"

namespace crowdkd {

/// Decodes a PNG or JPEG file (detected by magic bytes) to {3,H,W} in [0,1].
Tensor read_image(const std::string& path);

/// 8-bit RGB PNG from a {3,H,W} tensor in [0,1].
void write_png_rgb(const std::string& path, const Tensor& image);

/// 8-bit grayscale PNG from a {H,W} grid, scaled so `vmax` maps to white.
/// vmax <= 0 uses the grid maximum.
void write_png_gray(const std::string& path, const Tensor& grid, double vmax = 0.0);

}  // namespace crowdkd
