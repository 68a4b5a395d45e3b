#pragma once

#include <string>

#include "manigan/tensor.hpp"

namespace manigan {

/// 8-bit RGB PNG -> [3,H,W] in [0,1] (values are exact multiples of 1/255).
Tensor read_png_rgb(const std::string& path);

/// [3,H,W] in [0,1] -> 8-bit RGB PNG. Values are rounded to u8.
void write_png_rgb(const std::string& path, const Tensor& image);

/// 8-bit grayscale PNG -> [1,H,W] in [0,1].
Tensor read_png_gray(const std::string& path);

/// [1,H,W] in [0,1] -> 8-bit grayscale PNG.
void write_png_gray(const std::string& path, const Tensor& image);

/// Round a [0,1] float to the u8 grid and back, as a PNG round-trip would.
float quantize_unit(float v);

}  // namespace manigan
