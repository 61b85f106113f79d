#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "halo/geometry.hpp"
#include "halo/tensor.hpp"

namespace halo::img {

// Grayscale image in [0,1], stored as a [H,W] tensor.
// Readers accept 8/16-bit PNG (color is converted to luminance) and P2/P5 PGM.

Tensor read_gray(const std::string& path);
void write_gray_png(const std::string& path, const Tensor& image);
void write_gray_pgm(const std::string& path, const Tensor& image);

// In-memory PNG (8-bit gray) for wire formats.
std::string encode_gray_png(const Tensor& image);
Tensor decode_gray_png(const std::string& bytes);

// 8-bit RGB, [3,H,W] in [0,1].
void write_rgb_png(const std::string& path, const Tensor& rgb);

// Nearest-neighbor / bilinear resize helpers for loading datasets.
Tensor resize_bilinear(const Tensor& image, int h, int w);
Mask resize_nearest(const Mask& mask, int h, int w);

}  // namespace halo::img
