#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "lsnet/tensor.hpp"

namespace lsnet {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Loads an 8-bit PNG or binary PPM (P6) as (1, 3, H, W) with values in
/// [0, 1] (v / 255). Grayscale and paletted PNGs are expanded to RGB;
/// 16-bit files are rejected as unsupported bit depth.
Tensor load_image(const std::string& path);

/// Loads both images and checks they share dimensions; the error names
/// both files on mismatch.
std::pair<Tensor, Tensor> load_image_pair(const std::string& path_a, const std::string& path_b);

/// Loads a change mask as (1, 1, H, W) with exact {0, 1} values
/// (threshold at 128 of the 8-bit intensity; RGB masks use the red plane).
Tensor load_mask(const std::string& path);

/// Writes (1, 1, H, W) values in [0, 1] as an 8-bit grayscale PNG
/// (round(v * 255), clamped).
void save_png_gray(const std::string& path, const Tensor& image);

/// Writes (1, 3, H, W) values in [0, 1] as an 8-bit RGB PNG.
void save_png_rgb(const std::string& path, const Tensor& image);

/// Writes (1, 3, H, W) values in [0, 1] as a binary PPM (P6, maxval 255).
void save_ppm_rgb(const std::string& path, const Tensor& image);

}  // namespace lsnet
