#pragma once

#include <Eigen/Core>

#include <utility>

#include "svc/raster.hpp"

namespace svc::colorspace {

/// CIE Lab triple in native units: L in [0,100], a and b roughly [-128,127].
using Lab = Eigen::Vector3d;

/// sRGB (companded, [0,1]) to CIE Lab under D65.
Lab srgb_to_lab(const Eigen::Vector3d& rgb);
/// Inverse of srgb_to_lab; result is not clamped.
Eigen::Vector3d lab_to_srgb(const Lab& lab);

/// Normalized encodings used throughout the pipeline.
inline double normalize_l(double l) { return l / 100.0; }
inline double normalize_ab(double v) { return (v + 128.0) / 255.0; }
inline double denormalize_l(double l) { return l * 100.0; }
inline double denormalize_ab(double v) { return v * 255.0 - 128.0; }

std::pair<GrayFrame, ColorEmbedding> rgb_to_lab(const RgbImage& img);
RgbImage lab_to_rgb(const GrayFrame& gray, const ColorEmbedding& ab);

}  // namespace svc::colorspace
