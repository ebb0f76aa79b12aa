#include "svc/colorspace.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace svc::colorspace {
namespace {

// D65 reference white.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.00000;
constexpr double kZn = 1.08883;

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }
double lab_f_inv(double f) {
  const double f3 = f * f * f;
  return f3 > kEpsilon ? f3 : (116.0 * f - 16.0) / kKappa;
}

const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                       //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& xyz_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_xyz().inverse();
  return m;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

Lab srgb_to_lab(const Eigen::Vector3d& rgb) {
  const Eigen::Vector3d lin = rgb.unaryExpr(&srgb_to_linear);
  const Eigen::Vector3d xyz = rgb_to_xyz() * lin;
  const double fx = lab_f(xyz.x() / kXn);
  const double fy = lab_f(xyz.y() / kYn);
  const double fz = lab_f(xyz.z() / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Eigen::Vector3d lab_to_srgb(const Lab& lab) {
  const double fy = (lab.x() + 16.0) / 116.0;
  const double fx = fy + lab.y() / 500.0;
  const double fz = fy - lab.z() / 200.0;
  const Eigen::Vector3d xyz(kXn * lab_f_inv(fx), kYn * lab_f_inv(fy), kZn * lab_f_inv(fz));
  const Eigen::Vector3d lin = xyz_to_rgb() * xyz;
  return lin.unaryExpr([](double c) { return linear_to_srgb(std::max(c, 0.0)); });
}

std::pair<GrayFrame, ColorEmbedding> rgb_to_lab(const RgbImage& img) {
  require_unit_range(img.tensor(), "rgb image");
  const int h = img.height();
  const int w = img.width();
  GrayFrame gray(h, w);
  ColorEmbedding ab(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Lab lab = srgb_to_lab({img(0, y, x), img(1, y, x), img(2, y, x)});
      gray(0, y, x) = clamp01(normalize_l(lab.x()));
      ab(0, y, x) = clamp01(normalize_ab(lab.y()));
      ab(1, y, x) = clamp01(normalize_ab(lab.z()));
    }
  }
  return {std::move(gray), std::move(ab)};
}

RgbImage lab_to_rgb(const GrayFrame& gray, const ColorEmbedding& ab) {
  require(gray.same_size(ab), "lab_to_rgb: gray " + dims_string(gray.height(), gray.width()) +
                                  " vs ab " + dims_string(ab.height(), ab.width()));
  require(gray.tensor().all_finite() && ab.tensor().all_finite(), "lab_to_rgb: non-finite input");
  const int h = gray.height();
  const int w = gray.width();
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Lab lab(denormalize_l(gray(0, y, x)), denormalize_ab(ab(0, y, x)), denormalize_ab(ab(1, y, x)));
      const Eigen::Vector3d rgb = lab_to_srgb(lab);
      for (int c = 0; c < 3; ++c) out(c, y, x) = clamp01(rgb[c]);
    }
  }
  return out;
}

}  // namespace svc::colorspace
