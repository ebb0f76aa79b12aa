#pragma once

#include <Eigen/Core>

#include <cassert>
#include <cmath>
#include <cstddef>

namespace svc {

/// Channel-major storage: one row per channel, each row a row-major H*W plane.
template <typename Scalar>
using PlaneMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename Scalar>
using ConstPlaneMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Dense C x H x W tensor. Channel c, pixel (y, x) lives at m(c, y * w + x).
template <typename Scalar>
struct Tensor {
  using Matrix = PlaneMatrix<Scalar>;

  int c = 0;
  int h = 0;
  int w = 0;
  Matrix m;

  Tensor() = default;
  Tensor(int channels, int height, int width) : c(channels), h(height), w(width), m(channels, height * width) {}
  Tensor(int channels, int height, int width, Scalar fill)
      : c(channels), h(height), w(width), m(Matrix::Constant(channels, height * width, fill)) {}

  static Tensor zeros(int channels, int height, int width) { return Tensor(channels, height, width, Scalar(0)); }
  static Tensor zeros_like(const Tensor& t) { return zeros(t.c, t.h, t.w); }

  Scalar& operator()(int ch, int y, int x) { return m(ch, static_cast<Eigen::Index>(y) * w + x); }
  Scalar operator()(int ch, int y, int x) const { return m(ch, static_cast<Eigen::Index>(y) * w + x); }

  int pixels() const { return h * w; }
  Eigen::Index size() const { return m.size(); }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
  bool same_spatial(const Tensor& o) const { return h == o.h && w == o.w; }

  PlaneMap<Scalar> plane(int ch) { return PlaneMap<Scalar>(m.row(ch).data(), h, w); }
  ConstPlaneMap<Scalar> plane(int ch) const { return ConstPlaneMap<Scalar>(m.row(ch).data(), h, w); }

  bool all_finite() const { return m.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.c = c;
    out.h = h;
    out.w = w;
    out.m = m.template cast<Other>();
    return out;
  }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace svc
