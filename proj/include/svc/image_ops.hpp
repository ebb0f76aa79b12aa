#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "svc/error.hpp"
#include "svc/tensor.hpp"

namespace svc::image_ops {

/// One output coordinate's pair of source taps along an axis.
struct LinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

/// Half-pixel-centered linear taps (align_corners = false), clamped at the borders.
inline std::vector<LinearTap> linear_taps(int src, int dst) {
  std::vector<LinearTap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double s = std::max((d + 0.5) * scale - 0.5, 0.0);
    int i0 = std::min(static_cast<int>(std::floor(s)), src - 1);
    int i1 = std::min(i0 + 1, src - 1);
    taps[d] = {i0, i1, i1 == i0 ? 0.0 : s - i0};
  }
  return taps;
}

template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& x, int h, int w) {
  require(h >= 1 && w >= 1, "resize target must be at least 1x1");
  if (x.h == h && x.w == w) return x;
  const auto ty = linear_taps(x.h, h);
  const auto tx = linear_taps(x.w, w);
  Tensor<S> out(x.c, h, w);
  for (int c = 0; c < x.c; ++c) {
    const auto src = x.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < h; ++y) {
      const S wy1 = static_cast<S>(ty[y].w1), wy0 = S(1) - wy1;
      for (int xx = 0; xx < w; ++xx) {
        const S wx1 = static_cast<S>(tx[xx].w1), wx0 = S(1) - wx1;
        dst(y, xx) = wy0 * (wx0 * src(ty[y].i0, tx[xx].i0) + wx1 * src(ty[y].i0, tx[xx].i1)) +
                     wy1 * (wx0 * src(ty[y].i1, tx[xx].i0) + wx1 * src(ty[y].i1, tx[xx].i1));
      }
    }
  }
  return out;
}

/// Adjoint of resize_bilinear: scatters an output gradient back onto the source grid.
template <typename S>
Tensor<S> resize_bilinear_adjoint(const Tensor<S>& g, int src_h, int src_w) {
  if (g.h == src_h && g.w == src_w) return g;
  const auto ty = linear_taps(src_h, g.h);
  const auto tx = linear_taps(src_w, g.w);
  Tensor<S> out = Tensor<S>::zeros(g.c, src_h, src_w);
  for (int c = 0; c < g.c; ++c) {
    const auto src = g.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < g.h; ++y) {
      const S wy1 = static_cast<S>(ty[y].w1), wy0 = S(1) - wy1;
      for (int xx = 0; xx < g.w; ++xx) {
        const S wx1 = static_cast<S>(tx[xx].w1), wx0 = S(1) - wx1;
        const S v = src(y, xx);
        dst(ty[y].i0, tx[xx].i0) += wy0 * wx0 * v;
        dst(ty[y].i0, tx[xx].i1) += wy0 * wx1 * v;
        dst(ty[y].i1, tx[xx].i0) += wy1 * wx0 * v;
        dst(ty[y].i1, tx[xx].i1) += wy1 * wx1 * v;
      }
    }
  }
  return out;
}

/// k x k box average; dims must be divisible by k.
template <typename S>
Tensor<S> avg_pool(const Tensor<S>& x, int k) {
  require(k >= 1 && x.h % k == 0 && x.w % k == 0, "avg_pool: dims not divisible by factor");
  if (k == 1) return x;
  const int h = x.h / k, w = x.w / k;
  Tensor<S> out = Tensor<S>::zeros(x.c, h, w);
  const S inv = S(1) / static_cast<S>(k * k);
  for (int c = 0; c < x.c; ++c) {
    const auto src = x.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) dst(y / k, xx / k) += src(y, xx);
    dst *= inv;
  }
  return out;
}

template <typename S>
Tensor<S> avg_pool_adjoint(const Tensor<S>& g, int k) {
  if (k == 1) return g;
  Tensor<S> out(g.c, g.h * k, g.w * k);
  const S inv = S(1) / static_cast<S>(k * k);
  for (int c = 0; c < g.c; ++c) {
    const auto src = g.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < out.h; ++y)
      for (int xx = 0; xx < out.w; ++xx) dst(y, xx) = src(y / k, xx / k) * inv;
  }
  return out;
}

/// Bilinear sample position for backward warping with border replication.
struct WarpTap {
  int x0, x1, y0, y1;
  double wx, wy;
};

inline WarpTap warp_tap(int x, int y, double dx, double dy, int h, int w) {
  const double px = std::clamp(x + dx, 0.0, static_cast<double>(w - 1));
  const double py = std::clamp(y + dy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  return {x0, x1, y0, y1, px - x0, py - y0};
}

/// out(p) = bilinear sample of src at p + flow(p). flow is 2 x H x W (dx, dy).
template <typename S, typename F>
Tensor<S> warp(const Tensor<S>& src, const Tensor<F>& flow) {
  require(flow.c == 2 && src.h == flow.h && src.w == flow.w,
          "warp: source and flow spatial dims differ");
  Tensor<S> out(src.c, src.h, src.w);
  for (int y = 0; y < src.h; ++y) {
    for (int x = 0; x < src.w; ++x) {
      const WarpTap t = warp_tap(x, y, flow(0, y, x), flow(1, y, x), src.h, src.w);
      const S wx = static_cast<S>(t.wx), wy = static_cast<S>(t.wy);
      for (int c = 0; c < src.c; ++c) {
        const S top = (S(1) - wx) * src(c, t.y0, t.x0) + wx * src(c, t.y0, t.x1);
        const S bot = (S(1) - wx) * src(c, t.y1, t.x0) + wx * src(c, t.y1, t.x1);
        out(c, y, x) = (S(1) - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

template <typename S, typename F>
Tensor<S> warp_adjoint(const Tensor<S>& g, const Tensor<F>& flow) {
  Tensor<S> out = Tensor<S>::zeros(g.c, g.h, g.w);
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const WarpTap t = warp_tap(x, y, flow(0, y, x), flow(1, y, x), g.h, g.w);
      const S wx = static_cast<S>(t.wx), wy = static_cast<S>(t.wy);
      for (int c = 0; c < g.c; ++c) {
        const S v = g(c, y, x);
        out(c, t.y0, t.x0) += (S(1) - wy) * (S(1) - wx) * v;
        out(c, t.y0, t.x1) += (S(1) - wy) * wx * v;
        out(c, t.y1, t.x0) += wy * (S(1) - wx) * v;
        out(c, t.y1, t.x1) += wy * wx * v;
      }
    }
  }
  return out;
}

/// (C*r*r) x H x W  ->  C x (H*r) x (W*r).
template <typename S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, int r) {
  require(x.c % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
  const int c_out = x.c / (r * r);
  const int wo = x.w * r;
  Tensor<S> out(c_out, x.h * r, wo);
  for (int c = 0; c < c_out; ++c)
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx) {
        const S* src = x.m.row(c * r * r + dy * r + dx).data();
        S* dst = out.m.row(c).data();
        for (int y = 0; y < x.h; ++y) {
          const S* s = src + static_cast<Eigen::Index>(y) * x.w;
          S* d = dst + static_cast<Eigen::Index>(y * r + dy) * wo + dx;
          for (int xx = 0; xx < x.w; ++xx) d[xx * r] = s[xx];
        }
      }
  return out;
}

template <typename S>
Tensor<S> pixel_unshuffle(const Tensor<S>& x, int r) {
  require(x.h % r == 0 && x.w % r == 0, "pixel_unshuffle: dims not divisible by r");
  const int h = x.h / r, w = x.w / r;
  Tensor<S> out(x.c * r * r, h, w);
  for (int c = 0; c < x.c; ++c)
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx) {
        S* dst = out.m.row(c * r * r + dy * r + dx).data();
        const S* src = x.m.row(c).data();
        for (int y = 0; y < h; ++y) {
          const S* s = src + static_cast<Eigen::Index>(y * r + dy) * x.w + dx;
          S* d = dst + static_cast<Eigen::Index>(y) * w;
          for (int xx = 0; xx < w; ++xx) d[xx] = s[xx * r];
        }
      }
  return out;
}

/// Keys cubic convolution (a = -0.5), half-pixel centers, clamped borders.
template <typename S>
Tensor<S> resize_bicubic(const Tensor<S>& x, int h, int w) {
  require(h >= 1 && w >= 1, "resize target must be at least 1x1");
  auto kernel = [](double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
  };
  struct Taps {
    std::array<int, 4> idx;
    std::array<double, 4> wt;
  };
  auto taps = [&](int src, int dst) {
    std::vector<Taps> out(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
      const double s = (d + 0.5) * scale - 0.5;
      const int base = static_cast<int>(std::floor(s));
      const double frac = s - base;
      for (int k = 0; k < 4; ++k) {
        out[d].idx[k] = std::clamp(base - 1 + k, 0, src - 1);
        out[d].wt[k] = kernel(frac - (k - 1));
      }
    }
    return out;
  };
  const auto ty = taps(x.h, h);
  const auto tx = taps(x.w, w);
  Tensor<S> out(x.c, h, w);
  for (int c = 0; c < x.c; ++c) {
    const auto src = x.plane(c);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) acc += ty[y].wt[i] * tx[xx].wt[j] * src(ty[y].idx[i], tx[xx].idx[j]);
        out(c, y, xx) = static_cast<S>(acc);
      }
  }
  return out;
}

template <typename S>
Tensor<S> mirror_horizontal(const Tensor<S>& x) {
  Tensor<S> out(x.c, x.h, x.w);
  for (int c = 0; c < x.c; ++c) out.plane(c) = x.plane(c).rowwise().reverse();
  return out;
}

}  // namespace svc::image_ops
