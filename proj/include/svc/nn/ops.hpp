#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "svc/image_ops.hpp"
#include "svc/nn/autodiff.hpp"
#include "svc/nn/mac_counter.hpp"

namespace svc::nn {

// Elementwise arithmetic ----------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  require(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor<S> out = a.value();
  out.m += b.value().m;
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_requires_grad({a, b}), [ia, ib](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor<S> out = a.value();
  out.m -= b.value().m;
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_requires_grad({a, b}), [ia, ib](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    t.accumulate(ia, g);
    t.accumulate_matrix(ib, -g.m);
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  Tensor<S> out = a.value();
  out.m *= s;
  const int ia = a.id;
  return a.tape->record(std::move(out), a.requires_grad(),
                        [ia, s](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) { t.accumulate_matrix(ia, g.m * s); });
}

/// Elementwise product with a constant tensor of the same shape.
template <typename S>
Var<S> mul_const(Var<S> a, const Tensor<S>& k) {
  require(a.value().same_shape(k), "mul_const: shape mismatch");
  Tensor<S> out = a.value();
  out.m.array() *= k.m.array();
  const int ia = a.id;
  return a.tape->record(std::move(out), a.requires_grad(), [ia, k](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    t.accumulate_matrix(ia, (g.m.array() * k.m.array()).matrix());
  });
}

// Activations ---------------------------------------------------------------

template <typename S>
Var<S> leaky_relu(Var<S> x, S slope = S(0.2)) {
  Tensor<S> out = x.value();
  out.m = out.m.array().max(out.m.array() * slope).matrix();
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix, slope](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    const auto xv = t.value(ix).m.array();
    const auto d = (xv > S(0)).template cast<S>() * (S(1) - slope) + slope;
    t.accumulate_matrix(ix, (g.m.array() * d).matrix());
  });
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Tensor<S> out = x.value();
  out.m = (S(1) / (S(1) + (-out.m.array()).exp())).matrix();
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix](Tape<S>& t, const Tensor<S>& g, const Tensor<S>& y) {
    const auto yv = y.m.array();
    t.accumulate_matrix(ix, (g.m.array() * yv * (S(1) - yv)).matrix());
  });
}

/// log(x / (1 - x)) of x clamped to [eps, 1 - eps]; zero gradient where clamped.
template <typename S>
Var<S> logit(Var<S> x, S eps = S(1e-3)) {
  Tensor<S> out = x.value();
  const auto c = out.m.array().max(eps).min(S(1) - eps);
  out.m = (c / (S(1) - c)).log().matrix();
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix, eps](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    const auto xv = t.value(ix).m.array();
    const auto inside = (xv > eps && xv < S(1) - eps);
    t.accumulate_matrix(ix, (g.m.array() * inside.select(S(1) / (xv * (S(1) - xv)), S(0))).matrix());
  });
}

// Channel plumbing ----------------------------------------------------------

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  const int h = parts[0].height(), w = parts[0].width();
  int channels = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require(p.height() == h && p.width() == w,
            "concat: spatial mismatch " + dims_string(p.height(), p.width()) + " vs " + dims_string(h, w));
    channels += p.channels();
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor<S> out(channels, h, w);
  std::vector<std::pair<int, int>> spans;  // (id, channel offset)
  int offset = 0;
  for (const auto& p : parts) {
    out.m.middleRows(offset, p.channels()) = p.value().m;
    spans.emplace_back(p.id, offset);
    offset += p.channels();
  }
  Tape<S>* tape = parts[0].tape;
  return tape->record(std::move(out), needs_grad, [spans](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    for (const auto& [id, off] : spans) {
      if (!t.requires_grad(id)) continue;
      t.accumulate_matrix(id, g.m.middleRows(off, t.value(id).c));
    }
  });
}

template <typename S>
Var<S> slice_channels(Var<S> x, int begin, int count) {
  require(begin >= 0 && count > 0 && begin + count <= x.channels(), "slice_channels: out of range");
  Tensor<S> out(count, x.height(), x.width());
  out.m = x.value().m.middleRows(begin, count);
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix, begin, count](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    const Tensor<S>& xv = t.value(ix);
    PlaneMatrix<S> full = PlaneMatrix<S>::Zero(xv.c, xv.m.cols());
    full.middleRows(begin, count) = g.m;
    t.accumulate_matrix(ix, full);
  });
}

/// Per-pixel softmax over the active channels of `logits` (one per input),
/// used to blend the inputs: out = sum_k w_k * inputs[k]. Inactive inputs get
/// weight 0; at least one must be active.
template <typename S>
Var<S> softmax_fuse(Var<S> logits, const std::vector<Var<S>>& inputs, const std::vector<bool>& active) {
  const int k_n = static_cast<int>(inputs.size());
  require(k_n > 0 && logits.channels() == k_n && static_cast<int>(active.size()) == k_n,
          "softmax_fuse: need one logit channel and one flag per input");
  require(std::find(active.begin(), active.end(), true) != active.end(), "softmax_fuse: no active input");
  const int c = inputs[0].channels(), h = logits.height(), w = logits.width();
  bool needs_grad = logits.requires_grad();
  for (const auto& x : inputs) {
    require(x.channels() == c && x.height() == h && x.width() == w, "softmax_fuse: input shape mismatch");
    needs_grad = needs_grad || x.requires_grad();
  }
  PlaneMatrix<S> wts = PlaneMatrix<S>::Zero(k_n, static_cast<Eigen::Index>(h) * w);
  const auto& lv = logits.value().m;
  for (Eigen::Index p = 0; p < wts.cols(); ++p) {
    S mx = -std::numeric_limits<S>::infinity();
    for (int k = 0; k < k_n; ++k)
      if (active[k]) mx = std::max(mx, lv(k, p));
    S sum = 0;
    for (int k = 0; k < k_n; ++k)
      if (active[k]) sum += wts(k, p) = std::exp(lv(k, p) - mx);
    wts.col(p) /= sum;
  }
  Tensor<S> out = Tensor<S>::zeros(c, h, w);
  for (int k = 0; k < k_n; ++k)
    if (active[k]) out.m.array() += inputs[k].value().m.array().rowwise() * wts.row(k).array();
  std::vector<int> ids;
  for (const auto& x : inputs) ids.push_back(x.id);
  const int il = logits.id;
  return logits.tape->record(std::move(out), needs_grad,
                             [il, ids, wts, active](Tape<S>& t, const Tensor<S>& g, const Tensor<S>& y) {
    const int k_n = static_cast<int>(ids.size());
    if (t.requires_grad(il)) {
      // d out / d logit_k = w_k (x_k - out), contracted with g over channels.
      const auto base = (g.m.array() * y.m.array()).colwise().sum();
      PlaneMatrix<S> gl = PlaneMatrix<S>::Zero(k_n, wts.cols());
      for (int k = 0; k < k_n; ++k)
        if (active[k])
          gl.row(k) = (wts.row(k).array() * ((g.m.array() * t.value(ids[k]).m.array()).colwise().sum() - base)).matrix();
      t.accumulate_matrix(il, gl);
    }
    for (int k = 0; k < k_n; ++k)
      if (active[k] && t.requires_grad(ids[k]))
        t.accumulate_matrix(ids[k], (g.m.array().rowwise() * wts.row(k).array()).matrix());
  });
}

// Resampling ----------------------------------------------------------------

template <typename S>
Var<S> resize(Var<S> x, int h, int w) {
  if (x.height() == h && x.width() == w) return x;
  const int ih = x.height(), iw = x.width(), ix = x.id;
  return x.tape->record(image_ops::resize_bilinear(x.value(), h, w), x.requires_grad(),
                        [ix, ih, iw](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
                          t.accumulate(ix, image_ops::resize_bilinear_adjoint(g, ih, iw));
                        });
}

template <typename S>
Var<S> avg_pool(Var<S> x, int k) {
  if (k == 1) return x;
  const int ix = x.id;
  return x.tape->record(image_ops::avg_pool(x.value(), k), x.requires_grad(),
                        [ix, k](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) { t.accumulate(ix, image_ops::avg_pool_adjoint(g, k)); });
}

template <typename S>
Var<S> pixel_shuffle(Var<S> x, int r) {
  const int ix = x.id;
  return x.tape->record(image_ops::pixel_shuffle(x.value(), r), x.requires_grad(),
                        [ix, r](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) { t.accumulate(ix, image_ops::pixel_unshuffle(g, r)); });
}

/// Backward warp by a constant flow (no gradient w.r.t. the flow).
template <typename S>
Var<S> warp(Var<S> x, const Tensor<float>& flow) {
  const int ix = x.id;
  return x.tape->record(image_ops::warp(x.value(), flow), x.requires_grad(),
                        [ix, flow](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) { t.accumulate(ix, image_ops::warp_adjoint(g, flow)); });
}

// Normalization -------------------------------------------------------------

/// Per-channel spatial standardization without affine terms.
template <typename S>
Var<S> instance_norm(Var<S> x, S eps = S(1e-5)) {
  const Tensor<S>& xv = x.value();
  const Eigen::Index n = xv.m.cols();
  Tensor<S> out(xv.c, xv.h, xv.w);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(xv.c);
  for (int c = 0; c < xv.c; ++c) {
    const auto row = xv.m.row(c).array();
    const S mean = row.mean();
    const S var = (row - mean).square().sum() / static_cast<S>(n);
    inv_std[c] = S(1) / std::sqrt(var + eps);
    out.m.row(c) = ((row - mean) * inv_std[c]).matrix();
  }
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix, inv_std, n](Tape<S>& t, const Tensor<S>& g, const Tensor<S>& yv) {
    PlaneMatrix<S> dx(yv.c, n);
    for (int c = 0; c < yv.c; ++c) {
      const auto gy = g.m.row(c).array();
      const auto yy = yv.m.row(c).array();
      const S mg = gy.mean();
      const S mgy = (gy * yy).mean();
      dx.row(c) = (inv_std[c] * (gy - mg - yy * mgy)).matrix();
    }
    t.accumulate_matrix(ix, dx);
  });
}

// Linear maps ---------------------------------------------------------------

/// out.m = x.m * A with A constant (x is C x N, A is N x (h*w)).
template <typename S>
Var<S> matmul_const(Var<S> x, const PlaneMatrix<S>& a, int h, int w) {
  require(x.value().m.cols() == a.rows() && a.cols() == static_cast<Eigen::Index>(h) * w,
          "matmul_const: dimension mismatch");
  Tensor<S> out(x.channels(), h, w);
  out.m.noalias() = x.value().m * a;
  count_macs(static_cast<std::uint64_t>(x.channels()) * a.rows() * a.cols());
  const int ix = x.id;
  if (!x.requires_grad()) return x.tape->constant(std::move(out));
  return x.tape->record(std::move(out), true, [ix, a](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    t.accumulate_matrix(ix, g.m * a.transpose());
  });
}

// Reductions ----------------------------------------------------------------

/// mean |a - b| over all elements.
template <typename S>
Var<S> l1_loss(Var<S> a, Var<S> b) {
  require(a.value().same_shape(b.value()), "l1_loss: shape mismatch");
  const auto diff = (a.value().m - b.value().m).eval();
  const S n = static_cast<S>(diff.size());
  Tensor<S> out(1, 1, 1, diff.array().abs().sum() / n);
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), any_requires_grad({a, b}), [ia, ib, diff, n](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    const PlaneMatrix<S> d = (diff.array().sign() * (g.m(0, 0) / n)).matrix();
    t.accumulate_matrix(ia, d);
    t.accumulate_matrix(ib, -d);
  });
}

template <typename S>
Var<S> mean_all(Var<S> x) {
  const S n = static_cast<S>(x.value().size());
  Tensor<S> out(1, 1, 1, x.value().m.sum() / n);
  const int ix = x.id;
  return x.tape->record(std::move(out), x.requires_grad(), [ix, n](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
    const Tensor<S>& xv = t.value(ix);
    t.accumulate_matrix(ix, PlaneMatrix<S>::Constant(xv.c, xv.m.cols(), g.m(0, 0) / n));
  });
}

}  // namespace svc::nn
