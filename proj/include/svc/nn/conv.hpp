#pragma once

#include <random>
#include <string>
#include <vector>

#include "svc/nn/autodiff.hpp"
#include "svc/nn/mac_counter.hpp"
#include "svc/nn/parameter.hpp"

namespace svc::nn {

namespace detail {

/// Unfolds k x k patches (zero padding k/2) into a (C*k*k) x (Ho*Wo) matrix.
template <typename S>
void im2col(const Tensor<S>& x, int k, int stride, int ho, int wo, PlaneMatrix<S>& col) {
  const int pad = k / 2;
  col.resize(static_cast<Eigen::Index>(x.c) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < x.c; ++c) {
    const S* src = x.m.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* dst = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          S* drow = dst + static_cast<Eigen::Index>(oy) * wo;
          if (iy < 0 || iy >= x.h) {
            std::fill(drow, drow + wo, S(0));
            continue;
          }
          const S* srow = src + static_cast<Eigen::Index>(iy) * x.w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift);
            const int hi = std::min(wo, x.w - shift);
            std::fill(drow, drow + lo, S(0));
            if (hi > lo) std::copy(srow + lo + shift, srow + hi + shift, drow + lo);
            std::fill(drow + std::max(hi, lo), drow + wo, S(0));
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              drow[ox] = (ix >= 0 && ix < x.w) ? srow[ix] : S(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: folds patch gradients back onto the input grid.
template <typename S>
void col2im(const PlaneMatrix<S>& col, int k, int stride, int ho, int wo, Tensor<S>& dx) {
  const int pad = k / 2;
  for (int c = 0; c < dx.c; ++c) {
    S* dst = dx.m.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* src = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= dx.h) continue;
          const S* srow = src + static_cast<Eigen::Index>(oy) * wo;
          S* drow = dst + static_cast<Eigen::Index>(iy) * dx.w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift);
            const int hi = std::min(wo, dx.w - shift);
            for (int ox = lo; ox < hi; ++ox) drow[ox + shift] += srow[ox];
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < dx.w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}


/// Row-tiled stride-1 convolution without an unfolded buffer; faster than
/// im2col + GEMM when either channel count is tiny.
template <typename S>
void direct_conv(const Tensor<S>& x, const PlaneMatrix<S>& wt, const PlaneMatrix<S>& bias, int k, Tensor<S>& out) {
  const int pad = k / 2, w = x.w;
  for (int co = 0; co < out.c; ++co) {
    S* obase = out.m.row(co).data();
    for (int y = 0; y < x.h; ++y) {
      S* orow = obase + static_cast<Eigen::Index>(y) * w;
      std::fill(orow, orow + w, bias(co, 0));
      for (int ci = 0; ci < x.c; ++ci) {
        const S* xbase = x.m.row(ci).data();
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= x.h) continue;
          const S* xrow = xbase + static_cast<Eigen::Index>(iy) * w;
          for (int kx = 0; kx < k; ++kx) {
            const S wv = wt(co, (ci * k + ky) * k + kx);
            const int shift = kx - pad;
            const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
            for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xrow[ox + shift];
          }
        }
      }
    }
  }
}

/// Gradients of direct_conv; dx and dw may be null.
template <typename S>
void direct_conv_backward(const Tensor<S>& x, const PlaneMatrix<S>& wt, int k, const Tensor<S>& g, Tensor<S>* dx,
                          PlaneMatrix<S>* dw) {
  const int pad = k / 2, w = x.w;
  for (int co = 0; co < g.c; ++co) {
    const S* gbase = g.m.row(co).data();
    for (int y = 0; y < x.h; ++y) {
      const S* grow = gbase + static_cast<Eigen::Index>(y) * w;
      for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= x.h) continue;
          const S* xrow = x.m.row(ci).data() + static_cast<Eigen::Index>(iy) * w;
          S* dxrow = dx ? dx->m.row(ci).data() + static_cast<Eigen::Index>(iy) * w : nullptr;
          for (int kx = 0; kx < k; ++kx) {
            const int idx = (ci * k + ky) * k + kx;
            const int shift = kx - pad;
            const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
            if (dw) {
              using Row = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>;
              (*dw)(co, idx) += Row(grow + lo, hi - lo).dot(Row(xrow + lo + shift, hi - lo));
            }
            if (dxrow) {
              const S wv = wt(co, idx);
              for (int ox = lo; ox < hi; ++ox) dxrow[ox + shift] += wv * grow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// k x k convolution with "same" zero padding and optional stride.
template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride) {
    weight_.name = name + ".weight";
    weight_.shape = {out_channels, in_channels, kernel, kernel};
    weight_.value = PlaneMatrix<S>::Zero(out_channels, in_channels * kernel * kernel);
    bias_.name = name + ".bias";
    bias_.shape = {out_channels};
    bias_.value = PlaneMatrix<S>::Zero(out_channels, 1);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int fan_in() const { return in_ * kernel_ * kernel_; }
  int fan_out() const { return out_ * kernel_ * kernel_; }
  /// Tiny channel counts bypass im2col + GEMM.
  bool direct() const { return stride_ == 1 && kernel_ > 1 && std::min(in_, out_) <= 4; }

  void init_glorot(std::mt19937_64& rng) {
    glorot_uniform(weight_, fan_in(), fan_out(), rng);
    bias_.value.setZero();
  }

  void set_frozen(bool frozen) {
    weight_.frozen = frozen;
    bias_.frozen = frozen;
  }

  Parameter<S>& weight() { return weight_; }
  Parameter<S>& bias() { return bias_; }
  const Parameter<S>& weight() const { return weight_; }
  const Parameter<S>& bias() const { return bias_; }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Var<S> operator()(Var<S> x) const {
    const Tensor<S>& xv = x.value();
    require(xv.c == in_, weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                             std::to_string(xv.c));
    const int ho = (xv.h + stride_ - 1) / stride_;
    const int wo = (xv.w + stride_ - 1) / stride_;
    Tensor<S> out(out_, ho, wo);
    count_macs(static_cast<std::uint64_t>(out_) * fan_in() * ho * wo);

    if (direct()) {
      detail::direct_conv(xv, weight_.value, bias_.value, kernel_, out);
    } else if (kernel_ == 1 && stride_ == 1) {
      out.m.noalias() = weight_.value * xv.m;
    } else {
      PlaneMatrix<S> col;
      detail::im2col(xv, kernel_, stride_, ho, wo, col);
      out.m.noalias() = weight_.value * col;
    }
    if (!direct()) out.m.colwise() += bias_.value.col(0);

    Tape<S>& tape = *x.tape;
    const bool params_live = !weight_.frozen;
    const bool needs_grad = tape.grad_enabled() && (x.requires_grad() || params_live);
    if (!needs_grad) return tape.constant(std::move(out));

    const int ix = x.id;
    const Conv2d* self = this;
    return tape.record(std::move(out), true, [self, ix, ho, wo](Tape<S>& t, const Tensor<S>& g, const Tensor<S>&) {
      const Tensor<S>& xin = t.value(ix);
      if (self->direct()) {
        const bool live = !self->weight_.frozen;
        PlaneMatrix<S> dw;
        if (live) dw = PlaneMatrix<S>::Zero(self->out_, self->fan_in());
        Tensor<S> dx;
        if (t.requires_grad(ix)) dx = Tensor<S>::zeros(xin.c, xin.h, xin.w);
        detail::direct_conv_backward(xin, self->weight_.value, self->kernel_, g, t.requires_grad(ix) ? &dx : nullptr,
                                     live ? &dw : nullptr);
        if (live) {
          t.accumulate_param(&self->weight_, dw);
          t.accumulate_param(&self->bias_, g.m.rowwise().sum());
        }
        if (t.requires_grad(ix)) t.accumulate(ix, dx);
        return;
      }
      const bool direct = self->kernel_ == 1 && self->stride_ == 1;
      PlaneMatrix<S> col;
      if (!direct) detail::im2col(xin, self->kernel_, self->stride_, ho, wo, col);
      const PlaneMatrix<S>& cols = direct ? xin.m : col;
      if (!self->weight_.frozen) {
        t.accumulate_param(&self->weight_, g.m * cols.transpose());
        t.accumulate_param(&self->bias_, g.m.rowwise().sum());
      }
      if (t.requires_grad(ix)) {
        PlaneMatrix<S> dcol = self->weight_.value.transpose() * g.m;
        if (direct) {
          t.accumulate_matrix(ix, dcol);
        } else {
          Tensor<S> dx = Tensor<S>::zeros(xin.c, xin.h, xin.w);
          detail::col2im(dcol, self->kernel_, self->stride_, ho, wo, dx);
          t.accumulate(ix, dx);
        }
      }
    });
  }

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
  Parameter<S> weight_;
  Parameter<S> bias_;
};

}  // namespace svc::nn
