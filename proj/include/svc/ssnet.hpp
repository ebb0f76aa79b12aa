#pragma once

#include <array>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svc/cpnet.hpp"
#include "svc/nn/layers.hpp"
#include "svc/raster.hpp"

namespace svc::ssnet {

using nn::Conv2d;
using nn::Parameter;
using nn::Tape;
using nn::Var;

/// Neighbor offsets of the short-range window, in Combination input order.
inline constexpr std::array<int, 6> kWindow = {-3, -2, -1, 1, 2, 3};
inline constexpr std::array<int, 3> kRatios = {2, 4, 8};

struct SsnetConfig {
  int refinement_channels = 16;
  int combination_channels = 32;
  int sr_channels = 32;
  int sr_ratio = 2;
  double tau = 200.0;
  double alpha = 200.0;

  void validate() const;
};

nlohmann::json to_json(const SsnetConfig& c);
SsnetConfig ssnet_config_from_json(const nlohmann::json& j);
bool valid_ratio(int r);

/// Residual in logit space: sigmoid(logit(base) + delta). Keeps outputs in
/// (0,1) and starts at the identity when delta's last layer is zero.
template <typename S>
Var<S> logit_residual(Var<S> base, Var<S> delta) {
  return nn::sigmoid(nn::add(nn::logit(base), delta));
}

/// Instance-normalized encoder-decoder over (a, b, mask).
template <typename S>
class RefinementModule {
 public:
  RefinementModule() = default;
  RefinementModule(const std::string& name, int c)
      : c1_(name + ".conv1", 3, c, 3),
        c2_(name + ".conv2", c, 2 * c, 3, 2),
        c3_(name + ".conv3", 2 * c, 2 * c, 3),
        c4_(name + ".conv4", 3 * c, c, 3),
        out_(name + ".out", c, 2, 3) {}
  RefinementModule(const RefinementModule&) = delete;
  RefinementModule& operator=(const RefinementModule&) = delete;

  void init(std::mt19937_64& rng) {
    for (auto* c : {&c1_, &c2_, &c3_, &c4_, &out_}) c->init_glorot(rng);
    out_.weight().value.setZero();
  }
  void collect(std::vector<Parameter<S>*>& out) {
    for (auto* c : {&c1_, &c2_, &c3_, &c4_, &out_}) c->collect(out);
  }

  Var<S> operator()(Var<S> warped_ab, Var<S> mask) const {
    require(warped_ab.channels() == 2 && mask.channels() == 1, "refine: expects 2-plane ab and 1-plane mask");
    require(warped_ab.height() == mask.height() && warped_ab.width() == mask.width(),
            "refine: ab " + dims_string(warped_ab.height(), warped_ab.width()) + " vs mask " +
                dims_string(mask.height(), mask.width()));
    require(mask.height() % 2 == 0 && mask.width() % 2 == 0, "refine: resolution must be even");
    auto block = [](const Conv2d<S>& c, Var<S> x) { return nn::lrelu(nn::instance_norm(c(x))); };
    Var<S> e1 = block(c1_, nn::concat<S>({warped_ab, mask}));
    Var<S> e2 = block(c3_, block(c2_, e1));
    Var<S> up = nn::resize(e2, e1.height(), e1.width());
    Var<S> d = block(c4_, nn::concat<S>({up, e1}));
    return logit_residual(warped_ab, out_(d));
  }

 private:
  Conv2d<S> c1_, c2_, c3_, c4_, out_;
};

/// Encoder-decoder with skips over the 18-plane stack
/// (y_i, r_{i-3}, r_{i-2}, r_{i-1}, h_{i-1}, r_{i+1}, r_{i+2}, r_{i+3}, c_i).
/// The head predicts per-pixel blend weights over the nine inputs plus a
/// logit-space correction; a zero head starts as the plain average.
template <typename S>
class CombinationModule {
 public:
  CombinationModule() = default;
  CombinationModule(const std::string& name, int c)
      : e1_(name + ".enc1", 18, c, 3),
        e2_(name + ".enc2", c, 2 * c, 3, 2),
        e3_(name + ".enc3", 2 * c, 2 * c, 3, 2),
        res_(name + ".res", 2 * c),
        d2_(name + ".dec2", 4 * c, 2 * c, 3),
        d1_(name + ".dec1", 3 * c, c, 3),
        out_(name + ".out", c, 9 + 2, 3) {}
  CombinationModule(const CombinationModule&) = delete;
  CombinationModule& operator=(const CombinationModule&) = delete;

  void init(std::mt19937_64& rng) {
    for (auto* c : {&e1_, &e2_, &e3_}) c->init_glorot(rng);
    res_.init(rng);
    for (auto* c : {&d2_, &d1_, &out_}) c->init_glorot(rng);
    out_.weight().value.setZero();
  }
  void collect(std::vector<Parameter<S>*>& out) {
    for (auto* c : {&e1_, &e2_, &e3_}) c->collect(out);
    res_.collect(out);
    for (auto* c : {&d2_, &d1_, &out_}) c->collect(out);
  }

  /// inputs: the nine ab pairs in the order above. Inactive slots still feed
  /// the encoder but are left out of the blend.
  Var<S> operator()(const std::vector<Var<S>>& inputs, std::vector<bool> active = std::vector<bool>(9, true)) const {
    require(inputs.size() == 9, "combine: expects 9 ab inputs");
    for (const auto& v : inputs) {
      require(v.channels() == 2, "combine: every input must have 2 planes");
      require(v.height() == inputs[0].height() && v.width() == inputs[0].width(), "combine: resolution mismatch");
    }
    require(inputs[0].height() % 4 == 0 && inputs[0].width() % 4 == 0, "combine: resolution must be divisible by 4");
    Var<S> x1 = nn::lrelu(e1_(nn::concat(inputs)));
    Var<S> x2 = nn::lrelu(e2_(x1));
    Var<S> x3 = res_(nn::lrelu(e3_(x2)));
    Var<S> u2 = nn::lrelu(d2_(nn::concat<S>({nn::resize(x3, x2.height(), x2.width()), x2})));
    Var<S> u1 = nn::lrelu(d1_(nn::concat<S>({nn::resize(u2, x1.height(), x1.width()), x1})));
    Var<S> head = out_(u1);
    return logit_residual(nn::softmax_fuse(nn::slice_channels(head, 0, 9), inputs, active),
                          nn::slice_channels(head, 9, 2));
  }

 private:
  Conv2d<S> e1_, e2_, e3_;
  nn::ResBlock<S> res_;
  Conv2d<S> d2_, d1_, out_;
};

/// Three densely connected convs with a scaled residual.
template <typename S>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(const std::string& name, int c, int g)
      : c1_(name + ".conv1", c, g, 3), c2_(name + ".conv2", c + g, g, 3), c3_(name + ".conv3", c + 2 * g, c, 3) {}

  void init(std::mt19937_64& rng) {
    for (auto* c : {&c1_, &c2_, &c3_}) c->init_glorot(rng);
  }
  void collect(std::vector<Parameter<S>*>& out) {
    for (auto* c : {&c1_, &c2_, &c3_}) c->collect(out);
  }
  Var<S> operator()(Var<S> x) const {
    Var<S> a = nn::lrelu(c1_(x));
    Var<S> b = nn::lrelu(c2_(nn::concat<S>({x, a})));
    return nn::add(x, nn::scale(c3_(nn::concat<S>({x, a, b})), S(0.2)));
  }

 private:
  Conv2d<S> c1_, c2_, c3_;
};

/// Shared feature head (conv + residual-in-residual dense block) with one
/// upsampling tail per ratio; full-resolution gray joins at the end.
template <typename S>
class SuperResolutionModule {
 public:
  SuperResolutionModule() = default;
  SuperResolutionModule(const std::string& name, int s) : head_(name + ".head", 2, s, 3) {
    const int g = std::max(1, s / 2);
    blocks_.reserve(2);
    blocks_.emplace_back(name + ".rrdb.db1", s, g);
    blocks_.emplace_back(name + ".rrdb.db2", s, g);
    for (int r : kRatios) {
      Tail& t = tails_[r];
      const std::string tn = name + ".tail" + std::to_string(r);
      // Upsampled feature planes are halved to keep full-resolution work small.
      const int half = std::max(1, s / 2);
      for (int k = 0, rr = r, in = s; rr > 1; rr /= 2, ++k, in = half)
        t.up.emplace_back(tn + ".up" + std::to_string(k), in, 4 * half, 1);
      t.guide = Conv2d<S>(tn + ".guide", 1, 4, 3);
      t.fuse = Conv2d<S>(tn + ".fuse", half + 6, 8, 1);
      t.out = Conv2d<S>(tn + ".out", 8, 2, 3);
    }
  }
  SuperResolutionModule(const SuperResolutionModule&) = delete;
  SuperResolutionModule& operator=(const SuperResolutionModule&) = delete;

  void init(std::mt19937_64& rng) {
    head_.init_glorot(rng);
    for (auto& b : blocks_) b.init(rng);
    for (auto& [r, t] : tails_) {
      for (auto& c : t.up) c.init_glorot(rng);
      t.guide.init_glorot(rng);
      t.fuse.init_glorot(rng);
      t.out.init_glorot(rng);
      t.out.weight().value.setZero();
    }
  }
  void collect(std::vector<Parameter<S>*>& out) {
    head_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    for (auto& [r, t] : tails_) {
      for (auto& c : t.up) c.collect(out);
      t.guide.collect(out);
      t.fuse.collect(out);
      t.out.collect(out);
    }
  }
  /// Parameters of the head plus one tail.
  void collect_ratio(int ratio, std::vector<Parameter<S>*>& out) {
    head_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    Tail& t = tails_.at(ratio);
    for (auto& c : t.up) c.collect(out);
    t.guide.collect(out);
    t.fuse.collect(out);
    t.out.collect(out);
  }

  Var<S> operator()(Var<S> d_ab, Var<S> gray_full, int ratio) const {
    require(valid_ratio(ratio), "super_resolve: ratio must be 2, 4 or 8");
    require(d_ab.channels() == 2 && gray_full.channels() == 1, "super_resolve: expects 2-plane ab and 1-plane gray");
    require(gray_full.height() == ratio * d_ab.height() && gray_full.width() == ratio * d_ab.width(),
            "super_resolve: gray " + dims_string(gray_full.height(), gray_full.width()) + " is not " +
                std::to_string(ratio) + "x ab " + dims_string(d_ab.height(), d_ab.width()));
    Var<S> f = head_(d_ab);
    Var<S> trunk = f;
    for (const auto& b : blocks_) trunk = b(trunk);
    f = nn::add(f, nn::scale(trunk, S(0.2)));
    const Tail& t = tails_.at(ratio);
    for (const auto& c : t.up) f = nn::lrelu(nn::pixel_shuffle(c(f), 2));
    Var<S> base = nn::resize(d_ab, gray_full.height(), gray_full.width());
    Var<S> guide = nn::lrelu(t.guide(gray_full));
    Var<S> x = nn::lrelu(t.fuse(nn::concat<S>({f, guide, base})));
    return logit_residual(base, t.out(x));
  }

 private:
  struct Tail {
    std::vector<Conv2d<S>> up;
    Conv2d<S> guide, fuse, out;
  };
  Conv2d<S> head_;
  std::vector<DenseBlock<S>> blocks_;
  std::map<int, Tail> tails_;
};

// Correspondence ------------------------------------------------------------

/// Encoder stages 1-4 each resized to H/2 and concatenated (constant, no gradient).
template <typename S>
Tensor<S> build_feature_pyramid(const cpnet::FrozenEncoder<S>& encoder, const Tensor<S>& img) {
  require(img.c == 1 || img.c == 3, "feature pyramid: expects 1 or 3 planes");
  require(img.h % 16 == 0 && img.w % 16 == 0,
          "feature pyramid: resolution " + dims_string(img.h, img.w) + " not divisible by 16");
  Tape<S> tape(false);
  const auto feats = encoder(tape.constant(img), 4);
  int channels = 0;
  for (const auto& f : feats) channels += f.channels();
  Tensor<S> out(channels, img.h / 2, img.w / 2);
  int off = 0;
  for (const auto& f : feats) {
    out.m.middleRows(off, f.channels()) = image_ops::resize_bilinear(f.value(), out.h, out.w).m;
    off += f.channels();
  }
  return out;
}

/// Column-wise centered, unit-norm features after a 2x average pool (C x N).
template <typename S>
PlaneMatrix<S> normalized_features(const Tensor<S>& pyramid) {
  const Tensor<S> pooled = image_ops::avg_pool(pyramid, 2);
  PlaneMatrix<S> f = pooled.m;
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mean = f.colwise().mean();
  f.rowwise() -= mean;
  const Eigen::Matrix<S, 1, Eigen::Dynamic> norm = f.colwise().norm().array() + S(1e-8);
  f.array().rowwise() /= norm.array();
  return f;
}

/// S(p, q) = cosine of centered features at first-frame position p and
/// current-frame position q. N x N with N = (H/4)(W/4) of the input frame.
template <typename S>
PlaneMatrix<S> similarity_matrix(const Tensor<S>& f1, const Tensor<S>& fi) {
  require(f1.same_shape(fi), "similarity_matrix: pyramid shapes differ");
  const PlaneMatrix<S> a = normalized_features(f1);
  const PlaneMatrix<S> b = normalized_features(fi);
  nn::count_macs(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  PlaneMatrix<S> s(a.cols(), b.cols());
  s.noalias() = a.transpose() * b;
  return s;
}

/// softmax over rows (first-frame positions) of tau * S, independently per column.
template <typename S>
PlaneMatrix<S> correspondence_weights(const PlaneMatrix<S>& sim, double tau) {
  require(tau > 0, "correspondence: tau must be positive");
  PlaneMatrix<S> a = sim * static_cast<S>(tau);
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mx = a.colwise().maxCoeff();
  a.rowwise() -= mx;
  a = a.array().exp().matrix();
  const Eigen::Matrix<S, 1, Eigen::Dynamic> sum = a.colwise().sum();
  a.array().rowwise() /= sum.array();
  return a;
}

/// Attention on pooled first-frame colors: y1_low (C x N) -> C x N.
template <typename S>
PlaneMatrix<S> attend(const PlaneMatrix<S>& sim, const PlaneMatrix<S>& y1_low, double tau) {
  require(y1_low.cols() == sim.rows(), "correspondence: y1 size does not match S");
  return y1_low * correspondence_weights(sim, tau);
}

/// c_i: first-frame colors y1 (at H x W) pooled 4x, attended, upsampled back to H x W.
/// Differentiable with respect to y1.
template <typename S>
Var<S> correspondence_warp(Var<S> y1_ab, const PlaneMatrix<S>& sim, double tau) {
  require(y1_ab.height() % 4 == 0 && y1_ab.width() % 4 == 0, "correspondence: resolution must be divisible by 4");
  const int hl = y1_ab.height() / 4, wl = y1_ab.width() / 4;
  require(sim.rows() == static_cast<Eigen::Index>(hl) * wl && sim.cols() == sim.rows(),
          "correspondence: S is " + std::to_string(sim.rows()) + "x" + std::to_string(sim.cols()) +
              ", expected N = " + std::to_string(hl * wl));
  Var<S> low = nn::avg_pool(y1_ab, 4);
  Var<S> c = nn::matmul_const(low, correspondence_weights(sim, tau), hl, wl);
  return nn::resize(c, y1_ab.height(), y1_ab.width());
}

// Whole network ---------------------------------------------------------------

template <typename S>
class Ssnet {
 public:
  explicit Ssnet(const SsnetConfig& cfg)
      : cfg_(cfg),
        refine_("ssnet.refine", cfg.refinement_channels),
        combine_("ssnet.combine", cfg.combination_channels),
        sr_("ssnet.sr", cfg.sr_channels) {
    cfg_.validate();
  }
  Ssnet(const Ssnet&) = delete;
  Ssnet& operator=(const Ssnet&) = delete;

  const SsnetConfig& config() const { return cfg_; }
  SsnetConfig& config() { return cfg_; }
  const RefinementModule<S>& refine() const { return refine_; }
  const CombinationModule<S>& combine() const { return combine_; }
  const SuperResolutionModule<S>& super_resolution() const { return sr_; }
  RefinementModule<S>& refine() { return refine_; }
  SuperResolutionModule<S>& super_resolution() { return sr_; }

  void init(std::mt19937_64& rng) {
    refine_.init(rng);
    combine_.init(rng);
    sr_.init(rng);
  }
  void collect(std::vector<Parameter<S>*>& out) {
    refine_.collect(out);
    combine_.collect(out);
    sr_.collect(out);
  }
  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    collect(out);
    return out;
  }

 private:
  SsnetConfig cfg_;
  RefinementModule<S> refine_;
  CombinationModule<S> combine_;
  SuperResolutionModule<S> sr_;
};

/// One warped, masked neighbor: colors aligned to frame i plus the grays that
/// feed the occlusion mask.
template <typename S>
struct AlignedInput {
  Var<S> ab;             // on the source grid
  Tensor<float> flow;    // alignment source -> i, on i's grid
  Tensor<S> gray;        // source gray
};

template <typename S>
struct StepInputs {
  Var<S> y_i;
  Tensor<S> gray_i;
  std::array<AlignedInput<S>, 6> neighbors;
  /// Previous output d_{i-1}; when absent, h uses first_frame_ab directly.
  bool has_prev = false;
  AlignedInput<S> prev;
  Var<S> first_frame_ab;
  Var<S> corr;
  Var<S> gray_full;
};

/// Ablation switches: replace the refined short-range inputs (and h) or the
/// correspondence input with zeros.
struct StepFlags {
  bool zero_refine = false;
  bool zero_correspondence = false;
};

template <typename S>
struct StepOutput {
  Var<S> d;
  Var<S> z;
};

template <typename S>
Tensor<S> occlusion_mask(const Tensor<S>& warped_gray, const Tensor<S>& gray, double alpha) {
  Tensor<S> m(1, gray.h, gray.w);
  m.m = (-static_cast<S>(alpha) * (warped_gray.m - gray.m).array().square()).exp().matrix();
  return m;
}

/// Warp to frame i, mask by luminance agreement, refine.
template <typename S>
Var<S> refine_aligned(const Ssnet<S>& net, const AlignedInput<S>& in, const Tensor<S>& gray_i) {
  Tape<S>& tape = *in.ab.tape;
  Var<S> warped = nn::warp(in.ab, in.flow);
  Tensor<S> mask = occlusion_mask(image_ops::warp(in.gray, in.flow), gray_i, net.config().alpha);
  return net.refine()(warped, tape.constant(std::move(mask)));
}

/// Refine, combine and super-resolve frame i. Correspondence colors arrive
/// precomputed in in.corr.
template <typename S>
StepOutput<S> ssnet_step(const Ssnet<S>& net, const StepInputs<S>& in, int ratio, StepFlags flags = {}) {
  Tape<S>& tape = *in.y_i.tape;
  const int h = in.y_i.height(), w = in.y_i.width();
  auto zeros = [&] { return tape.constant(Tensor<S>::zeros(2, h, w)); };
  std::vector<Var<S>> stack;
  stack.reserve(9);
  stack.push_back(in.y_i);
  std::array<Var<S>, 6> r;
  Var<S> hprev;
  {
    nn::MacScope scope("refine");
    for (int k = 0; k < 6; ++k) r[k] = flags.zero_refine ? zeros() : refine_aligned(net, in.neighbors[k], in.gray_i);
    if (flags.zero_refine)
      hprev = zeros();
    else
      hprev = in.has_prev ? refine_aligned(net, in.prev, in.gray_i) : in.first_frame_ab;
  }
  for (int k = 0; k < 3; ++k) stack.push_back(r[k]);
  stack.push_back(hprev);
  for (int k = 3; k < 6; ++k) stack.push_back(r[k]);
  stack.push_back(flags.zero_correspondence ? zeros() : in.corr);
  Var<S> d;
  {
    nn::MacScope scope("combine");
    std::vector<bool> active(9, !flags.zero_refine);
    active[0] = true;
    active[8] = !flags.zero_correspondence;
    d = net.combine()(stack, active);
  }
  Var<S> z;
  {
    nn::MacScope scope("sr");
    z = net.super_resolution()(d, in.gray_full, ratio);
  }
  return {d, z};
}

}  // namespace svc::ssnet
