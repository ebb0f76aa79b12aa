#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svc/nn/layers.hpp"
#include "svc/raster.hpp"

namespace svc::cpnet {

using nn::Conv2d;
using nn::Parameter;
using nn::Tape;
using nn::Var;

struct CpnetConfig {
  int base_channels = 16;
  /// Encoder downsamplings; inputs must be divisible by 2^depth.
  int depth = 5;
  int semantic_channels = 8;
  int residual_blocks = 4;
  std::uint64_t semantic_encoder_seed = 7;

  int width(int level) const { return base_channels << std::min(level / 2, 2); }
  void validate() const;
};

nlohmann::json to_json(const CpnetConfig& c);
CpnetConfig cpnet_config_from_json(const nlohmann::json& j);

inline constexpr int kEncoderStages = 5;

/// Frozen random-weight CNN standing in for a pretrained backbone. Stage s
/// (1-based) runs at 1/2^s resolution. The input is single-plane intensity;
/// RGB inputs are averaged to one plane first, which is the same as a first
/// layer whose weights are shared across the three color planes.
template <typename S>
class FrozenEncoder {
 public:
  FrozenEncoder() = default;
  FrozenEncoder(const std::string& name, int base, std::uint64_t seed) : seed_(seed) {
    int in = 1;
    for (int s = 0; s < kEncoderStages; ++s) {
      const int w = stage_width(base, s + 1);
      down_.emplace_back(name + ".stage" + std::to_string(s + 1) + ".down", in, w, 3, 2);
      conv_.emplace_back(name + ".stage" + std::to_string(s + 1) + ".conv", w, w, 3);
      in = w;
    }
    widths_.clear();
    for (int s = 1; s <= kEncoderStages; ++s) widths_.push_back(stage_width(base, s));
    generate();
  }

  static int stage_width(int base, int stage) { return base * (stage == 1 ? 1 : stage == 2 ? 2 : 4); }
  int width(int stage) const { return widths_[stage - 1]; }
  std::uint64_t seed() const { return seed_; }

  /// He-normal weights drawn from the encoder seed; always frozen.
  void generate() {
    std::mt19937_64 rng(seed_);
    auto fill = [&](Conv2d<S>& c) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / c.fan_in()));
      auto& w = c.weight().value;
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(dist(rng));
      c.bias().value.setZero();
      c.set_frozen(true);
    };
    for (std::size_t s = 0; s < down_.size(); ++s) {
      fill(down_[s]);
      fill(conv_[s]);
    }
  }

  void collect(std::vector<Parameter<S>*>& out) {
    for (std::size_t s = 0; s < down_.size(); ++s) {
      down_[s].collect(out);
      conv_[s].collect(out);
    }
  }

  /// Features of stages 1..stages for a 1-plane or 3-plane input.
  std::vector<Var<S>> operator()(Var<S> x, int stages) const {
    require(x.channels() == 1 || x.channels() == 3, "semantic encoder expects 1 or 3 planes");
    require(stages >= 1 && stages <= kEncoderStages, "semantic encoder stage out of range");
    const int div = 1 << stages;
    require(x.height() % div == 0 && x.width() % div == 0,
            "semantic encoder input " + dims_string(x.height(), x.width()) + " not divisible by " +
                std::to_string(div));
    if (x.channels() == 3) {
      Tensor<S> mean(1, x.height(), x.width());
      mean.m = x.value().m.colwise().mean();
      x = x.tape->constant(std::move(mean));
    }
    std::vector<Var<S>> feats;
    for (int s = 0; s < stages; ++s) {
      x = nn::lrelu(conv_[s](nn::lrelu(down_[s](x))));
      feats.push_back(x);
    }
    return feats;
  }

 private:
  std::uint64_t seed_ = 0;
  std::vector<int> widths_;
  std::vector<Conv2d<S>> down_, conv_;
};

/// Color-propagation network: pyramid encoder over (L, a, b, validity),
/// frozen semantic encoder over L, residual bottleneck, and a decoder with
/// skip connections feeding a color head and a segmentation branch.
template <typename S>
class Cpnet {
 public:
  struct Output {
    Var<S> color;
    Var<S> seg;
  };

  explicit Cpnet(const CpnetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.depth;
    semantic_ = FrozenEncoder<S>("cpnet.semantic", cfg_.semantic_channels, cfg_.semantic_encoder_seed);
    enc_.emplace_back("cpnet.enc0", 4, cfg_.width(0), 3);
    for (int l = 1; l <= d; ++l)
      enc_.emplace_back("cpnet.enc" + std::to_string(l), cfg_.width(l - 1), cfg_.width(l), 3, 2);
    fuse_ = Conv2d<S>("cpnet.fuse", cfg_.width(d) + semantic_.width(d), cfg_.width(d), 1);
    for (int r = 0; r < cfg_.residual_blocks; ++r)
      res_.emplace_back("cpnet.res" + std::to_string(r), cfg_.width(d));
    for (int l = d - 1; l >= 0; --l)
      dec_.emplace_back("cpnet.dec" + std::to_string(l), cfg_.width(l + 1) + cfg_.width(l), cfg_.width(l), 3);
    color_head_ = Conv2d<S>("cpnet.color_head", cfg_.width(0), 2, 3);
    int seg_in = 0;
    for (int l : seg_levels()) seg_in += cfg_.width(l);
    seg_fuse_ = Conv2d<S>("cpnet.seg_fuse", seg_in, cfg_.width(0), 1);
    seg_head_ = Conv2d<S>("cpnet.seg_head", cfg_.width(0), 1, 3);
  }
  Cpnet(const Cpnet&) = delete;
  Cpnet& operator=(const Cpnet&) = delete;

  const CpnetConfig& config() const { return cfg_; }
  const FrozenEncoder<S>& semantic() const { return semantic_; }

  /// Glorot for learnable layers; the semantic encoder regenerates from its own seed.
  void init(std::mt19937_64& rng) {
    for (auto& c : enc_) c.init_glorot(rng);
    fuse_.init_glorot(rng);
    for (auto& r : res_) r.init(rng);
    for (auto& c : dec_) c.init_glorot(rng);
    color_head_.init_glorot(rng);
    seg_fuse_.init_glorot(rng);
    seg_head_.init_glorot(rng);
    semantic_.generate();
  }

  void collect(std::vector<Parameter<S>*>& out) {
    for (auto& c : enc_) c.collect(out);
    fuse_.collect(out);
    for (auto& r : res_) r.collect(out);
    for (auto& c : dec_) c.collect(out);
    color_head_.collect(out);
    seg_fuse_.collect(out);
    seg_head_.collect(out);
    semantic_.collect(out);
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    collect(out);
    return out;
  }

  /// Decoder levels feeding the segmentation branch (the last three).
  std::vector<int> seg_levels() const {
    std::vector<int> levels;
    for (int l = std::min(2, cfg_.depth - 1); l >= 0; --l) levels.push_back(l);
    return levels;
  }

  Output operator()(Var<S> gray, Var<S> scribbles) const {
    require(gray.channels() == 1 && scribbles.channels() == 3, "cpnet: expects 1-plane gray and 3-plane scribbles");
    require(gray.height() == scribbles.height() && gray.width() == scribbles.width(),
            "cpnet: gray " + dims_string(gray.height(), gray.width()) + " vs scribbles " +
                dims_string(scribbles.height(), scribbles.width()));
    const int d = cfg_.depth, div = 1 << d;
    require(gray.height() % div == 0 && gray.width() % div == 0,
            "cpnet: resolution " + dims_string(gray.height(), gray.width()) + " not divisible by " +
                std::to_string(div));
    const int h = gray.height(), w = gray.width();

    std::vector<Var<S>> skips;
    Var<S> x = nn::lrelu(enc_[0](nn::concat<S>({gray, scribbles})));
    skips.push_back(x);
    for (int l = 1; l <= d; ++l) {
      x = nn::lrelu(enc_[l](x));
      skips.push_back(x);
    }
    const auto sem = semantic_(gray, d);
    x = nn::lrelu(fuse_(nn::concat<S>({x, sem.back()})));
    for (const auto& r : res_) x = r(x);

    std::vector<Var<S>> dec_out(d);
    for (int l = d - 1, k = 0; l >= 0; --l, ++k) {
      x = nn::resize(x, skips[l].height(), skips[l].width());
      x = nn::lrelu(dec_[k](nn::concat<S>({x, skips[l]})));
      dec_out[l] = x;
    }
    Var<S> color = nn::sigmoid(color_head_(x));

    std::vector<Var<S>> seg_parts;
    for (int l : seg_levels()) seg_parts.push_back(nn::resize(dec_out[l], h, w));
    Var<S> seg = nn::sigmoid(seg_head_(nn::lrelu(seg_fuse_(nn::concat(seg_parts)))));
    return {color, seg};
  }

 private:
  CpnetConfig cfg_;
  FrozenEncoder<S> semantic_;
  std::vector<Conv2d<S>> enc_;
  Conv2d<S> fuse_;
  std::vector<nn::ResBlock<S>> res_;
  std::vector<Conv2d<S>> dec_;
  Conv2d<S> color_head_, seg_fuse_, seg_head_;
};

/// Inference convenience: runs on a no-grad tape.
struct CpnetResult {
  ColorEmbedding color;
  SegmentationMap seg;
};
CpnetResult cpnet_forward(const Cpnet<float>& net, const GrayFrame& gray, const ScribbleMap& scribbles);

}  // namespace svc::cpnet
