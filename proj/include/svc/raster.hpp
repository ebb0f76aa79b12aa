#pragma once

#include <string>
#include <utility>

#include "svc/error.hpp"
#include "svc/tensor.hpp"

namespace svc {

/// Fixed-channel float raster with a tag so that, e.g., a flow field cannot be
/// passed where a color embedding is expected.
template <int Channels, typename Tag>
class Raster {
 public:
  static constexpr int kChannels = Channels;

  Raster() : t_(Channels, 0, 0) {}
  Raster(int height, int width, float fill = 0.f) : t_(Channels, height, width, fill) {}
  explicit Raster(Tensorf t) : t_(std::move(t)) {
    require(t_.c == Channels, "raster expects " + std::to_string(Channels) + " channels, got " +
                                  std::to_string(t_.c));
  }

  int height() const { return t_.h; }
  int width() const { return t_.w; }
  bool empty() const { return t_.h == 0 || t_.w == 0; }

  float& operator()(int ch, int y, int x) { return t_(ch, y, x); }
  float operator()(int ch, int y, int x) const { return t_(ch, y, x); }

  const Tensorf& tensor() const { return t_; }
  Tensorf& tensor() { return t_; }

  template <int C2, typename OtherTag>
  bool same_size(const Raster<C2, OtherTag>& o) const {
    return height() == o.height() && width() == o.width();
  }

 private:
  Tensorf t_;
};

using GrayFrame = Raster<1, struct GrayTag>;
using ColorEmbedding = Raster<2, struct ChromaTag>;
using RgbImage = Raster<3, struct RgbTag>;
using FlowField = Raster<2, struct FlowTag>;
using OcclusionMask = Raster<1, struct MaskTag>;
using SegmentationMap = Raster<1, struct SegTag>;
/// Planes: a, b, validity.
using ScribbleMap = Raster<3, struct ScribbleTag>;

/// (a, b) encoding of the neutral axis: (0 + 128) / 255.
inline constexpr float kNeutralChroma = 128.f / 255.f;

inline void require_unit_range(const Tensorf& t, const std::string& what) {
  require(t.all_finite(), what + " contains non-finite values");
  require(t.m.size() == 0 || (t.m.minCoeff() >= 0.f && t.m.maxCoeff() <= 1.f),
          what + " has values outside [0,1]");
}

}  // namespace svc
