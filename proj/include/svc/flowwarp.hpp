#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "svc/raster.hpp"

namespace svc::flowwarp {

/// Mask sensitivity and attention temperature default (both 200 on [0,1] data).
inline constexpr double kDefaultAlpha = 200.0;

/// out(p) = bilinear sample of src at p + flow(p), border replicated.
Tensorf warp_backward(const Tensorf& src, const FlowField& flow);

template <int C, typename Tag>
Raster<C, Tag> warp_backward(const Raster<C, Tag>& src, const FlowField& flow) {
  return Raster<C, Tag>(warp_backward(src.tensor(), flow));
}

/// exp(-alpha * (warped - target)^2) per pixel.
OcclusionMask occlusion_mask(const GrayFrame& warped_gray, const GrayFrame& target_gray,
                             double alpha = kDefaultAlpha);

/// f_a2c(p) = f_a2b(p) + f_b2c(p + f_a2b(p)).
FlowField compose_flows(const FlowField& a_to_b, const FlowField& b_to_c);

/// Bilinear resize with displacements scaled by the per-axis ratio.
FlowField rescale_flow(const FlowField& flow, int new_h, int new_w);

/// Numerical inverse by fixed-point iteration: g(q) = -f(q + g(q)).
FlowField invert_flow(const FlowField& flow, int iterations = 12);

FlowField zero_flow(int h, int w);

/// Source of alignment flows. alignment(source, target) is defined on the
/// target frame's grid, so warp_backward(frame[source], it) lines up with
/// frame[target]. step(t) is the forward flow t -> t+1 on frame t's grid
/// (the clip's stored convention) used to forward-splat scribbles.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual FlowField alignment(int source, int target, int h, int w) = 0;
  virtual FlowField step(int t, int h, int w) = 0;
};

class ZeroFlow final : public FlowProvider {
 public:
  FlowField alignment(int, int, int h, int w) override { return zero_flow(h, w); }
  FlowField step(int, int h, int w) override { return zero_flow(h, w); }
};

/// Builds multi-step alignments from per-step forward flows; backward steps
/// use the given inverses, or numerically inverted forward flows when none
/// are given. Results are cached per resolution.
class GroundTruthFlow : public FlowProvider {
 public:
  explicit GroundTruthFlow(std::vector<FlowField> forward_flows, std::vector<FlowField> backward_flows = {});

  FlowField alignment(int source, int target, int h, int w) override;
  FlowField step(int t, int h, int w) override;
  int step_count() const { return static_cast<int>(forward_.size()); }

 private:
  const FlowField& forward_at(int t, int h, int w);
  const FlowField& backward_at(int t, int h, int w);

  std::vector<FlowField> forward_;
  std::vector<FlowField> backward_;
  std::map<std::tuple<int, int, int>, FlowField> forward_cache_;
  std::map<std::tuple<int, int, int>, FlowField> backward_cache_;
};

/// Loads flow_%05d.svcf files from a clip directory.
class FileFlow final : public GroundTruthFlow {
 public:
  explicit FileFlow(const std::filesystem::path& dir);
};

}  // namespace svc::flowwarp
