#include "svc/flowwarp.hpp"

#include <cmath>
#include <limits>

#include "svc/image_ops.hpp"
#include "svc/io.hpp"

namespace svc::flowwarp {

Tensorf warp_backward(const Tensorf& src, const FlowField& flow) {
  require(src.same_spatial(flow.tensor()), "warp_backward: source " + dims_string(src.h, src.w) + " vs flow " +
                                               dims_string(flow.height(), flow.width()));
  return image_ops::warp(src, flow.tensor());
}

OcclusionMask occlusion_mask(const GrayFrame& warped_gray, const GrayFrame& target_gray, double alpha) {
  require(alpha > 0.0, "occlusion_mask: alpha must be positive");
  require(warped_gray.same_size(target_gray), "occlusion_mask: shape mismatch");
  OcclusionMask mask(warped_gray.height(), warped_gray.width());
  const auto d = (warped_gray.tensor().m.array().cast<double>() - target_gray.tensor().m.array().cast<double>());
  mask.tensor().m = (-alpha * d.square()).exp().cast<float>().matrix();
  // exp underflows to 0 for huge arguments; the mask is strictly positive.
  mask.tensor().m = mask.tensor().m.array().max(std::numeric_limits<float>::min()).matrix();
  return mask;
}

FlowField compose_flows(const FlowField& a_to_b, const FlowField& b_to_c) {
  require(a_to_b.same_size(b_to_c), "compose_flows: resolution mismatch");
  FlowField out(image_ops::warp(b_to_c.tensor(), a_to_b.tensor()));
  out.tensor().m += a_to_b.tensor().m;
  return out;
}

FlowField rescale_flow(const FlowField& flow, int new_h, int new_w) {
  require(new_h >= 1 && new_w >= 1, "rescale_flow: target must be at least 1x1");
  if (new_h == flow.height() && new_w == flow.width()) return flow;
  FlowField out(image_ops::resize_bilinear(flow.tensor(), new_h, new_w));
  out.tensor().m.row(0) *= static_cast<float>(new_w) / flow.width();
  out.tensor().m.row(1) *= static_cast<float>(new_h) / flow.height();
  return out;
}

FlowField invert_flow(const FlowField& flow, int iterations) {
  FlowField g(flow.height(), flow.width());
  g.tensor().m = -flow.tensor().m;
  for (int it = 0; it < iterations; ++it) {
    Tensorf sampled = image_ops::warp(flow.tensor(), g.tensor());
    g.tensor().m = -sampled.m;
  }
  return g;
}

FlowField zero_flow(int h, int w) { return FlowField(h, w, 0.f); }

GroundTruthFlow::GroundTruthFlow(std::vector<FlowField> forward_flows, std::vector<FlowField> backward_flows)
    : forward_(std::move(forward_flows)), backward_(std::move(backward_flows)) {
  require(backward_.empty() || backward_.size() == forward_.size(),
          "GroundTruthFlow: backward flow count must match forward flow count");
}

const FlowField& GroundTruthFlow::forward_at(int t, int h, int w) {
  require(t >= 0 && t < step_count(), "flow step " + std::to_string(t) + " out of range");
  auto key = std::make_tuple(t, h, w);
  auto it = forward_cache_.find(key);
  if (it == forward_cache_.end()) it = forward_cache_.emplace(key, rescale_flow(forward_[t], h, w)).first;
  return it->second;
}

// Flow on frame t's grid pointing into frame t-1.
const FlowField& GroundTruthFlow::backward_at(int t, int h, int w) {
  auto key = std::make_tuple(t, h, w);
  auto it = backward_cache_.find(key);
  if (it == backward_cache_.end()) {
    require(t >= 1 && t <= step_count(), "flow step " + std::to_string(t - 1) + " out of range");
    FlowField b = backward_.empty() ? invert_flow(forward_at(t - 1, h, w)) : rescale_flow(backward_[t - 1], h, w);
    it = backward_cache_.emplace(key, std::move(b)).first;
  }
  return it->second;
}

FlowField GroundTruthFlow::alignment(int source, int target, int h, int w) {
  if (source == target) return zero_flow(h, w);
  FlowField acc;
  if (source > target) {
    acc = forward_at(target, h, w);
    for (int t = target + 1; t < source; ++t) acc = compose_flows(acc, forward_at(t, h, w));
  } else {
    acc = backward_at(target, h, w);
    for (int t = target - 1; t > source; --t) acc = compose_flows(acc, backward_at(t, h, w));
  }
  return acc;
}

FlowField GroundTruthFlow::step(int t, int h, int w) { return forward_at(t, h, w); }

namespace {
std::vector<FlowField> load_flow_dir(const std::filesystem::path& dir) {
  std::vector<FlowField> flows;
  for (int t = 0;; ++t) {
    const auto p = dir / io::frame_name("flow", t, "svcf");
    if (!std::filesystem::exists(p)) break;
    flows.push_back(io::read_svcf(p));
  }
  if (flows.empty()) throw LoadError((dir / io::frame_name("flow", 0, "svcf")).string(), "missing file");
  return flows;
}
}  // namespace

FileFlow::FileFlow(const std::filesystem::path& dir) : GroundTruthFlow(load_flow_dir(dir)) {}

}  // namespace svc::flowwarp
