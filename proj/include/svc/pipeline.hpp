#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "svc/checkpoint.hpp"
#include "svc/flowwarp.hpp"
#include "svc/scribble.hpp"
#include "svc/ssnet.hpp"

namespace svc::pipeline {

struct ColorizeOptions {
  int sr_ratio = 2;
  ssnet::StepFlags flags;
  /// Std-dev of Gaussian noise added to the gray frames CPNet sees (masks and
  /// features keep the clean frames); 0 disables.
  double cpnet_noise = 0;
  std::uint64_t noise_seed = 0;
  /// Called after each frame's SSNet step with (frames done, total).
  std::function<void(int, int)> progress;
};

struct ColorizeResult {
  std::vector<ScribbleMap> scribbles;
  std::vector<ColorEmbedding> y;  // CPNet colors
  std::vector<SegmentationMap> seg;
  std::vector<ColorEmbedding> d;  // SSNet output at processing resolution
  std::vector<ColorEmbedding> z;  // super-resolved output
};

/// Scribbles of frame 0 carried forward by the provider's step flows.
std::vector<ScribbleMap> propagate_all(const ScribbleMap& first, int frames, flowwarp::FlowProvider& flows);

/// Neighbor index for window offset o, clamped into [0, T-1].
inline int clamp_frame(int i, int o, int t) { return std::clamp(i + o, 0, t - 1); }

/// Full inference: CPNet on every frame, then SSNet frame by frame
/// (d_{i-1} feeds step i). gray_full holds the guidance frames at
/// sr_ratio x the processing resolution of gray.
ColorizeResult colorize(const ModelState& model, const std::vector<GrayFrame>& gray,
                        const std::vector<GrayFrame>& gray_full, const ScribbleMap& first_scribbles,
                        flowwarp::FlowProvider& flows, const ColorizeOptions& options);

/// Resamples to h x w: area averaging for exact integer reductions,
/// bilinear otherwise.
Tensorf resample(const Tensorf& img, int h, int w);
inline GrayFrame resample_gray(const GrayFrame& frame, int h, int w) { return GrayFrame(resample(frame.tensor(), h, w)); }

/// Processing-resolution frames and their sr_ratio x guidance frames.
struct FrameSet {
  std::vector<GrayFrame> proc;
  std::vector<GrayFrame> full;
};
FrameSet prepare_frames(const std::vector<GrayFrame>& native, int h, int w, int sr_ratio);

/// RGB frame from gray plus predicted ab at the gray's resolution.
RgbImage compose_rgb(const GrayFrame& gray, const ColorEmbedding& ab);

}  // namespace svc::pipeline
