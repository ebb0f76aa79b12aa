#include "svc/pipeline.hpp"

#include <algorithm>
#include <random>

#include "svc/colorspace.hpp"
#include "svc/image_ops.hpp"

namespace svc::pipeline {

using nn::Tape;
using nn::Var;

std::vector<ScribbleMap> propagate_all(const ScribbleMap& first, int frames, flowwarp::FlowProvider& flows) {
  std::vector<ScribbleMap> out{first};
  for (int t = 1; t < frames; ++t)
    out.push_back(scribble::propagate_scribbles(out.back(), flows.step(t - 1, first.height(), first.width())));
  return out;
}

RgbImage compose_rgb(const GrayFrame& gray, const ColorEmbedding& ab) {
  ColorEmbedding clamped(ab.tensor());
  clamped.tensor().m = clamped.tensor().m.array().max(0.f).min(1.f).matrix();
  return colorspace::lab_to_rgb(gray, clamped);
}

Tensorf resample(const Tensorf& img, int h, int w) {
  require(h >= 1 && w >= 1, "resample: target must be at least 1x1");
  if (img.h == h && img.w == w) return img;
  if (img.h % h == 0 && img.w % w == 0 && img.h / h == img.w / w) return image_ops::avg_pool(img, img.h / h);
  return image_ops::resize_bilinear(img, h, w);
}

FrameSet prepare_frames(const std::vector<GrayFrame>& native, int h, int w, int sr_ratio) {
  FrameSet out;
  for (const auto& f : native) {
    out.proc.push_back(resample_gray(f, h, w));
    out.full.push_back(resample_gray(f, h * sr_ratio, w * sr_ratio));
  }
  return out;
}

ColorizeResult colorize(const ModelState& model, const std::vector<GrayFrame>& gray,
                        const std::vector<GrayFrame>& gray_full, const ScribbleMap& first_scribbles,
                        flowwarp::FlowProvider& flows, const ColorizeOptions& options) {
  const int t_count = static_cast<int>(gray.size());
  require(t_count >= 1, "colorize: no frames");
  require(gray_full.size() == gray.size(), "colorize: guidance frame count differs");
  require(ssnet::valid_ratio(options.sr_ratio), "colorize: sr_ratio must be 2, 4 or 8");
  const int h = gray[0].height(), w = gray[0].width();
  require(first_scribbles.height() == h && first_scribbles.width() == w,
          "colorize: scribbles " + dims_string(first_scribbles.height(), first_scribbles.width()) +
              " vs frames " + dims_string(h, w));
  for (int t = 0; t < t_count; ++t) {
    require(gray[t].height() == h && gray[t].width() == w, "colorize: frames differ in resolution");
    require(gray_full[t].height() == h * options.sr_ratio && gray_full[t].width() == w * options.sr_ratio,
            "colorize: guidance frame " + dims_string(gray_full[t].height(), gray_full[t].width()) + " is not " +
                std::to_string(options.sr_ratio) + "x " + dims_string(h, w));
  }
  const auto& cp = *model.cpnet;
  const auto& ss = *model.ssnet;

  ColorizeResult res;
  res.scribbles = propagate_all(first_scribbles, t_count, flows);
  {
    nn::MacScope scope("cpnet");
    std::mt19937_64 rng(options.noise_seed);
    std::normal_distribution<float> noise(0.f, static_cast<float>(options.cpnet_noise));
    for (int t = 0; t < t_count; ++t) {
      GrayFrame input = gray[t];
      if (options.cpnet_noise > 0)
        for (Eigen::Index k = 0; k < input.tensor().m.size(); ++k) {
          float& v = input.tensor().m.data()[k];
          v = std::clamp(v + noise(rng), 0.f, 1.f);
        }
      auto out = cpnet::cpnet_forward(cp, input, res.scribbles[t]);
      res.y.push_back(std::move(out.color));
      res.seg.push_back(std::move(out.seg));
    }
  }

  Tensorf f1;
  {
    nn::MacScope scope("correspondence");
    f1 = ssnet::build_feature_pyramid(cp.semantic(), compose_rgb(gray[0], res.y[0]).tensor());
  }
  for (int i = 0; i < t_count; ++i) {
    Tape<float> tape(false);
    ssnet::StepInputs<float> in;
    in.y_i = tape.constant(res.y[i].tensor());
    in.gray_i = gray[i].tensor();
    for (int k = 0; k < 6; ++k) {
      const int j = clamp_frame(i, ssnet::kWindow[k], t_count);
      in.neighbors[k] = {tape.constant(res.y[j].tensor()),
                         j == i ? flowwarp::zero_flow(h, w).tensor() : flows.alignment(j, i, h, w).tensor(),
                         gray[j].tensor()};
    }
    in.first_frame_ab = tape.constant(res.y[0].tensor());
    if (i > 0) {
      in.has_prev = true;
      in.prev = {tape.constant(res.d[i - 1].tensor()), flows.alignment(i - 1, i, h, w).tensor(), gray[i - 1].tensor()};
    }
    {
      nn::MacScope scope("correspondence");
      const Tensorf fi = ssnet::build_feature_pyramid(cp.semantic(), gray[i].tensor());
      in.corr = ssnet::correspondence_warp(in.first_frame_ab, ssnet::similarity_matrix(f1, fi), ss.config().tau);
    }
    in.gray_full = tape.constant(gray_full[i].tensor());
    const auto out = ssnet::ssnet_step(ss, in, options.sr_ratio, options.flags);
    res.d.emplace_back(out.d.value());
    res.z.emplace_back(out.z.value());
    if (options.progress) options.progress(i + 1, t_count);
  }
  return res;
}

}  // namespace svc::pipeline
