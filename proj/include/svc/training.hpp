#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svc/checkpoint.hpp"
#include "svc/nn/ops.hpp"
#include "svc/ssnet.hpp"
#include "svc/synthdata.hpp"

namespace svc::training {

using nn::Var;

// Losses ----------------------------------------------------------------------

/// Mean absolute error over all ab values.
template <typename S>
Var<S> loss_color_cp(Var<S> y_ab, Var<S> gt_ab) {
  return nn::l1_loss(y_ab, gt_ab);
}

/// Mean absolute error over the segmentation plane.
template <typename S>
Var<S> loss_seg_cp(Var<S> p, Var<S> q) {
  return nn::l1_loss(p, q);
}

template <typename S>
Var<S> loss_cp(Var<S> y_ab, Var<S> gt_ab, Var<S> p, Var<S> q, double lambda_s) {
  return nn::add(loss_color_cp(y_ab, gt_ab), nn::scale(loss_seg_cp(p, q), static_cast<S>(lambda_s)));
}

/// Low-resolution plus full-resolution L1.
template <typename S>
Var<S> loss_ss(Var<S> d_ab, Var<S> gt_low_ab, Var<S> z_ab, Var<S> gt_full_ab) {
  return nn::add(nn::l1_loss(d_ab, gt_low_ab), nn::l1_loss(z_ab, gt_full_ab));
}

template <typename S>
Var<S> loss_joint(Var<S> y_ab, Var<S> gt_ab, Var<S> p, Var<S> q, double lambda_s, Var<S> d_ab, Var<S> gt_low_ab,
                  Var<S> z_ab, Var<S> gt_full_ab) {
  return nn::add(loss_cp(y_ab, gt_ab, p, q, lambda_s), loss_ss(d_ab, gt_low_ab, z_ab, gt_full_ab));
}

// Metrics ---------------------------------------------------------------------

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all values of [0,1] data; 100 dB when identical.
double psnr(const Tensorf& pred, const Tensorf& gt);
/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) and channels.
double ssim(const Tensorf& pred, const Tensorf& gt);
/// Mean over t of the occlusion-masked L1 between frame t+1 warped by
/// flows[t] and frame t. The mask comes from the channel mean of each frame.
double temporal_warp_error(const std::vector<Tensorf>& frames, const std::vector<FlowField>& flows,
                           double alpha = 200.0);

struct MetricReport {
  double psnr_db = 0;
  double ssim = 0;
  double temporal_warp_error = 0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;

  nlohmann::json to_json() const;
};

/// PSNR/SSIM per frame on RGB, warp error on the predicted sequence.
MetricReport evaluate(const std::vector<RgbImage>& pred, const std::vector<RgbImage>& gt,
                      const std::vector<FlowField>& flows);

// Schedule ---------------------------------------------------------------------

enum class Stage { kCpnetWarmup, kRmWarmup, kSrWarmup, kJoint };

Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

struct TrainConfig {
  Stage stage = Stage::kCpnetWarmup;
  int iterations = 1000;
  /// Learning rate of the stage (warm-ups); joint uses lr_cpnet / lr_ssnet.
  double lr_initial = 1e-3;
  double lr_cpnet = 1e-4;
  double lr_ssnet = 5e-4;
  /// Step at which every learning rate halves once (<= 0: never).
  int lr_halve_at = 0;
  int batch_size = 1;
  double lambda_s = 0.1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 1;
  /// Processing resolution; clips are area-downsampled to it.
  int height = 128;
  int width = 224;
  int sr_ratio = 2;
  /// Full-resolution crop edge used by the SR warm-up.
  int sr_crop = 128;
  int scribble_radius = 2;
  /// Std-dev of Gaussian noise added to the gray frames CPNet sees during
  /// joint training, drawn independently per frame; masks and features keep
  /// the clean frames.
  double cpnet_noise = 0;
  ssnet::StepFlags flags;

  void validate() const;
};

/// Reads the stage-independent keys; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, Stage stage);

struct LossRecord {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

struct StageResult {
  std::vector<LossRecord> curve;
};

/// Runs one stage in place on state. Throws ConfigError if a joint run is
/// requested before all three warm-ups completed.
StageResult run_stage(const TrainConfig& config, const std::vector<synthdata::VideoClip>& data, ModelState& state);

void write_loss_csv(const std::vector<LossRecord>& curve, const std::filesystem::path& path);

/// Per-frame scribble protocol for training: none with probability 0.5,
/// otherwise 1..40 points sampled from the ground truth.
ScribbleMap random_scribbles(const ColorEmbedding& gt_ab, int radius, std::mt19937_64& rng);

}  // namespace svc::training
