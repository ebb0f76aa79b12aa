#include "svc/training.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <random>

#include "svc/colorspace.hpp"
#include "svc/flowwarp.hpp"
#include "svc/image_ops.hpp"
#include "svc/nn/adam.hpp"
#include "svc/scribble.hpp"

namespace svc::training {

using nn::Tape;
using synthdata::VideoClip;
using Grads = Tape<float>::ParamGrads;

Stage parse_stage(const std::string& s) {
  if (s == "cpnet_warmup") return Stage::kCpnetWarmup;
  if (s == "ssnet_rm_warmup") return Stage::kRmWarmup;
  if (s == "ssnet_sr_warmup") return Stage::kSrWarmup;
  if (s == "joint") return Stage::kJoint;
  throw ConfigError("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kCpnetWarmup: return "cpnet_warmup";
    case Stage::kRmWarmup: return "ssnet_rm_warmup";
    case Stage::kSrWarmup: return "ssnet_sr_warmup";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (!(lr_initial > 0) || !(lr_cpnet > 0) || !(lr_ssnet > 0)) throw ConfigError("learning rates must be positive");
  if (lambda_s < 0) throw ConfigError("lambda_s must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0)
    throw ConfigError("processing resolution must be a positive multiple of 32");
  if (!ssnet::valid_ratio(sr_ratio)) throw ConfigError("sr_ratio must be 2, 4 or 8");
  if (!(cpnet_noise >= 0)) throw ConfigError("cpnet_noise must be non-negative");
  if (sr_crop < 16 || sr_crop % 8 != 0) throw ConfigError("sr_crop must be a multiple of 8, at least 16");
}

TrainConfig train_config_from_json(const nlohmann::json& j, Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.iterations = j.value("iterations", c.iterations);
  c.lr_initial = j.value("lr_initial", c.lr_initial);
  c.lr_cpnet = j.value("lr_cpnet", c.lr_cpnet);
  c.lr_ssnet = j.value("lr_ssnet", c.lr_ssnet);
  c.lr_halve_at = j.value("lr_halve_at", c.lr_halve_at);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lambda_s = j.value("lambda_s", c.lambda_s);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.seed = j.value("seed", c.seed);
  if (j.contains("resolution")) {
    c.height = j["resolution"].at(0).get<int>();
    c.width = j["resolution"].at(1).get<int>();
  }
  c.sr_ratio = j.value("sr_ratio", c.sr_ratio);
  c.sr_crop = j.value("sr_crop", c.sr_crop);
  c.scribble_radius = j.value("scribble_radius", c.scribble_radius);
  c.cpnet_noise = j.value("cpnet_noise", c.cpnet_noise);
  c.flags.zero_refine = j.value("zero_refine", false);
  c.flags.zero_correspondence = j.value("zero_correspondence", false);
  c.validate();
  return c;
}

void write_loss_csv(const std::vector<LossRecord>& curve, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw LoadError(path.string(), "cannot write loss curve");
  os << "step,loss,lr\n";
  char buf[96];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", r.step, r.loss, r.lr);
    os << buf;
  }
}

ScribbleMap random_scribbles(const ColorEmbedding& gt_ab, int radius, std::mt19937_64& rng) {
  std::bernoulli_distribution use(0.5);
  if (!use(rng)) return scribble::empty_map(gt_ab.height(), gt_ab.width());
  std::uniform_int_distribution<int> count(1, scribble::kMaxScribbles);
  const auto pts = scribble::sample_scribbles(gt_ab, count(rng), radius, rng);
  return scribble::rasterize(pts, gt_ab.height(), gt_ab.width(), radius);
}

namespace {

void add_grads(Grads& into, const Grads& from) {
  for (const auto& [p, g] : from) {
    auto [it, inserted] = into.try_emplace(p, g);
    if (!inserted) it->second += g;
  }
}

int exact_factor(int big, int small, const std::string& what) {
  if (small <= 0 || big % small != 0)
    throw ConfigError(what + ": " + std::to_string(big) + " is not a multiple of " + std::to_string(small));
  return big / small;
}

/// Clip views at processing resolution plus cached alignment flows.
struct PreparedClip {
  VideoClip proc;
  std::unique_ptr<flowwarp::FlowProvider> flows;
};

PreparedClip prepare(const VideoClip& native, const TrainConfig& cfg) {
  const int f = exact_factor(native.height(), cfg.height, "clip height vs processing height");
  if (native.width() != cfg.width * f) throw ConfigError("clip aspect does not match the processing resolution");
  PreparedClip p;
  p.proc = synthdata::downsample_clip(native, f);
  if (p.proc.has_flows())
    p.flows = std::make_unique<flowwarp::GroundTruthFlow>(p.proc.flows, p.proc.backward_flows);
  else
    p.flows = std::make_unique<flowwarp::ZeroFlow>();
  return p;
}

template <typename R>
R crop(const R& r, int y0, int x0, int h, int w) {
  R out(h, w);
  for (int c = 0; c < R::kChannels; ++c) out.tensor().plane(c) = r.tensor().plane(c).block(y0, x0, h, w);
  return out;
}

double lr_at(double base, const TrainConfig& cfg, int step) {
  return (cfg.lr_halve_at > 0 && step >= cfg.lr_halve_at) ? base * 0.5 : base;
}

class Runner {
 public:
  Runner(const TrainConfig& cfg, const std::vector<VideoClip>& data, ModelState& st)
      : cfg_(cfg), data_(data), st_(st), rng_(cfg.seed), adam_(cfg.adam_beta1, cfg.adam_beta2) {}

  StageResult run() {
    StageResult res;
    for (int step = 0; step < cfg_.iterations; ++step) {
      Grads grads;
      double loss = 0;
      for (int b = 0; b < cfg_.batch_size; ++b) {
        Tape<float> tape(true);
        Var<float> l = sample_loss(tape);
        tape.backward(l);
        add_grads(grads, tape.param_grads());
        loss += static_cast<double>(l.value().m(0, 0));
      }
      loss /= cfg_.batch_size;
      if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss at step " + std::to_string(step));
      const double scale = 1.0 / cfg_.batch_size;
      double logged_lr;
      if (cfg_.stage == Stage::kJoint) {
        adam_.step(cpnet_params(), grads, lr_at(cfg_.lr_cpnet, cfg_, step), scale);
        logged_lr = lr_at(cfg_.lr_ssnet, cfg_, step);
        adam_.step(st_.ssnet->parameters(), grads, logged_lr, scale);
      } else {
        logged_lr = lr_at(cfg_.lr_initial, cfg_, step);
        adam_.step(trained_params(), grads, logged_lr, scale);
      }
      res.curve.push_back({step, loss, logged_lr});
    }
    return res;
  }

 private:
  std::vector<nn::Parameter<float>*> cpnet_params() { return st_.cpnet->parameters(); }

  std::vector<nn::Parameter<float>*> trained_params() {
    std::vector<nn::Parameter<float>*> out;
    switch (cfg_.stage) {
      case Stage::kCpnetWarmup: return cpnet_params();
      case Stage::kRmWarmup: st_.ssnet->refine().collect(out); return out;
      case Stage::kSrWarmup: st_.ssnet->super_resolution().collect(out); return out;
      case Stage::kJoint: break;
    }
    return st_.parameters();
  }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Tensorf perturbed(const Tensorf& g) {
    if (cfg_.cpnet_noise <= 0) return g;
    std::normal_distribution<float> nd(0.f, static_cast<float>(cfg_.cpnet_noise));
    Tensorf out = g;
    for (Eigen::Index k = 0; k < out.m.size(); ++k) out.m.data()[k] = std::clamp(out.m.data()[k] + nd(rng_), 0.f, 1.f);
    return out;
  }

  PreparedClip& clip(int k) {
    auto it = prepared_.find(k);
    if (it == prepared_.end()) it = prepared_.emplace(k, prepare(data_[k], cfg_)).first;
    return it->second;
  }

  Var<float> sample_loss(Tape<float>& tape) {
    switch (cfg_.stage) {
      case Stage::kCpnetWarmup: return cpnet_loss(tape);
      case Stage::kRmWarmup: return rm_loss(tape);
      case Stage::kSrWarmup: return sr_loss(tape);
      case Stage::kJoint: return joint_loss(tape);
    }
    throw std::logic_error("unhandled stage");
  }

  Var<float> cpnet_loss(Tape<float>& tape) {
    const int k = uniform(0, static_cast<int>(data_.size()) - 1);
    const VideoClip& c = clip(k).proc;
    const int t = uniform(0, c.frame_count() - 1);
    const ScribbleMap s = random_scribbles(c.ab[t], cfg_.scribble_radius, rng_);
    auto out = (*st_.cpnet)(tape.constant(c.gray[t].tensor()), tape.constant(s.tensor()));
    return loss_cp(out.color, tape.constant(c.ab[t].tensor()), out.seg, tape.constant(c.seg[t].tensor()),
                   cfg_.lambda_s);
  }

  /// Self-reconstruction: a neighbor's true colors aligned to frame t must
  /// come back as frame t's colors; offset 0 feeds the clean frame with mask 1.
  Var<float> rm_loss(Tape<float>& tape) {
    const int k = uniform(0, static_cast<int>(data_.size()) - 1);
    PreparedClip& pc = clip(k);
    const VideoClip& c = pc.proc;
    const int t = uniform(0, c.frame_count() - 1);
    const int o = uniform(-3, 3);
    const int j = std::clamp(t + o, 0, c.frame_count() - 1);
    const int h = c.height(), w = c.width();
    Var<float> gt = tape.constant(c.ab[t].tensor());
    Var<float> out;
    if (j == t) {
      out = st_.ssnet->refine()(gt, tape.constant(Tensorf(1, h, w, 1.f)));
    } else {
      ssnet::AlignedInput<float> in{tape.constant(c.ab[j].tensor()), pc.flows->alignment(j, t, h, w).tensor(),
                                    c.gray[j].tensor()};
      out = ssnet::refine_aligned(*st_.ssnet, in, c.gray[t].tensor());
    }
    return nn::l1_loss(out, gt);
  }

  /// Reconstruct a full-resolution crop from its area-downsampled colors.
  Var<float> sr_loss(Tape<float>& tape) {
    const int k = uniform(0, static_cast<int>(data_.size()) - 1);
    const VideoClip& native = data_[k];
    const int t = uniform(0, native.frame_count() - 1);
    const int r = ssnet::kRatios[uniform(0, 2)];
    const int ch = std::min(cfg_.sr_crop, native.height() / 8 * 8);
    const int cw = std::min(cfg_.sr_crop, native.width() / 8 * 8);
    const int y0 = 8 * uniform(0, (native.height() - ch) / 8);
    const int x0 = 8 * uniform(0, (native.width() - cw) / 8);
    const ColorEmbedding gt = crop(native.ab[t], y0, x0, ch, cw);
    const GrayFrame gray = crop(native.gray[t], y0, x0, ch, cw);
    Var<float> low = tape.constant(image_ops::avg_pool(gt.tensor(), r));
    Var<float> z = st_.ssnet->super_resolution()(low, tape.constant(gray.tensor()), r);
    return nn::l1_loss(z, tape.constant(gt.tensor()));
  }

  struct JointBatch {
    VideoClip proc;
    VideoClip full;
    std::unique_ptr<flowwarp::GroundTruthFlow> flows;
    std::map<int, Tensorf> pyramids;
  };

  JointBatch& batch(int k, int t) {
    auto key = std::make_pair(k, t);
    auto it = batches_.find(key);
    if (it != batches_.end()) return it->second;
    const VideoClip& native = data_[k];
    const int f = exact_factor(native.height(), cfg_.height, "clip height vs processing height");
    const int ff = exact_factor(native.height(), cfg_.height * cfg_.sr_ratio, "clip height vs output height");
    JointBatch b;
    b.proc = synthdata::make_training_batch_at(clip(k).proc, t);
    VideoClip color_only;
    color_only.gray = native.gray;
    color_only.ab = native.ab;
    b.full = synthdata::downsample_clip(synthdata::make_training_batch_at(color_only, t), ff);
    (void)f;
    b.flows = std::make_unique<flowwarp::GroundTruthFlow>(b.proc.flows, b.proc.backward_flows);
    return batches_.emplace(key, std::move(b)).first->second;
  }

  Var<float> joint_loss(Tape<float>& tape) {
    const int k = uniform(0, static_cast<int>(data_.size()) - 1);
    const int t0 = uniform(0, data_[k].frame_count() - 7);
    JointBatch& b = batch(k, t0);
    const VideoClip& c = b.proc;
    const int i = uniform(3, 9);
    const int h = c.height(), w = c.width();
    const auto& cp = *st_.cpnet;
    const auto& ss = *st_.ssnet;

    std::map<int, Tensorf> noisy;
    for (int f : {0, i - 3, i - 2, i - 1, i, i + 1, i + 2, i + 3}) noisy.emplace(f, perturbed(c.gray[f].tensor()));
    auto run_cpnet = [&](Tape<float>& tp, int f) {
      const ScribbleMap s = random_scribbles(c.ab[f], cfg_.scribble_radius, rng_);
      return cp(tp.constant(noisy.at(f)), tp.constant(s.tensor()));
    };
    auto out_i = run_cpnet(tape, i);
    auto out_0 = run_cpnet(tape, 0);
    // Neighbors enter as constants; their CPNet passes carry no gradient.
    std::array<Var<float>, 6> ys;
    for (int n = 0; n < 6; ++n) {
      Tape<float> frozen(false);
      ys[n] = tape.constant(run_cpnet(frozen, i + ssnet::kWindow[n]).color.value());
    }

    ssnet::StepInputs<float> in;
    in.y_i = out_i.color;
    in.gray_i = c.gray[i].tensor();
    for (int n = 0; n < 6; ++n) {
      const int j = i + ssnet::kWindow[n];
      in.neighbors[n] = {ys[n], b.flows->alignment(j, i, h, w).tensor(), c.gray[j].tensor()};
    }
    // The previous output slot sees the detached CPNet colors of frame i-1.
    in.has_prev = true;
    in.prev = {ys[2], in.neighbors[2].flow, c.gray[i - 1].tensor()};
    in.first_frame_ab = out_0.color;
    {
      const Tensorf f1 = ssnet::build_feature_pyramid(
          cp.semantic(), colorspace::lab_to_rgb(c.gray[0], ColorEmbedding(out_0.color.value())).tensor());
      auto pit = b.pyramids.find(i);
      if (pit == b.pyramids.end())
        pit = b.pyramids.emplace(i, ssnet::build_feature_pyramid(cp.semantic(), c.gray[i].tensor())).first;
      in.corr = ssnet::correspondence_warp(out_0.color, ssnet::similarity_matrix(f1, pit->second), ss.config().tau);
    }
    in.gray_full = tape.constant(b.full.gray[i].tensor());
    const auto out = ssnet::ssnet_step(ss, in, cfg_.sr_ratio, cfg_.flags);

    Var<float> l = loss_joint(out_i.color, tape.constant(c.ab[i].tensor()), out_i.seg, tape.constant(c.seg[i].tensor()),
                              cfg_.lambda_s, out.d, tape.constant(c.ab[i].tensor()), out.z,
                              tape.constant(b.full.ab[i].tensor()));
    Var<float> l0 = loss_cp(out_0.color, tape.constant(c.ab[0].tensor()), out_0.seg, tape.constant(c.seg[0].tensor()),
                            cfg_.lambda_s);
    return nn::add(l, l0);
  }

  const TrainConfig& cfg_;
  const std::vector<VideoClip>& data_;
  ModelState& st_;
  std::mt19937_64 rng_;
  nn::Adam<float> adam_;
  std::map<int, PreparedClip> prepared_;
  std::map<std::pair<int, int>, JointBatch> batches_;
};

}  // namespace

StageResult run_stage(const TrainConfig& config, const std::vector<VideoClip>& data, ModelState& state) {
  config.validate();
  if (data.empty()) throw ConfigError("no training clips");
  for (const auto& c : data) {
    c.validate();
    if (!c.has_color()) throw ConfigError("training clips need color ground truth");
  }
  const bool needs_seg = config.stage == Stage::kCpnetWarmup || config.stage == Stage::kJoint;
  if (needs_seg)
    for (const auto& c : data)
      if (!c.has_seg()) throw ConfigError("stage " + to_string(config.stage) + " needs segmentation maps");
  if (config.stage == Stage::kJoint) {
    for (const char* s : {"cpnet_warmup", "ssnet_rm_warmup", "ssnet_sr_warmup"})
      if (!state.has_stage(s)) throw ConfigError(std::string("joint training requires a completed ") + s + " stage");
    for (const auto& c : data) {
      if (c.frame_count() < 7) throw ConfigError("joint training needs clips of at least 7 frames");
      if (!c.has_flows()) throw ConfigError("joint training needs flow ground truth");
    }
  }
  Runner runner(config, data, state);
  StageResult res = runner.run();
  state.stages_completed.insert(to_string(config.stage));
  return res;
}

}  // namespace svc::training
