// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   svc_acceptance            run everything (about 15 minutes on one core)
//   svc_acceptance warp mask  run the named checks only

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "../gradcheck.hpp"
#include "../test_util.hpp"
#include "svc/checkpoint.hpp"
#include "svc/colorspace.hpp"
#include "svc/flowwarp.hpp"
#include "svc/image_ops.hpp"
#include "svc/nn/mac_counter.hpp"
#include "svc/pipeline.hpp"
#include "svc/runtime.hpp"
#include "svc/scribble.hpp"
#include "svc/synthdata.hpp"
#include "svc/training.hpp"

using namespace svc;
using nn::Tape;
using nn::Var;
using testutil::random_tensor;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Accumulates failed conditions into one line.
struct Checker {
  Outcome out;
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    out.pass = false;
    out.detail += (out.detail.empty() ? "" : "; ") + what;
  }
};

// --- Warp oracle -------------------------------------------------------------

Outcome warp_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  long checked = 0;
  for (auto mm : {synthdata::MotionModel::kTranslation, synthdata::MotionModel::kRotation,
                  synthdata::MotionModel::kAffine}) {
    synthdata::SynthSpec s;
    s.n_frames = 4;
    s.height = 128;
    s.width = 224;
    s.n_objects = 3;
    s.seed = 21;
    s.motion_model = mm;
    const auto clip = synthdata::generate_clip(s);
    const synthdata::SynthScene scene(s);
    for (int t = 0; t + 1 < clip.frame_count(); ++t) {
      const Tensorf warped = flowwarp::warp_backward(clip.gray[t + 1].tensor(), clip.flows[t]);
      for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x) {
          const Eigen::Vector2d p(x, y);
          const Eigen::Vector2d q = p + scene.flow(t, p);
          bool near_edge = false;
          for (int k = 0; k < scene.object_count() && !near_edge; ++k)
            near_edge = std::abs(scene.signed_distance(k, t, p)) < 2.0 ||
                        std::abs(scene.signed_distance(k, t + 1, q)) < 2.0;
          if (near_edge || scene.topmost(t, p) != scene.topmost(t + 1, q)) continue;
          if (q.x() < 0 || q.y() < 0 || q.x() > clip.width() - 1 || q.y() > clip.height() - 1) continue;
          worst = std::max(worst, static_cast<double>(std::abs(warped(0, y, x) - clip.gray[t](0, y, x))));
          ++checked;
        }
    }
  }
  const double secs = seconds_since(t0);
  Checker c;
  c.expect(worst < 2.0 / 255.0, fmt("max error %.4g >= 2/255", worst));
  c.expect(secs < 10.0, fmt("took %.1f s", secs));
  c.expect(checked > 10000, "too few interior pixels");
  if (c.out.pass)
    c.out.detail = fmt("max error %.3g (< %.3g) over %ld pixels, 3 motion models, %.1f s", worst, 2.0 / 255, checked,
                       secs);
  return c.out;
}

// --- Occlusion mask ----------------------------------------------------------

Outcome occlusion_suite() {
  Checker c;
  std::mt19937_64 rng(31);
  double lo = 1, hi = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double spread = trial % 2 ? 1.0 : 1e3;
    GrayFrame a(random_tensor<float>(1, 8, 8, rng, -spread, spread));
    GrayFrame b(random_tensor<float>(1, 8, 8, rng, -spread, spread));
    const auto m = flowwarp::occlusion_mask(a, b, 200.0).tensor().m;
    lo = std::min(lo, static_cast<double>(m.minCoeff()));
    hi = std::max(hi, static_cast<double>(m.maxCoeff()));
  }
  c.expect(lo > 0 && hi <= 1, fmt("mask range [%g, %g] not in (0,1]", lo, hi));
  GrayFrame same(random_tensor<float>(1, 16, 16, rng));
  c.expect(flowwarp::occlusion_mask(same, same, 200.0).tensor().m.minCoeff() == 1.f, "identical frames not exactly 1");
  GrayFrame p(4, 4, 0.3f), q(4, 4, 0.4f);
  const double v = flowwarp::occlusion_mask(p, q, 200.0)(0, 2, 2);
  // 0.3f and 0.4f differ by 0.1 only up to float rounding.
  const double diff = static_cast<double>(0.4f) - static_cast<double>(0.3f);
  c.expect(std::abs(v - std::exp(-2.0)) < 1e-6, fmt("diff 0.1 gives %.9g, want exp(-2)", v));
  if (c.out.pass)
    c.out.detail = fmt("range [%.3g, %g] on 200 random pairs; identical -> 1; diff %.7g at alpha 200 -> %.8f "
                       "(exp(-2) = %.8f)",
                       lo, hi, diff, v, std::exp(-2.0));
  return c.out;
}

// --- Similarity and correspondence ---------------------------------------------

Outcome correspondence_suite() {
  Checker c;
  std::mt19937_64 rng(41);
  const cpnet::FrozenEncoder<float> enc("enc", 4, 7);
  double smin = 1, smax = -1, diag = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensorf fa = ssnet::build_feature_pyramid(enc, random_tensor<float>(3, 32, 48, rng));
    const Tensorf fb = ssnet::build_feature_pyramid(enc, random_tensor<float>(3, 32, 48, rng));
    const auto s = ssnet::similarity_matrix(fa, fb);
    smin = std::min(smin, static_cast<double>(s.minCoeff()));
    smax = std::max(smax, static_cast<double>(s.maxCoeff()));
    diag = std::max(diag, static_cast<double>((ssnet::similarity_matrix(fa, fa).diagonal().array() - 1.f).abs().maxCoeff()));
  }
  c.expect(smin >= -1 - 1e-6 && smax <= 1 + 1e-6, fmt("similarity range [%g, %g]", smin, smax));
  c.expect(diag < 1e-5, fmt("S(F,F) diagonal off by %g", diag));

  double violation = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int hl = 2 + trial % 3, wl = 2 + trial % 4, n = hl * wl;
    const PlaneMatrix<float> s = random_tensor<float>(1, n, n, rng, -1, 1).m.reshaped<Eigen::RowMajor>(n, n);
    Tape<float> tape(false);
    const Tensorf y1 = random_tensor<float>(2, 4 * hl, 4 * wl, rng);
    const Tensorf low = image_ops::avg_pool(y1, 4);
    const Tensorf out = ssnet::correspondence_warp(tape.constant(y1), s, trial % 2 ? 200.0 : 5.0).value();
    for (int ch = 0; ch < 2; ++ch) {
      violation = std::max(violation, static_cast<double>(low.m.row(ch).minCoeff() - out.m.row(ch).minCoeff()));
      violation = std::max(violation, static_cast<double>(out.m.row(ch).maxCoeff() - low.m.row(ch).maxCoeff()));
    }
  }
  c.expect(violation <= 1e-6, fmt("convex bound violated by %g", violation));

  Tape<float> tape(false);
  const Tensorf y1 = random_tensor<float>(2, 16, 24, rng);
  const Tensorf uni = ssnet::correspondence_warp(tape.constant(y1), PlaneMatrix<float>(PlaneMatrix<float>::Constant(24, 24, 0.3f)), 200.0).value();
  const Tensorf low = image_ops::avg_pool(y1, 4);
  double mean_err = 0;
  for (int ch = 0; ch < 2; ++ch)
    mean_err = std::max(mean_err, static_cast<double>((uni.m.row(ch).array() - low.m.row(ch).mean()).abs().maxCoeff()));
  c.expect(mean_err < 1e-5, fmt("uniform S off the spatial mean by %g", mean_err));
  if (c.out.pass)
    c.out.detail = fmt("S in [%.3f, %.3f], |diag-1| <= %.2g; convex bound on 100 instances (max violation %.2g); "
                       "uniform S mean error %.2g",
                       smin, smax, diag, std::max(violation, 0.0), mean_err);
  return c.out;
}

// --- Gradient checks -----------------------------------------------------------

template <typename S>
void randomize(const std::vector<nn::Parameter<S>*>& params, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<S>(u(rng));
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  Checker c;

  cpnet::CpnetConfig cc;
  cc.base_channels = 2;
  cc.semantic_channels = 2;
  cc.residual_blocks = 1;
  cpnet::Cpnet<double> cp(cc);
  std::mt19937_64 rng(7);
  cp.init(rng);
  const auto cp_params = cp.parameters();
  const long cp_count = nn::parameter_count(cp_params, false);
  std::mt19937_64 data(8);
  const auto gray = random_tensor<double>(1, 32, 32, data);
  auto scrib = random_tensor<double>(3, 32, 32, data);
  for (Eigen::Index k = 0; k < scrib.m.cols(); ++k) scrib.m(2, k) = scrib.m(2, k) > 0.7 ? 1 : 0;
  const auto gt = random_tensor<double>(2, 32, 32, data), seg = random_tensor<double>(1, 32, 32, data);
  const auto rc = testutil::check_param_grads(
      cp_params,
      [&](Tape<double>& t) {
        auto out = cp(t.constant(gray), t.constant(scrib));
        return training::loss_cp(out.color, t.constant(gt), out.seg, t.constant(seg), 0.1);
      },
      20);
  c.expect(cp_count <= 5000, fmt("CPNet has %ld parameters", cp_count));
  c.expect(rc.max_rel_error < 1e-4, "CPNet " + rc.worst);
  c.expect(rc.kinks * 50 <= rc.checked, fmt("CPNet %d kinks", rc.kinks));

  ssnet::SsnetConfig sc;
  sc.refinement_channels = 2;
  sc.combination_channels = 2;
  sc.sr_channels = 2;
  ssnet::Ssnet<double> ss(sc);
  std::mt19937_64 srng(16);
  ss.init(srng);
  randomize(ss.parameters(), srng, 0.3);
  const auto ss_params = ss.parameters();
  const long ss_count = nn::parameter_count(ss_params, false);
  const int h = 32, w = 32;
  std::vector<Tensor<double>> ys;
  for (int k = 0; k < 8; ++k) ys.push_back(random_tensor<double>(2, h, w, srng, 0.1, 0.9));
  std::vector<Tensorf> flows;
  for (int k = 0; k < 7; ++k) flows.push_back(random_tensor<float>(2, h, w, srng, -1.5, 1.5));
  const auto g = random_tensor<double>(1, h, w, srng, 0.3, 0.7);
  const auto gfull = random_tensor<double>(1, 2 * h, 2 * w, srng);
  const auto kd = random_tensor<double>(2, h, w, srng, -1, 1), kz = random_tensor<double>(2, 2 * h, 2 * w, srng, -1, 1);
  const PlaneMatrix<double> sim = random_tensor<double>(1, 64, 64, srng, -1, 1).m.reshaped<Eigen::RowMajor>(64, 64);
  auto loss = [&](Tape<double>& t, Var<double> y1) {
    ssnet::StepInputs<double> in;
    in.y_i = t.constant(ys[0]);
    in.gray_i = g;
    for (int k = 0; k < 6; ++k) {
      Tensor<double> gk = g;
      gk.m.array() += 0.01 * (k + 1);
      in.neighbors[k] = {t.constant(ys[k + 1]), flows[k], gk};
    }
    in.has_prev = true;
    in.prev = {t.constant(ys[7]), flows[6], g};
    in.first_frame_ab = y1;
    in.corr = ssnet::correspondence_warp(y1, sim, 5.0);
    in.gray_full = t.constant(gfull);
    const auto out = ssnet::ssnet_step(ss, in, 2);
    return nn::add(nn::mean_all(nn::mul_const(out.d, kd)), nn::mean_all(nn::mul_const(out.z, kz)));
  };
  const auto y1 = random_tensor<double>(2, h, w, srng, 0.1, 0.9);
  const auto rs = testutil::check_param_grads(ss_params, [&](Tape<double>& t) { return loss(t, t.constant(y1)); }, 7);
  const auto ri = testutil::check_input_grads(y1, [&](Var<double> v) { return loss(*v.tape, v); }, 1e-5, 1e-7, 13);
  c.expect(ss_count <= 5000, fmt("SSNet has %ld parameters", ss_count));
  c.expect(rs.max_rel_error < 1e-4, "SSNet " + rs.worst);
  c.expect(ri.max_rel_error < 1e-4, "SSNet y1 " + ri.worst);
  c.expect(rs.kinks * 50 <= rs.checked && ri.kinks * 50 <= ri.checked, "too many kinks");

  const double secs = seconds_since(t0);
  c.expect(secs < 60, fmt("took %.1f s", secs));
  if (c.out.pass)
    c.out.detail = fmt("CPNet (%ld params) max rel %.2g over %d entries; SSNet (%ld params) max rel %.2g over %d, "
                       "y1 input max rel %.2g over %d; %d kinks skipped; %.1f s",
                       cp_count, rc.max_rel_error, rc.checked, ss_count, rs.max_rel_error, rs.checked,
                       ri.max_rel_error, ri.checked, rc.kinks + rs.kinks + ri.kinks, secs);
  return c.out;
}

// --- Loss algebra ----------------------------------------------------------------

double loop_l1(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  long n = 0;
  for (int ch = 0; ch < a.c; ++ch)
    for (int y = 0; y < a.h; ++y)
      for (int x = 0; x < a.w; ++x, ++n) s += std::abs(a(ch, y, x) - b(ch, y, x));
  return s / n;
}

Outcome loss_algebra() {
  using namespace training;
  Checker c;
  std::mt19937_64 rng(51);
  Tape<double> t(false);
  auto v = [&](const Tensor<double>& x) { return t.constant(x); };
  auto val = [](Var<double> x) { return x.value().m(0, 0); };
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 3 + trial % 5, w = 4 + trial % 7;
    const auto y = random_tensor<double>(2, h, w, rng), g = random_tensor<double>(2, h, w, rng);
    const auto p = random_tensor<double>(1, h, w, rng), q = random_tensor<double>(1, h, w, rng);
    const auto d = random_tensor<double>(2, h, w, rng), gd = random_tensor<double>(2, h, w, rng);
    const auto z = random_tensor<double>(2, 2 * h, 2 * w, rng), gz = random_tensor<double>(2, 2 * h, 2 * w, rng);
    const double lam = trial % 3 ? 0.1 : 0.0;
    const double lc = loop_l1(y, g), ls = loop_l1(p, q), lss = loop_l1(d, gd) + loop_l1(z, gz);
    for (double e : {val(loss_color_cp(v(y), v(g))) - lc, val(loss_seg_cp(v(p), v(q))) - ls,
                     val(loss_cp(v(y), v(g), v(p), v(q), lam)) - (lc + lam * ls),
                     val(loss_ss(v(d), v(gd), v(z), v(gz))) - lss,
                     val(loss_joint(v(y), v(g), v(p), v(q), lam, v(d), v(gd), v(z), v(gz))) - (lc + lam * ls + lss)})
      worst = std::max(worst, std::abs(e));
  }
  c.expect(worst < 1e-7, fmt("oracle mismatch %g", worst));
  Tensor<double> y(2, 1, 2), g(2, 1, 2), p(1, 1, 2), q(1, 1, 2);
  y.m << 0.2, 0.4, 0.6, 0.8;
  g.m << 0.1, 0.4, 0.9, 0.8;
  p.m << 0.5, 0.5;
  q.m << 1.0, 0.0;
  // color (0.1 + 0 + 0.3 + 0) / 4 = 0.1, seg (0.5 + 0.5) / 2 = 0.5, total 0.1 + 0.1 * 0.5.
  const double hand = val(loss_cp(v(y), v(g), v(p), v(q), 0.1));
  c.expect(std::abs(hand - 0.15) < 1e-12, fmt("hand example gives %.15g", hand));
  if (c.out.pass)
    c.out.detail = fmt("five losses on 20 random shapes within %.2g of scalar loops; L_cp(lambda 0.1) hand value %.12g",
                       worst, hand);
  return c.out;
}

// --- Overfit and temporal aggregation --------------------------------------------

struct OverfitRun {
  synthdata::VideoClip clip, proc;
  ModelState full, zeroed;
  double train_seconds = 0;
  int steps = 0;
  std::string error;
};

constexpr int kH = 128, kW = 224, kRatio = 4;
constexpr double kNoise = 0.1;

ModelState clone(const ModelState& m, const testutil::TempDir& dir) {
  save_checkpoint(m, dir / "clone.svck");
  return load_checkpoint(dir / "clone.svck");
}

training::StageResult run(ModelState& m, training::Stage stage, int iterations, double lr,
                          const std::vector<synthdata::VideoClip>& data, ssnet::StepFlags flags = {}) {
  training::TrainConfig cfg;
  cfg.stage = stage;
  cfg.iterations = iterations;
  cfg.lr_initial = lr;
  cfg.lr_halve_at = iterations * 3 / 4;
  cfg.height = kH;
  cfg.width = kW;
  cfg.sr_ratio = kRatio;
  cfg.lr_cpnet = 2e-4;
  cfg.lr_ssnet = 5e-4;
  cfg.cpnet_noise = kNoise;
  cfg.flags = flags;
  return training::run_stage(cfg, data, m);
}

OverfitRun& overfit_run() {
  static OverfitRun r = [] {
    OverfitRun o;
    synthdata::SynthSpec spec;
    spec.n_frames = 16;
    spec.height = kH * kRatio;
    spec.width = kW * kRatio;
    spec.n_objects = 3;
    spec.seed = 11;
    o.clip = synthdata::generate_clip(spec);
    o.proc = synthdata::downsample_clip(o.clip, kRatio);
    const std::vector<synthdata::VideoClip> data{o.clip};

    cpnet::CpnetConfig cc;
    cc.base_channels = 8;
    cc.residual_blocks = 2;
    ssnet::SsnetConfig sc;
    sc.refinement_channels = 8;
    sc.combination_channels = 16;
    sc.sr_channels = 16;
    sc.sr_ratio = kRatio;
    testutil::TempDir dir("acceptance");
    const auto t0 = Clock::now();
    ModelState warm(cc, sc, 1);
    run(warm, training::Stage::kCpnetWarmup, 1000, 2e-3, data);
    run(warm, training::Stage::kRmWarmup, 300, 1e-3, data);
    run(warm, training::Stage::kSrWarmup, 300, 1e-3, data);
    o.zeroed = clone(warm, dir);
    o.full = std::move(warm);
    run(o.full, training::Stage::kJoint, 200, 1e-3, data);
    o.train_seconds = seconds_since(t0);
    o.steps = 1000 + 300 + 300 + 200;
    run(o.zeroed, training::Stage::kJoint, 200, 1e-3, data, {true, true});
    return o;
  }();
  return r;
}

struct Eval {
  training::MetricReport report;
  double seconds = 0;
};

// Colorizes the overfit clip from 40 first-frame scribbles; noise > 0 perturbs
// the gray frames CPNet sees with a seed never used in training.
Eval evaluate(const OverfitRun& o, const ModelState& m, ssnet::StepFlags flags, double noise) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  const auto pts = scribble::sample_scribbles(o.proc.ab[0], 40, 2, rng);
  flowwarp::GroundTruthFlow flows(o.proc.flows);
  pipeline::ColorizeOptions opt;
  opt.sr_ratio = kRatio;
  opt.flags = flags;
  opt.cpnet_noise = noise;
  opt.noise_seed = 99;
  const auto res = pipeline::colorize(m, o.proc.gray, o.clip.gray, scribble::rasterize(pts, kH, kW, 2), flows, opt);
  std::vector<RgbImage> pred, gt;
  for (int t = 0; t < o.clip.frame_count(); ++t) {
    pred.push_back(pipeline::compose_rgb(o.clip.gray[t], res.z[t]));
    gt.push_back(colorspace::lab_to_rgb(o.clip.gray[t], o.clip.ab[t]));
  }
  return {training::evaluate(pred, gt, o.clip.flows), seconds_since(t0)};
}

Outcome overfit_probe() {
  const auto& o = overfit_run();
  const Eval e = evaluate(o, o.full, {}, 0.0);
  const double secs = o.train_seconds + e.seconds;
  Checker c;
  c.expect(e.report.psnr_db >= 35.0, fmt("PSNR %.2f dB < 35", e.report.psnr_db));
  c.expect(o.steps <= 2000, fmt("%d steps", o.steps));
  c.expect(secs < 1800, fmt("took %.0f s", secs));
  if (c.out.pass)
    c.out.detail = fmt("PSNR %.2f dB (SSIM %.4f) on 16 frames at %dx%d after %d steps (cpnet 1000, rm 300, sr 300, "
                       "joint 200), %.0f s",
                       e.report.psnr_db, e.report.ssim, kH * kRatio, kW * kRatio, o.steps, secs);
  return c.out;
}

Outcome temporal_aggregation() {
  const auto& o = overfit_run();
  const Eval full = evaluate(o, o.full, {}, kNoise);
  const Eval zeroed = evaluate(o, o.zeroed, {true, true}, kNoise);
  const double a = full.report.temporal_warp_error, b = zeroed.report.temporal_warp_error;
  Outcome out;
  out.pass = a < b;
  out.detail = fmt("held-out noise sigma %.2g: TWE full %.5f vs zeroed %.5f (PSNR %.2f vs %.2f dB)", kNoise, a, b,
                   full.report.psnr_db, zeroed.report.psnr_db);
  return out;
}

// --- Segmentation loss ------------------------------------------------------------

Outcome segmentation_direction() {
  auto make_clip = [](std::uint64_t seed) {
    synthdata::SynthSpec s;
    s.n_frames = 8;
    s.height = 64;
    s.width = 128;
    s.n_objects = 3;
    s.seed = seed;
    return synthdata::generate_clip(s);
  };
  const std::vector<synthdata::VideoClip> train{make_clip(21), make_clip(22)};
  const auto held = make_clip(23);
  auto train_with = [&](double lambda) {
    cpnet::CpnetConfig cc;
    cc.base_channels = 8;
    cc.residual_blocks = 2;
    ModelState m(cc, ssnet::SsnetConfig{}, 1);
    training::TrainConfig cfg;
    cfg.stage = training::Stage::kCpnetWarmup;
    cfg.iterations = 400;
    cfg.lr_initial = 2e-3;
    cfg.lr_halve_at = 300;
    cfg.height = 64;
    cfg.width = 128;
    cfg.lambda_s = lambda;
    training::run_stage(cfg, train, m);
    // Held-out segmentation L1 from 20 scribbles per frame.
    std::mt19937_64 rng(7);
    double seg_l1 = 0, color_l1 = 0;
    for (int t = 0; t < held.frame_count(); ++t) {
      const auto pts = scribble::sample_scribbles(held.ab[t], 20, 2, rng);
      Tape<float> tape(false);
      const auto out = (*m.cpnet)(tape.constant(held.gray[t].tensor()),
                                  tape.constant(scribble::rasterize(pts, 64, 128, 2).tensor()));
      seg_l1 += (out.seg.value().m - held.seg[t].tensor().m).cwiseAbs().mean() / held.frame_count();
      color_l1 += (out.color.value().m - held.ab[t].tensor().m).cwiseAbs().mean() / held.frame_count();
    }
    return std::make_pair(seg_l1, color_l1);
  };
  const auto with = train_with(0.1), without = train_with(0.0);
  Outcome out;
  out.pass = with.first < without.first;
  out.detail = fmt("held-out seg L1 %.4f (lambda 0.1) vs %.4f (lambda 0); color L1 %.4f vs %.4f", with.first,
                   without.first, with.second, without.second);
  return out;
}

// --- Multi-resolution ---------------------------------------------------------------

Outcome multi_resolution() {
  cpnet::CpnetConfig cc;
  cc.base_channels = 4;
  cc.residual_blocks = 1;
  ssnet::SsnetConfig sc;
  sc.refinement_channels = 4;
  sc.combination_channels = 4;
  sc.sr_channels = 4;
  const ModelState m(cc, sc, 2);
  synthdata::SynthSpec spec;
  spec.n_frames = 3;
  spec.height = 512;
  spec.width = 896;
  spec.seed = 3;
  const auto clip = synthdata::generate_clip(spec);
  Checker c;
  auto colorize = [&](int h, int w, int r) {
    const auto frames = pipeline::prepare_frames(clip.gray, h, w, r);
    std::mt19937_64 rng(1);
    const auto pts = scribble::sample_scribbles(ColorEmbedding(pipeline::resample(clip.ab[0].tensor(), h, w)), 10, 2, rng);
    flowwarp::GroundTruthFlow flows(clip.flows);
    pipeline::ColorizeOptions opt;
    opt.sr_ratio = r;
    return pipeline::colorize(m, frames.proc, frames.full, scribble::rasterize(pts, h, w, 2), flows, opt);
  };
  for (auto [h, w, r] : std::vector<std::array<int, 3>>{{64, 128, 8}, {128, 224, 4}, {256, 448, 2}}) {
    const auto res = colorize(h, w, r);
    bool ok = res.z.size() == 3;
    for (const auto& z : res.z) ok = ok && z.height() == h * r && z.width() == w * r;
    c.expect(ok, fmt("%dx%d ratio %d: wrong z shape", h, w, r));
  }
  std::vector<std::map<std::string, std::uint64_t>> counts;
  for (int r : ssnet::kRatios) {
    nn::MacCounter counter;
    {
      nn::MacAudit audit(counter);
      colorize(64, 128, r);
    }
    counts.push_back(counter.by_label());
  }
  std::string non_sr;
  for (const char* label : {"cpnet", "refine", "combine", "correspondence"}) {
    const bool same = counts[0].at(label) == counts[1].at(label) && counts[1].at(label) == counts[2].at(label);
    c.expect(same && counts[0].at(label) > 0, std::string(label) + " MACs differ across ratios");
    non_sr += fmt(" %s %.3g", label, static_cast<double>(counts[0].at(label)));
  }
  c.expect(counts[0].at("sr") < counts[1].at("sr") && counts[1].at("sr") < counts[2].at("sr"),
           "SR MACs do not grow with the ratio");
  if (c.out.pass)
    c.out.detail = "z shapes 512x1024, 512x896, 512x896 from one checkpoint; MACs at 64x128 identical across ratios 2/4/8:" +
                   non_sr + fmt("; sr %.3g / %.3g / %.3g", static_cast<double>(counts[0].at("sr")),
                                static_cast<double>(counts[1].at("sr")), static_cast<double>(counts[2].at("sr")));
  return c.out;
}

// --- CLI and service ------------------------------------------------------------------

Outcome cli_and_service() {
  Checker c;
  for (const char* bin : {SVC_TEST_CLI, SVC_TEST_SERVICE}) {
    const std::string cmd = std::string("\"") + bin + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    c.expect(rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) == 0, std::string(bin) + " failed");
  }
  if (c.out.pass)
    c.out.detail = "CLI exit codes and determinism; service lifecycle, 409/422 handling and session isolation";
  return c.out;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"warp", warp_oracle},
      {"mask", occlusion_suite},
      {"correspondence", correspondence_suite},
      {"gradcheck", gradient_checks},
      {"losses", loss_algebra},
      {"multires", multi_resolution},
      {"cli-service", cli_and_service},
      {"seg-loss", segmentation_direction},
      {"overfit", overfit_probe},
      {"temporal", temporal_aggregation},
  };
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> only;
  app.add_option("checks", only, "Subset of: warp mask correspondence gradcheck losses multires cli-service seg-loss overfit temporal");
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
