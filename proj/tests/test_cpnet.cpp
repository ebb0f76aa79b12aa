#include <doctest.h>

#include "gradcheck.hpp"
#include "svc/cpnet.hpp"
#include "svc/nn/adam.hpp"
#include "svc/scribble.hpp"
#include "svc/synthdata.hpp"
#include "svc/training.hpp"
#include "test_util.hpp"

using namespace svc;
using cpnet::Cpnet;
using cpnet::CpnetConfig;
using testutil::random_tensor;

namespace {

CpnetConfig tiny_config() {
  CpnetConfig c;
  c.base_channels = 2;
  c.semantic_channels = 2;
  c.residual_blocks = 1;
  return c;
}

template <typename S>
std::unique_ptr<Cpnet<S>> make_net(const CpnetConfig& cfg, std::uint64_t seed) {
  auto net = std::make_unique<Cpnet<S>>(cfg);
  std::mt19937_64 rng(seed);
  net->init(rng);
  return net;
}

struct Overfit {
  synthdata::VideoClip clip;
  std::unique_ptr<Cpnet<float>> net;
  std::vector<scribble::ScribblePoint> points;
  ScribbleMap scribbles;
  double mean_abs = 0;
  std::vector<PlaneMatrix<float>> frozen_before, frozen_after;
};

// One synthetic frame, fixed 40 scribbles, plain Adam on L_cp.
const Overfit& overfit() {
  static const Overfit fit = [] {
    Overfit f;
    synthdata::SynthSpec spec;
    spec.n_frames = 1;
    spec.height = 64;
    spec.width = 64;
    spec.n_objects = 2;
    spec.seed = 4;
    f.clip = synthdata::generate_clip(spec);
    CpnetConfig cfg;
    cfg.base_channels = 8;
    cfg.residual_blocks = 2;
    f.net = make_net<float>(cfg, 1);
    std::mt19937_64 rng(9);
    f.points = scribble::sample_scribbles(f.clip.ab[0], 40, 2, rng);
    f.scribbles = scribble::rasterize(f.points, 64, 64, 2);
    for (auto* p : f.net->parameters())
      if (p->frozen) f.frozen_before.push_back(p->value);
    nn::Adam<float> adam(0.9, 0.999);
    for (int step = 0; step < 2000; ++step) {
      nn::Tape<float> tape(true);
      auto out = (*f.net)(tape.constant(f.clip.gray[0].tensor()), tape.constant(f.scribbles.tensor()));
      auto loss = training::loss_cp(out.color, tape.constant(f.clip.ab[0].tensor()), out.seg,
                                    tape.constant(f.clip.seg[0].tensor()), 0.1);
      tape.backward(loss);
      adam.step(f.net->parameters(), tape.param_grads(), step < 1500 ? 2e-3 : 1e-3);
    }
    for (auto* p : f.net->parameters())
      if (p->frozen) f.frozen_after.push_back(p->value);
    const auto res = cpnet::cpnet_forward(*f.net, f.clip.gray[0], f.scribbles);
    f.mean_abs = (res.color.tensor().m - f.clip.ab[0].tensor().m).cwiseAbs().mean();
    return f;
  }();
  return fit;
}

}  // namespace

TEST_CASE("output shapes and determinism") {
  auto net = make_net<float>(tiny_config(), 1);
  std::mt19937_64 rng(2);
  const GrayFrame gray(random_tensor<float>(1, 64, 96, rng, 0, 1));
  const ScribbleMap s(Tensorf::zeros(3, 64, 96));
  const auto a = cpnet::cpnet_forward(*net, gray, s);
  const auto b = cpnet::cpnet_forward(*net, gray, s);
  CHECK(a.color.tensor().c == 2);
  CHECK(a.color.tensor().h == 64);
  CHECK(a.color.tensor().w == 96);
  CHECK(a.seg.tensor().c == 1);
  CHECK(a.seg.tensor().h == 64);
  CHECK(a.color.tensor().m == b.color.tensor().m);
  CHECK(a.seg.tensor().m == b.seg.tensor().m);
}

TEST_CASE("indivisible resolution is rejected") {
  auto net = make_net<float>(tiny_config(), 1);
  CHECK_THROWS_AS(cpnet::cpnet_forward(*net, GrayFrame(Tensorf::zeros(1, 48, 64)), ScribbleMap(Tensorf::zeros(3, 48, 64))),
                  ValidationError);
  CHECK_THROWS_AS(cpnet::cpnet_forward(*net, GrayFrame(Tensorf::zeros(1, 64, 64)), ScribbleMap(Tensorf::zeros(3, 32, 64))),
                  ValidationError);
}

TEST_CASE("outputs stay bounded for extreme inputs") {
  auto net = make_net<float>(tiny_config(), 3);
  std::mt19937_64 rng(4);
  for (double mag : {1.0, 1e3, 1e6}) {
    const GrayFrame gray(random_tensor<float>(1, 32, 32, rng, -mag, mag));
    const ScribbleMap s(random_tensor<float>(3, 32, 32, rng, -mag, mag));
    const auto r = cpnet::cpnet_forward(*net, gray, s);
    CHECK(r.color.tensor().m.allFinite());
    CHECK(r.color.tensor().m.minCoeff() >= 0.f);
    CHECK(r.color.tensor().m.maxCoeff() <= 1.f);
    CHECK(r.seg.tensor().m.minCoeff() >= 0.f);
    CHECK(r.seg.tensor().m.maxCoeff() <= 1.f);
  }
}

TEST_CASE("initialization") {
  CpnetConfig cfg;
  cfg.base_channels = 8;
  auto a = make_net<float>(cfg, 5);
  auto b = make_net<float>(cfg, 5);
  auto c = make_net<float>(cfg, 6);
  const auto pa = a->parameters(), pb = b->parameters(), pc = c->parameters();
  REQUIRE(pa.size() == pb.size());
  bool differs = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK(pa[k]->value == pb[k]->value);
    if (!pa[k]->frozen && pa[k]->value != pc[k]->value) differs = true;
    // Frozen flags cover exactly the semantic encoder.
    CHECK(pa[k]->frozen == (pa[k]->name.rfind("cpnet.semantic", 0) == 0));
    // The semantic encoder follows its own seed, not the init rng.
    if (pa[k]->frozen) CHECK(pa[k]->value == pc[k]->value);
  }
  CHECK(differs);

  int checked = 0;
  for (auto* p : pa) {
    if (p->frozen || p->shape.size() != 4 || p->count() < 256) continue;
    const int k2 = p->shape[2] * p->shape[3];
    const double target = 2.0 / (p->shape[1] * k2 + p->shape[0] * k2);
    const auto& w = p->value;
    const double var = w.cast<double>().array().square().mean() - std::pow(w.cast<double>().mean(), 2);
    CHECK_MESSAGE(var > target / 2, p->name);
    CHECK_MESSAGE(var < target * 2, p->name);
    ++checked;
  }
  CHECK(checked > 5);
}

TEST_CASE("L_cp gradient check in double precision") {
  auto net = make_net<double>(tiny_config(), 7);
  const auto params = net->parameters();
  REQUIRE(nn::parameter_count(params, false) <= 5000);
  std::mt19937_64 rng(8);
  const Tensor<double> gray = random_tensor<double>(1, 32, 32, rng, 0, 1);
  Tensor<double> scrib = random_tensor<double>(3, 32, 32, rng, 0, 1);
  for (Eigen::Index k = 0; k < scrib.m.cols(); ++k) scrib.m(2, k) = scrib.m(2, k) > 0.7 ? 1 : 0;
  const Tensor<double> gt = random_tensor<double>(2, 32, 32, rng, 0, 1);
  const Tensor<double> seg = random_tensor<double>(1, 32, 32, rng, 0, 1);
  const auto r = testutil::check_param_grads(
      params,
      [&](nn::Tape<double>& t) {
        auto out = (*net)(t.constant(gray), t.constant(scrib));
        return training::loss_cp(out.color, t.constant(gt), out.seg, t.constant(seg), 0.1);
      },
      20);
  CHECK(r.checked > 50);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
  CHECK(r.kinks * 50 <= r.checked);
}

TEST_CASE("frozen encoder receives no gradient") {
  auto net = make_net<float>(tiny_config(), 1);
  std::mt19937_64 rng(2);
  nn::Tape<float> tape(true);
  auto out = (*net)(tape.constant(random_tensor<float>(1, 32, 32, rng, 0, 1)), tape.constant(Tensorf::zeros(3, 32, 32)));
  tape.backward(nn::mean_all(out.color));
  const auto grads = tape.param_grads();
  int learnable = 0;
  for (auto* p : net->parameters()) {
    if (p->frozen)
      CHECK(grads.count(p) == 0);
    else
      learnable += grads.count(p) > 0;
  }
  CHECK(learnable > 0);
}

TEST_CASE("overfit on one frame, frozen weights unchanged") {
  const Overfit& f = overfit();
  CHECK(f.mean_abs < 0.02);
  REQUIRE(f.frozen_before.size() == f.frozen_after.size());
  REQUIRE_FALSE(f.frozen_before.empty());
  for (std::size_t k = 0; k < f.frozen_before.size(); ++k) CHECK(f.frozen_before[k] == f.frozen_after[k]);
}

TEST_CASE("scribble conditioning is live on a trained model") {
  const Overfit& f = overfit();
  auto points = f.points;
  points[0].a = points[0].a > 0.5f ? 0.1f : 0.9f;
  const auto base = cpnet::cpnet_forward(*f.net, f.clip.gray[0], f.scribbles);
  const auto moved = cpnet::cpnet_forward(*f.net, f.clip.gray[0], scribble::rasterize(points, 64, 64, 2));
  CHECK((base.color.tensor().m - moved.color.tensor().m).cwiseAbs().maxCoeff() > 0);
}
