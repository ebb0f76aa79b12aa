#include <doctest.h>

#include <set>

#include "svc/scribble.hpp"
#include "svc/synthdata.hpp"
#include "test_util.hpp"

using namespace svc;
using namespace svc::scribble;

namespace {

ColorEmbedding random_ab(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ColorEmbedding(testutil::random_tensor(2, h, w, rng));
}

bool neutral_where_invalid(const ScribbleMap& m) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const float v = m(2, y, x);
      if (v != 0.f && v != 1.f) return false;
      if (v == 0.f && (m(0, y, x) != kNeutralChroma || m(1, y, x) != kNeutralChroma)) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("sampling") {
  const ColorEmbedding ab = random_ab(64, 96, 1);
  std::mt19937_64 rng(2);
  CHECK(sample_scribbles(ab, 0, 2, rng).empty());
  const auto pts = sample_scribbles(ab, 40, 2, rng);
  REQUIRE(pts.size() == 40);
  std::set<std::pair<int, int>> seen;
  for (const auto& p : pts) {
    seen.insert({p.x, p.y});
    CHECK(p.x >= 2);
    CHECK(p.y >= 2);
    CHECK(p.x <= 93);
    CHECK(p.y <= 61);
    CHECK(p.a == ab(0, p.y, p.x));
    CHECK(p.b == ab(1, p.y, p.x));
  }
  CHECK(seen.size() == 40);
  CHECK_THROWS_AS(sample_scribbles(ab, 41, 2, rng), ValidationError);
  CHECK_THROWS_AS(sample_scribbles(ab, -1, 2, rng), ValidationError);
}

TEST_CASE("rasterize geometry") {
  const ScribbleMap empty = rasterize({}, 10, 12, 2);
  CHECK(valid_count(empty) == 0);
  CHECK(neutral_where_invalid(empty));
  const ScribbleMap one = rasterize({{5, 5, 0.2f, 0.9f}}, 10, 12, 2);
  CHECK(valid_count(one) == 25);
  CHECK(one(0, 3, 3) == 0.2f);
  CHECK(one(1, 7, 7) == 0.9f);
  CHECK(one(2, 2, 5) == 0.f);
  const ScribbleMap two = rasterize({{4, 4, 0.1f, 0.1f}, {6, 4, 0.8f, 0.7f}}, 10, 12, 2);
  CHECK(valid_count(two) == 35);
  CHECK(two(0, 4, 5) == 0.8f);
  CHECK(two(0, 4, 3) == 0.1f);
  CHECK(neutral_where_invalid(two));
}

TEST_CASE("rasterize then read back at centers") {
  const ColorEmbedding ab = random_ab(32, 32, 3);
  std::mt19937_64 rng(4);
  const auto pts = sample_scribbles(ab, 12, 0, rng);
  const ScribbleMap m = rasterize(pts, 32, 32, 0);
  for (const auto& p : pts) {
    CHECK(m(0, p.y, p.x) == p.a);
    CHECK(m(1, p.y, p.x) == p.b);
  }
}

TEST_CASE("propagation by uniform and zero flow") {
  const ScribbleMap m = rasterize({{2, 3, 0.3f, 0.6f}, {9, 5, 0.7f, 0.2f}}, 10, 12, 1);
  CHECK(propagate_scribbles(m, FlowField(10, 12)).tensor().m == m.tensor().m);
  FlowField f(10, 12);
  f.tensor().m.row(0).setConstant(5.f);
  const ScribbleMap out = propagate_scribbles(m, f);
  CHECK(neutral_where_invalid(out));
  CHECK(valid_count(out) == 9);  // the right square is pushed off the frame
  for (int y = 2; y <= 4; ++y)
    for (int x = 1; x <= 3; ++x) {
      CHECK(out(2, y, x + 5) == 1.f);
      CHECK(out(0, y, x + 5) == 0.3f);
    }
  CHECK(valid_count(out) <= valid_count(m));
  CHECK_THROWS_AS(propagate_scribbles(m, FlowField(10, 11)), ValidationError);
}

TEST_CASE("propagation never increases the valid count") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ColorEmbedding ab = random_ab(24, 24, trial);
    const ScribbleMap m = rasterize(sample_scribbles(ab, 10, 2, rng), 24, 24, 2);
    const FlowField f(testutil::random_tensor(2, 24, 24, rng, -6, 6));
    const ScribbleMap out = propagate_scribbles(m, f);
    CHECK(valid_count(out) <= valid_count(m));
    CHECK(neutral_where_invalid(out));
  }
}

TEST_CASE("chained propagation keeps scribbles on their texel") {
  synthdata::SynthSpec s;
  s.n_frames = 6;
  s.height = 64;
  s.width = 96;
  s.n_objects = 1;
  s.seed = 12;
  synthdata::ObjectMotion mo;
  mo.velocity = {2.0, 1.0};
  s.motions = {mo};
  const auto clip = synthdata::generate_clip(s);
  const synthdata::SynthScene scene(s);
  // Scribble every interior pixel of the object on frame 0.
  ScribbleMap m = empty_map(64, 96);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x)
      if (scene.signed_distance(0, 0, {double(x), double(y)}) < -1.0) {
        m(0, y, x) = static_cast<float>(x) / 96.f;
        m(1, y, x) = static_cast<float>(y) / 64.f;
        m(2, y, x) = 1.f;
      }
  const int before = valid_count(m);
  for (int t = 1; t < 6; ++t) {
    m = propagate_scribbles(m, clip.flows[t - 1]);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 96; ++x)
        if (m(2, y, x) == 1.f) {
          // The origin encoded in (a, b) must map onto this pixel under t steps of motion.
          const double ox = std::round(m(0, y, x) * 96.0), oy = std::round(m(1, y, x) * 64.0);
          CHECK(scene.to_local(0, t, {double(x), double(y)}).isApprox(scene.to_local(0, 0, {ox, oy}), 1e-9));
        }
  }
  CHECK(valid_count(m) > before / 2);
}

TEST_CASE("validation and json") {
  ScribbleSet set{32, 48, 2, {{3, 4, 0.5f, 0.25f}, {60, 4, 0.5f, 0.5f}, {5, 5, 1.5f, 0.5f}}};
  const auto issues = validate(set, 32, 48);
  REQUIRE(issues.size() == 2);
  CHECK(issues[0].index == 1);
  CHECK(issues[1].index == 2);
  const auto mismatch = validate(set, 64, 48);
  REQUIRE_FALSE(mismatch.empty());
  CHECK(mismatch[0].index == -1);
  CHECK(mismatch[0].message.find("32x48") != std::string::npos);
  CHECK(mismatch[0].message.find("64x48") != std::string::npos);
  ScribbleSet many{32, 48, 2, std::vector<ScribblePoint>(41, {10, 10, 0.5f, 0.5f})};
  CHECK_FALSE(validate(many, 32, 48).empty());

  const ScribbleSet ok{32, 48, 1, {{3, 4, 0.5f, 0.25f}}};
  const nlohmann::json j = to_json(ok);
  CHECK(j["resolution"] == nlohmann::json::array({32, 48}));
  CHECK(j["points"][0]["x"] == 3);
  const ScribbleSet back = from_json(j);
  CHECK(back.height == 32);
  CHECK(back.radius == 1);
  CHECK(back.points.size() == 1);
  CHECK(back.points[0].b == 0.25f);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"points", 3}}), ValidationError);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"resolution":[4],"points":[]})")), ValidationError);
}
