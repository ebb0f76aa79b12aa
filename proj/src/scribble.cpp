#include "svc/scribble.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace svc::scribble {

std::vector<ScribblePoint> sample_scribbles(const ColorEmbedding& gt_ab, int count, int radius, std::mt19937_64& rng) {
  require(count >= 0, "scribble count must be non-negative");
  require(count <= kMaxScribbles, "scribble count " + std::to_string(count) + " exceeds " +
                                      std::to_string(kMaxScribbles));
  require(radius >= 0, "scribble radius must be non-negative");
  const int w_avail = gt_ab.width() - 2 * radius;
  const int h_avail = gt_ab.height() - 2 * radius;
  require(count == 0 || (w_avail > 0 && h_avail > 0 && static_cast<long>(w_avail) * h_avail >= count),
          "frame too small for the requested scribbles");
  std::vector<ScribblePoint> points;
  if (count == 0) return points;
  std::uniform_int_distribution<int> ux(radius, gt_ab.width() - 1 - radius);
  std::uniform_int_distribution<int> uy(radius, gt_ab.height() - 1 - radius);
  std::unordered_set<long> used;
  while (static_cast<int>(points.size()) < count) {
    const int x = ux(rng), y = uy(rng);
    if (!used.insert(static_cast<long>(y) * gt_ab.width() + x).second) continue;
    points.push_back({x, y, gt_ab(0, y, x), gt_ab(1, y, x)});
  }
  return points;
}

ScribbleMap empty_map(int h, int w) {
  ScribbleMap map(h, w);
  map.tensor().m.row(0).setConstant(kNeutralChroma);
  map.tensor().m.row(1).setConstant(kNeutralChroma);
  map.tensor().m.row(2).setZero();
  return map;
}

ScribbleMap rasterize(const std::vector<ScribblePoint>& points, int h, int w, int radius) {
  require(radius >= 0, "scribble radius must be non-negative");
  ScribbleMap map = empty_map(h, w);
  for (const auto& p : points) {
    require(p.x >= 0 && p.x < w && p.y >= 0 && p.y < h, "scribble point out of bounds");
    for (int y = std::max(0, p.y - radius); y <= std::min(h - 1, p.y + radius); ++y)
      for (int x = std::max(0, p.x - radius); x <= std::min(w - 1, p.x + radius); ++x) {
        map(0, y, x) = p.a;
        map(1, y, x) = p.b;
        map(2, y, x) = 1.f;
      }
  }
  return map;
}

ScribbleMap rasterize(const ScribbleSet& set) { return rasterize(set.points, set.height, set.width, set.radius); }

ScribbleMap propagate_scribbles(const ScribbleMap& map, const FlowField& flow) {
  require(map.same_size(flow), "propagate_scribbles: map " + dims_string(map.height(), map.width()) +
                                   " vs flow " + dims_string(flow.height(), flow.width()));
  const int h = map.height(), w = map.width();
  ScribbleMap out = empty_map(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (map(2, y, x) < 0.5f) continue;
      const long tx = std::lround(x + static_cast<double>(flow(0, y, x)));
      const long ty = std::lround(y + static_cast<double>(flow(1, y, x)));
      if (tx < 0 || tx >= w || ty < 0 || ty >= h) continue;
      const int dx = static_cast<int>(tx), dy = static_cast<int>(ty);
      if (out(2, dy, dx) >= 0.5f) continue;
      out(0, dy, dx) = map(0, y, x);
      out(1, dy, dx) = map(1, y, x);
      out(2, dy, dx) = 1.f;
    }
  return out;
}

int valid_count(const ScribbleMap& map) {
  return static_cast<int>((map.tensor().m.row(2).array() >= 0.5f).count());
}

std::vector<ScribbleIssue> validate(const ScribbleSet& set, int expected_h, int expected_w) {
  std::vector<ScribbleIssue> issues;
  if (set.height != expected_h || set.width != expected_w)
    issues.push_back({-1, "resolution " + dims_string(set.height, set.width) + " does not match frame resolution " +
                              dims_string(expected_h, expected_w)});
  if (set.radius < 0) issues.push_back({-1, "radius must be non-negative"});
  if (static_cast<int>(set.points.size()) > kMaxScribbles)
    issues.push_back({-1, "at most " + std::to_string(kMaxScribbles) + " points allowed, got " +
                              std::to_string(set.points.size())});
  for (int i = 0; i < static_cast<int>(set.points.size()); ++i) {
    const auto& p = set.points[i];
    if (p.x < 0 || p.x >= expected_w || p.y < 0 || p.y >= expected_h)
      issues.push_back({i, "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside frame " +
                               dims_string(expected_h, expected_w)});
    if (!std::isfinite(p.a) || !std::isfinite(p.b) || p.a < 0 || p.a > 1 || p.b < 0 || p.b > 1)
      issues.push_back({i, "a and b must lie in [0,1]"});
  }
  return issues;
}

ScribbleSet from_json(const nlohmann::json& j) {
  ScribbleSet set;
  try {
    set.height = j.at("resolution").at(0).get<int>();
    set.width = j.at("resolution").at(1).get<int>();
    set.radius = j.value("radius", kDefaultRadius);
    for (const auto& p : j.at("points"))
      set.points.push_back({p.at("x").get<int>(), p.at("y").get<int>(), p.at("a").get<float>(), p.at("b").get<float>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed scribble JSON: ") + e.what());
  }
  return set;
}

nlohmann::json to_json(const ScribbleSet& set) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : set.points) points.push_back({{"x", p.x}, {"y", p.y}, {"a", p.a}, {"b", p.b}});
  return {{"resolution", {set.height, set.width}}, {"radius", set.radius}, {"points", points}};
}

}  // namespace svc::scribble
