#pragma once

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svc/raster.hpp"

namespace svc::scribble {

/// Upper bound on scribbles per frame.
inline constexpr int kMaxScribbles = 40;
inline constexpr int kDefaultRadius = 2;

struct ScribblePoint {
  int x = 0;
  int y = 0;
  float a = kNeutralChroma;
  float b = kNeutralChroma;
};

/// Scribbles for the first frame, in processing-resolution pixel coordinates.
struct ScribbleSet {
  int height = 0;
  int width = 0;
  int radius = kDefaultRadius;
  std::vector<ScribblePoint> points;
};

/// One problem with one point (index -1 for set-level problems).
struct ScribbleIssue {
  int index = -1;
  std::string message;
};

/// count distinct centers at least radius px from every border, each carrying gt_ab at its center.
std::vector<ScribblePoint> sample_scribbles(const ColorEmbedding& gt_ab, int count, int radius, std::mt19937_64& rng);

/// Filled (2r+1)^2 squares; later points overwrite earlier ones.
ScribbleMap rasterize(const std::vector<ScribblePoint>& points, int h, int w, int radius);
ScribbleMap rasterize(const ScribbleSet& set);

ScribbleMap empty_map(int h, int w);

/// Forward-splats valid pixels to round(p + flow(p)); first writer in scan order wins.
ScribbleMap propagate_scribbles(const ScribbleMap& map, const FlowField& flow_t_to_t1);

int valid_count(const ScribbleMap& map);

std::vector<ScribbleIssue> validate(const ScribbleSet& set, int expected_h, int expected_w);

/// Structural parse; throws ValidationError on malformed JSON shape.
ScribbleSet from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScribbleSet& set);

}  // namespace svc::scribble
