#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svc/raster.hpp"

namespace svc::synthdata {

/// Ordered grayscale frames with optional color, segmentation and flow ground truth.
/// flows[t] is the forward flow t -> t+1 on frame t's grid: frame[t+1](p + flow) ~ frame[t](p).
struct VideoClip {
  std::vector<GrayFrame> gray;
  std::vector<ColorEmbedding> ab;
  std::vector<SegmentationMap> seg;
  std::vector<FlowField> flows;
  /// Optional exact inverses: backward_flows[t] maps t+1 -> t on frame t+1's
  /// grid. Empty means consumers invert `flows` numerically. Not saved to disk.
  std::vector<FlowField> backward_flows;

  int frame_count() const { return static_cast<int>(gray.size()); }
  int height() const { return gray.empty() ? 0 : gray.front().height(); }
  int width() const { return gray.empty() ? 0 : gray.front().width(); }
  bool has_color() const { return !ab.empty(); }
  bool has_seg() const { return !seg.empty(); }
  bool has_flows() const { return !flows.empty(); }

  /// Throws ValidationError if any invariant is broken.
  void validate() const;
};

enum class MotionModel { kTranslation, kRotation, kAffine };

MotionModel parse_motion_model(const std::string& s);
std::string to_string(MotionModel m);

/// Explicit per-object motion; all zero fields fall back to the seeded draw.
struct ObjectMotion {
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // px per frame
  double angular_velocity = 0.0;                       // rad per frame
  Eigen::Matrix2d deformation = Eigen::Matrix2d::Zero();  // affine growth per frame
};

struct SynthSpec {
  int n_frames = 8;
  int height = 64;
  int width = 128;
  int n_objects = 3;
  MotionModel motion_model = MotionModel::kTranslation;
  /// CIE Lab colors (native units); entry 0 is the background.
  std::vector<Eigen::Vector3d> palette;
  std::uint64_t seed = 0;
  /// Upper bound on seeded translation speed, px per frame.
  double max_speed = 2.0;
  /// Optional overrides, one per object.
  std::vector<ObjectMotion> motions;

  void validate() const;
};

SynthSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SynthSpec& spec);

/// Default in-gamut palette used when a spec has none.
std::vector<Eigen::Vector3d> default_palette();

/// Analytic scene behind generate_clip; exposes geometry for oracles.
class SynthScene {
 public:
  explicit SynthScene(const SynthSpec& spec);

  int object_count() const { return static_cast<int>(objects_.size()); }
  const SynthSpec& spec() const { return spec_; }

  /// Object-local coordinate of image point p for object k at time t.
  Eigen::Vector2d to_local(int k, int t, const Eigen::Vector2d& p) const;
  Eigen::Vector2d to_image(int k, int t, const Eigen::Vector2d& u) const;
  /// Approximate signed distance in pixels (negative inside).
  double signed_distance(int k, int t, const Eigen::Vector2d& p) const;
  /// Index of the topmost object covering p, or -1 for background.
  int topmost(int t, const Eigen::Vector2d& p) const;
  /// Exact flow t -> t+1 at p.
  Eigen::Vector2d flow(int t, const Eigen::Vector2d& p) const;
  /// Lab color (native units) at p, anti-aliased.
  Eigen::Vector3d lab(int t, const Eigen::Vector2d& p) const;

 private:
  struct Texture {
    std::vector<Eigen::Vector2d> freq;
    std::vector<double> phase;
    std::vector<double> amp;
    double eval(const Eigen::Vector2d& u) const;
  };
  struct Object {
    bool ellipse;
    Eigen::Vector2d center;
    Eigen::Vector2d radii;
    Eigen::Vector3d color;
    Texture tex_l;
    /// ab shading follows the luminance texture, so chroma detail is predictable from gray.
    Eigen::Vector2d chroma_gain;
    ObjectMotion motion;
  };

  Eigen::Matrix2d linear_part(int k, int t) const;
  Eigen::Vector2d offset(int k, int t) const;
  Eigen::Vector3d texel_color(const Object& o, const Eigen::Vector2d& u) const;

  SynthSpec spec_;
  Eigen::Vector3d background_color_;
  Texture bg_l_;
  Eigen::Vector2d bg_chroma_gain_;
  std::vector<Object> objects_;
};

/// Deterministic textured shapes moving per the spec's motion model.
VideoClip generate_clip(const SynthSpec& spec);

/// Writes frame_%05d.png, seg_%05d.png and flow_%05d.svcf into dir.
void save_clip(const VideoClip& clip, const std::filesystem::path& dir);
/// Missing seg/flow files make those fields empty; a missing frame 0 is an error.
VideoClip load_clip(const std::filesystem::path& dir);

/// Picks t uniformly in [0, T-7] and returns the 13-frame mirrored batch.
VideoClip make_training_batch(const VideoClip& clip, std::mt19937_64& rng);
/// Batch: mirror(f[t+5]), ..., mirror(f[t]), f[t], ..., f[t+6].
VideoClip make_training_batch_at(const VideoClip& clip, int t);

/// Area-average (images) and flow rescale to a smaller resolution.
VideoClip downsample_clip(const VideoClip& clip, int factor);

}  // namespace svc::synthdata
