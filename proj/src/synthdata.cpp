#include "svc/synthdata.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "svc/colorspace.hpp"
#include "svc/flowwarp.hpp"
#include "svc/image_ops.hpp"
#include "svc/io.hpp"

namespace svc::synthdata {

namespace fs = std::filesystem;

void VideoClip::validate() const {
  require(!gray.empty(), "clip has no frames");
  const int h = height(), w = width();
  for (const auto& g : gray) require(g.height() == h && g.width() == w, "clip frames differ in resolution");
  require(ab.empty() || ab.size() == gray.size(), "clip color count differs from frame count");
  for (const auto& a : ab) require(a.height() == h && a.width() == w, "clip color planes differ in resolution");
  require(seg.empty() || seg.size() == gray.size(), "clip segmentation count differs from frame count");
  for (const auto& s : seg) require(s.height() == h && s.width() == w, "clip segmentation differs in resolution");
  require(flows.empty() || flows.size() + 1 == gray.size(), "clip flow count must be frame count - 1");
  for (const auto& f : flows) require(f.height() == h && f.width() == w, "clip flow differs in resolution");
  require(backward_flows.empty() || backward_flows.size() == flows.size(),
          "clip backward flow count must match forward flow count");
  for (const auto& f : backward_flows)
    require(f.height() == h && f.width() == w, "clip backward flow differs in resolution");
}

MotionModel parse_motion_model(const std::string& s) {
  if (s == "translation") return MotionModel::kTranslation;
  if (s == "rotation" || s == "rotation-about-center") return MotionModel::kRotation;
  if (s == "affine") return MotionModel::kAffine;
  throw ValidationError("unknown motion model: " + s);
}

std::string to_string(MotionModel m) {
  switch (m) {
    case MotionModel::kTranslation: return "translation";
    case MotionModel::kRotation: return "rotation-about-center";
    case MotionModel::kAffine: return "affine";
  }
  return "translation";
}

void SynthSpec::validate() const {
  require(n_frames >= 1, "n_frames must be >= 1");
  require(height > 0 && width > 0 && height % 32 == 0 && width % 32 == 0,
          "resolution " + dims_string(height, width) + " must be divisible by 32");
  require(n_objects >= 0, "n_objects must be >= 0");
  require(max_speed >= 0, "max_speed must be >= 0");
}

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.n_frames = j.value("n_frames", s.n_frames);
    if (j.contains("resolution")) {
      s.height = j.at("resolution").at(0).get<int>();
      s.width = j.at("resolution").at(1).get<int>();
    }
    s.n_objects = j.value("n_objects", s.n_objects);
    if (j.contains("motion_model")) s.motion_model = parse_motion_model(j.at("motion_model").get<std::string>());
    if (j.contains("palette"))
      for (const auto& c : j.at("palette")) s.palette.emplace_back(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
    s.seed = j.value("seed", s.seed);
    s.max_speed = j.value("max_speed", s.max_speed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json spec_to_json(const SynthSpec& s) {
  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : s.palette) palette.push_back({c.x(), c.y(), c.z()});
  return {{"n_frames", s.n_frames},     {"resolution", {s.height, s.width}},
          {"n_objects", s.n_objects},   {"motion_model", to_string(s.motion_model)},
          {"palette", palette},         {"seed", s.seed},
          {"max_speed", s.max_speed}};
}

std::vector<Eigen::Vector3d> default_palette() {
  // Object lightness levels are spread apart so gray carries a color cue.
  return {{66.0, -6.0, 14.0}, {40.0, 42.0, 28.0}, {56.0, -36.0, 30.0},
          {72.0, 2.0, 36.0},  {34.0, 10.0, -30.0}, {50.0, 38.0, -26.0}};
}

// ---------------------------------------------------------------------------

double SynthScene::Texture::eval(const Eigen::Vector2d& u) const {
  double v = 0;
  for (std::size_t i = 0; i < freq.size(); ++i) v += amp[i] * std::sin(2.0 * std::numbers::pi * freq[i].dot(u) + phase[i]);
  return v;
}

SynthScene::SynthScene(const SynthSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.palette.empty()) spec_.palette = default_palette();
  std::mt19937_64 rng(spec_.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double h = spec_.height, w = spec_.width, m = std::min(h, w);

  // Wavelengths of at least 0.3 * min(H, W) keep bilinear resampling error small.
  auto texture = [&](double amplitude) {
    Texture t;
    for (int i = 0; i < 3; ++i) {
      const double theta = 2.0 * std::numbers::pi * uni(rng);
      const double wavelength = (0.3 + 0.3 * uni(rng)) * m;
      t.freq.emplace_back(std::cos(theta) / wavelength, std::sin(theta) / wavelength);
      t.phase.push_back(2.0 * std::numbers::pi * uni(rng));
      t.amp.push_back(amplitude / 3.0);
    }
    return t;
  };

  background_color_ = spec_.palette.front();
  bg_l_ = texture(12.0);
  auto gain = [&] { return Eigen::Vector2d(0.6 * uni(rng) - 0.3, 0.6 * uni(rng) - 0.3); };
  bg_chroma_gain_ = gain();

  const int n_colors = static_cast<int>(spec_.palette.size());
  for (int k = 0; k < spec_.n_objects; ++k) {
    Object o;
    o.ellipse = uni(rng) < 0.6;
    o.center = {(0.25 + 0.5 * uni(rng)) * w, (0.25 + 0.5 * uni(rng)) * h};
    o.radii = {(0.12 + 0.1 * uni(rng)) * m, (0.12 + 0.1 * uni(rng)) * m};
    o.color = spec_.palette[n_colors > 1 ? 1 + k % (n_colors - 1) : 0];
    o.tex_l = texture(14.0);
    o.chroma_gain = gain();
    const Eigen::Vector2d v((2 * uni(rng) - 1) * spec_.max_speed, (2 * uni(rng) - 1) * spec_.max_speed);
    const double omega = (2 * uni(rng) - 1) * 0.03;
    Eigen::Matrix2d g;
    g << (2 * uni(rng) - 1) * 0.01, (2 * uni(rng) - 1) * 0.01, (2 * uni(rng) - 1) * 0.01, (2 * uni(rng) - 1) * 0.01;
    switch (spec_.motion_model) {
      case MotionModel::kTranslation: o.motion.velocity = v; break;
      case MotionModel::kRotation: o.motion.angular_velocity = omega; break;
      case MotionModel::kAffine:
        o.motion.velocity = 0.5 * v;
        o.motion.deformation = g;
        break;
    }
    if (k < static_cast<int>(spec_.motions.size())) o.motion = spec_.motions[k];
    objects_.push_back(std::move(o));
  }
}

Eigen::Matrix2d SynthScene::linear_part(int k, int t) const {
  const auto& mo = objects_[k].motion;
  switch (spec_.motion_model) {
    case MotionModel::kTranslation: return Eigen::Matrix2d::Identity();
    case MotionModel::kRotation: return Eigen::Rotation2Dd(mo.angular_velocity * t).toRotationMatrix();
    case MotionModel::kAffine: return Eigen::Matrix2d::Identity() + t * mo.deformation;
  }
  return Eigen::Matrix2d::Identity();
}

Eigen::Vector2d SynthScene::offset(int k, int t) const {
  const auto& o = objects_[k];
  if (spec_.motion_model == MotionModel::kRotation) {
    const Eigen::Vector2d pivot(0.5 * (spec_.width - 1), 0.5 * (spec_.height - 1));
    return pivot + linear_part(k, t) * (o.center - pivot);
  }
  return o.center + t * o.motion.velocity;
}

Eigen::Vector2d SynthScene::to_local(int k, int t, const Eigen::Vector2d& p) const {
  if (spec_.motion_model == MotionModel::kTranslation) return p - offset(k, t);
  return linear_part(k, t).inverse() * (p - offset(k, t));
}

Eigen::Vector2d SynthScene::to_image(int k, int t, const Eigen::Vector2d& u) const {
  if (spec_.motion_model == MotionModel::kTranslation) return u + offset(k, t);
  return linear_part(k, t) * u + offset(k, t);
}

double SynthScene::signed_distance(int k, int t, const Eigen::Vector2d& p) const {
  const auto& o = objects_[k];
  const Eigen::Vector2d u = to_local(k, t, p);
  if (o.ellipse) {
    const double q = std::hypot(u.x() / o.radii.x(), u.y() / o.radii.y());
    return (q - 1.0) * o.radii.minCoeff();
  }
  return std::max(std::abs(u.x()) - o.radii.x(), std::abs(u.y()) - o.radii.y());
}

int SynthScene::topmost(int t, const Eigen::Vector2d& p) const {
  for (int k = object_count() - 1; k >= 0; --k)
    if (signed_distance(k, t, p) < 0) return k;
  return -1;
}

Eigen::Vector2d SynthScene::flow(int t, const Eigen::Vector2d& p) const {
  const int k = topmost(t, p);
  if (k < 0) return Eigen::Vector2d::Zero();
  if (spec_.motion_model == MotionModel::kTranslation) return objects_[k].motion.velocity;
  return to_image(k, t + 1, to_local(k, t, p)) - p;
}

Eigen::Vector3d SynthScene::texel_color(const Object& o, const Eigen::Vector2d& u) const {
  const double l = o.tex_l.eval(u);
  return o.color + Eigen::Vector3d(l, o.chroma_gain.x() * l, o.chroma_gain.y() * l);
}

Eigen::Vector3d SynthScene::lab(int t, const Eigen::Vector2d& p) const {
  const double l = bg_l_.eval(p);
  Eigen::Vector3d c = background_color_ + Eigen::Vector3d(l, bg_chroma_gain_.x() * l, bg_chroma_gain_.y() * l);
  for (int k = 0; k < object_count(); ++k) {
    const double alpha = std::clamp(0.5 - signed_distance(k, t, p), 0.0, 1.0);
    if (alpha <= 0) continue;
    c = alpha * texel_color(objects_[k], to_local(k, t, p)) + (1 - alpha) * c;
  }
  return c;
}

// ---------------------------------------------------------------------------

VideoClip generate_clip(const SynthSpec& spec) {
  const SynthScene scene(spec);
  const int h = spec.height, w = spec.width;
  VideoClip clip;
  for (int t = 0; t < spec.n_frames; ++t) {
    GrayFrame gray(h, w);
    ColorEmbedding ab(h, w);
    SegmentationMap seg(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Vector2d p(x, y);
        // Round-trip through clamped sRGB so stored frames match their PNG form.
        const Eigen::Vector3d rgb = colorspace::lab_to_srgb(scene.lab(t, p)).cwiseMax(0.0).cwiseMin(1.0);
        const colorspace::Lab lab = colorspace::srgb_to_lab(rgb);
        gray(0, y, x) = static_cast<float>(std::clamp(colorspace::normalize_l(lab.x()), 0.0, 1.0));
        ab(0, y, x) = static_cast<float>(std::clamp(colorspace::normalize_ab(lab.y()), 0.0, 1.0));
        ab(1, y, x) = static_cast<float>(std::clamp(colorspace::normalize_ab(lab.z()), 0.0, 1.0));
        seg(0, y, x) = scene.topmost(t, p) >= 0 ? 1.f : 0.f;
      }
    }
    clip.gray.push_back(std::move(gray));
    clip.ab.push_back(std::move(ab));
    clip.seg.push_back(std::move(seg));
    if (t + 1 < spec.n_frames) {
      FlowField f(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const Eigen::Vector2d d = scene.flow(t, Eigen::Vector2d(x, y));
          f(0, y, x) = static_cast<float>(d.x());
          f(1, y, x) = static_cast<float>(d.y());
        }
      clip.flows.push_back(std::move(f));
    }
  }
  return clip;
}

void save_clip(const VideoClip& clip, const fs::path& dir) {
  clip.validate();
  fs::create_directories(dir);
  for (int t = 0; t < clip.frame_count(); ++t) {
    const Tensorf img = clip.has_color() ? colorspace::lab_to_rgb(clip.gray[t], clip.ab[t]).tensor() : clip.gray[t].tensor();
    io::write_png(dir / io::frame_name("frame", t, "png"), img);
    if (clip.has_seg()) io::write_png(dir / io::frame_name("seg", t, "png"), clip.seg[t].tensor());
    if (clip.has_flows() && t + 1 < clip.frame_count())
      io::write_svcf(dir / io::frame_name("flow", t, "svcf"), clip.flows[t]);
  }
}

VideoClip load_clip(const fs::path& dir) {
  VideoClip clip;
  std::vector<Tensorf> images;
  for (int t = 0;; ++t) {
    const auto p = dir / io::frame_name("frame", t, "png");
    if (!fs::exists(p)) {
      if (t == 0) throw LoadError(p.string(), "missing file");
      break;
    }
    images.push_back(io::read_png(p));
  }
  const bool color = std::all_of(images.begin(), images.end(), [](const Tensorf& t) { return t.c == 3; });
  for (auto& img : images) {
    if (color) {
      auto [g, ab] = colorspace::rgb_to_lab(RgbImage(std::move(img)));
      clip.gray.push_back(std::move(g));
      clip.ab.push_back(std::move(ab));
    } else if (img.c == 1) {
      clip.gray.emplace_back(std::move(img));
    } else {
      clip.gray.push_back(colorspace::rgb_to_lab(RgbImage(std::move(img))).first);
    }
  }
  const int n = clip.frame_count();
  if (fs::exists(dir / io::frame_name("seg", 0, "png"))) {
    for (int t = 0; t < n; ++t) {
      const auto p = dir / io::frame_name("seg", t, "png");
      if (!fs::exists(p)) throw LoadError(p.string(), "missing file");
      Tensorf s = io::read_png(p);
      if (s.c != 1) throw LoadError(p.string(), "segmentation must be single-channel");
      clip.seg.emplace_back(std::move(s));
    }
  }
  if (n > 1 && fs::exists(dir / io::frame_name("flow", 0, "svcf"))) {
    for (int t = 0; t + 1 < n; ++t) {
      const auto p = dir / io::frame_name("flow", t, "svcf");
      if (!fs::exists(p)) throw LoadError(p.string(), "missing file");
      clip.flows.push_back(io::read_svcf(p));
    }
  }
  try {
    clip.validate();
  } catch (const ValidationError& e) {
    throw LoadError(dir.string(), e.what());
  }
  return clip;
}

namespace {

// Mirrored flow: out(x, y) = (-f_x(W-1-x, y), f_y(W-1-x, y)).
FlowField mirror_flow(const FlowField& f) {
  FlowField out(image_ops::mirror_horizontal(f.tensor()));
  out.tensor().m.row(0) *= -1.f;
  return out;
}

}  // namespace

VideoClip make_training_batch_at(const VideoClip& clip, int t) {
  clip.validate();
  require(clip.frame_count() >= 7, "training batch needs at least 7 frames, clip has " +
                                       std::to_string(clip.frame_count()));
  require(t >= 0 && t + 7 <= clip.frame_count(), "training batch start out of range");
  VideoClip out;
  std::vector<int> order;
  for (int k = 0; k < 6; ++k) order.push_back(t + 5 - k);
  for (int k = 0; k < 7; ++k) order.push_back(t + k);
  for (int k = 0; k < 13; ++k) {
    const int s = order[k];
    const bool mirrored = k < 6;
    auto pick = [&](const auto& frame) {
      using R = std::decay_t<decltype(frame)>;
      return mirrored ? R(image_ops::mirror_horizontal(frame.tensor())) : frame;
    };
    out.gray.push_back(pick(clip.gray[s]));
    if (clip.has_color()) out.ab.push_back(pick(clip.ab[s]));
    if (clip.has_seg()) out.seg.push_back(pick(clip.seg[s]));
  }
  if (clip.has_flows()) {
    const int h = clip.height(), w = clip.width();
    for (int k = 0; k < 5; ++k) {
      const int s = t + 5 - k;
      // Mirrored frames run backwards in time: use the inverse of flow s-1 -> s.
      out.flows.push_back(mirror_flow(flowwarp::invert_flow(clip.flows[s - 1])));
    }
    FlowField seam(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) seam(0, y, x) = static_cast<float>(w - 1 - 2 * x);
    out.flows.push_back(std::move(seam));
    for (int k = 0; k < 6; ++k) out.flows.push_back(clip.flows[t + k]);
    // The mirrored half runs backwards, so its inverse steps are the clip's
    // forward flows; the seam is its own inverse.
    for (int k = 0; k < 5; ++k) out.backward_flows.push_back(mirror_flow(clip.flows[t + 4 - k]));
    out.backward_flows.push_back(out.flows[5]);
    for (int k = 0; k < 6; ++k)
      out.backward_flows.push_back(clip.backward_flows.empty() ? flowwarp::invert_flow(clip.flows[t + k])
                                                               : clip.backward_flows[t + k]);
  }
  return out;
}

VideoClip make_training_batch(const VideoClip& clip, std::mt19937_64& rng) {
  require(clip.frame_count() >= 7, "training batch needs at least 7 frames, clip has " +
                                       std::to_string(clip.frame_count()));
  std::uniform_int_distribution<int> pick(0, clip.frame_count() - 7);
  return make_training_batch_at(clip, pick(rng));
}

VideoClip downsample_clip(const VideoClip& clip, int factor) {
  if (factor == 1) return clip;
  VideoClip out;
  const int h = clip.height() / factor, w = clip.width() / factor;
  for (const auto& g : clip.gray) out.gray.emplace_back(image_ops::avg_pool(g.tensor(), factor));
  for (const auto& a : clip.ab) out.ab.emplace_back(image_ops::avg_pool(a.tensor(), factor));
  for (const auto& s : clip.seg) out.seg.emplace_back(image_ops::avg_pool(s.tensor(), factor));
  for (const auto& f : clip.flows) out.flows.push_back(flowwarp::rescale_flow(f, h, w));
  for (const auto& f : clip.backward_flows) out.backward_flows.push_back(flowwarp::rescale_flow(f, h, w));
  return out;
}

}  // namespace svc::synthdata
