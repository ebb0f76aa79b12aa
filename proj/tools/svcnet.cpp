// svcnet: synthetic data, training, batch colorization and the HTTP service.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <nlohmann/json.hpp>

#include "svc/checkpoint.hpp"
#include "svc/colorspace.hpp"
#include "svc/io.hpp"
#include "svc/pipeline.hpp"
#include "svc/runtime.hpp"
#include "svc/service.hpp"
#include "svc/synthdata.hpp"
#include "svc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace svc;

namespace {

enum Exit { kOk = 0, kUsage = 2, kConfig = 3, kData = 4, kInternal = 5 };

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError(p.string(), "missing file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(p.string(), std::string("malformed JSON (") + e.what() + ")");
  }
}

std::pair<int, int> parse_resolution(const std::string& s) {
  int h = 0, w = 0;
  char x = 0;
  if (std::sscanf(s.c_str(), "%d%c%d", &h, &x, &w) != 3 || x != 'x' || h < 1 || w < 1)
    throw ConfigError("resolution must look like 256x448, got '" + s + "'");
  return {h, w};
}

int synth_data(const std::string& spec_path, const std::string& out) {
  synthdata::SynthSpec spec;
  try {
    spec = synthdata::spec_from_json(read_json(spec_path));
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("bad spec: ") + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad spec: ") + e.what());
  }
  synthdata::save_clip(synthdata::generate_clip(spec), out);
  std::cout << "wrote " << spec.n_frames << " frames to " << out << "\n";
  return kOk;
}

std::vector<synthdata::VideoClip> load_dataset(const fs::path& dir) {
  if (fs::exists(dir / io::frame_name("frame", 0, "png"))) return {synthdata::load_clip(dir)};
  std::vector<fs::path> subdirs;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / io::frame_name("frame", 0, "png"))) subdirs.push_back(e.path());
  if (subdirs.empty()) throw LoadError((dir / io::frame_name("frame", 0, "png")).string(), "missing file");
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<synthdata::VideoClip> clips;
  for (const auto& d : subdirs) clips.push_back(synthdata::load_clip(d));
  return clips;
}

int train(const std::string& stage_name, const std::string& data, const std::string& config_path,
          const std::string& ckpt_in, const std::string& ckpt_out, std::string loss_csv) {
  training::Stage stage;
  try {
    stage = training::parse_stage(stage_name);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  json cfg_json = config_path.empty() ? json::object() : read_json(config_path);
  training::TrainConfig cfg;
  ModelState state;
  try {
    cfg = training::train_config_from_json(cfg_json, stage);
    if (ckpt_in.empty()) {
      const json m = cfg_json.value("model", json::object());
      state = ModelState(cpnet::cpnet_config_from_json(m.value("cpnet", json::object())),
                         ssnet::ssnet_config_from_json(m.value("ssnet", json::object())),
                         m.value("init_seed", std::uint64_t{1}));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  if (!ckpt_in.empty()) state = load_checkpoint(ckpt_in);
  const auto clips = load_dataset(data);
  const auto result = training::run_stage(cfg, clips, state);
  save_checkpoint(state, ckpt_out);
  if (loss_csv.empty()) loss_csv = fs::path(ckpt_out).replace_extension(".csv").string();
  training::write_loss_csv(result.curve, loss_csv);
  std::cout << training::to_string(stage) << ": " << result.curve.size() << " steps, final loss "
            << (result.curve.empty() ? 0.0 : result.curve.back().loss) << "\n";
  return kOk;
}

struct ColorizeArgs {
  std::string clip, scribbles, ckpt, out, flow = "gt", flow_dir, resolution = "256x448";
  int sr_ratio = 2;
};

int colorize(const ColorizeArgs& a) {
  const auto [h, w] = parse_resolution(a.resolution);
  if (!ssnet::valid_ratio(a.sr_ratio)) throw ConfigError("--sr-ratio must be 2, 4 or 8");
  const ModelState model = load_checkpoint(a.ckpt);
  const synthdata::VideoClip clip = synthdata::load_clip(a.clip);

  scribble::ScribbleSet set;
  try {
    set = scribble::from_json(read_json(a.scribbles));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad scribble JSON: ") + e.what());
  }
  const auto issues = scribble::validate(set, h, w);
  if (!issues.empty()) {
    std::string msg = "scribbles rejected:";
    for (const auto& i : issues) msg += "\n  [" + std::to_string(i.index) + "] " + i.message;
    throw ValidationError(msg);
  }

  std::unique_ptr<flowwarp::FlowProvider> flows;
  if (a.flow == "zero") {
    flows = std::make_unique<flowwarp::ZeroFlow>();
  } else if (a.flow == "gt") {
    if (!clip.has_flows()) throw ValidationError("--flow gt: clip has no flow files");
    flows = std::make_unique<flowwarp::GroundTruthFlow>(clip.flows);
  } else if (a.flow == "file") {
    flows = std::make_unique<flowwarp::FileFlow>(a.flow_dir.empty() ? a.clip : a.flow_dir);
  } else {
    throw ConfigError("--flow must be gt, zero or file");
  }

  const int r = a.sr_ratio;
  const auto frames = pipeline::prepare_frames(clip.gray, h, w, r);
  pipeline::ColorizeOptions opt;
  opt.sr_ratio = r;
  opt.progress = [](int done, int total) { std::fprintf(stderr, "\rframe %d/%d", done, total); };
  const auto res = pipeline::colorize(model, frames.proc, frames.full, scribble::rasterize(set), *flows, opt);
  std::fprintf(stderr, "\n");

  fs::create_directories(a.out);
  std::vector<RgbImage> pred;
  for (int t = 0; t < clip.frame_count(); ++t) {
    pred.push_back(pipeline::compose_rgb(frames.full[t], res.z[t]));
    io::write_png(fs::path(a.out) / io::frame_name("frame", t, "png"), pred.back().tensor());
    io::write_png(fs::path(a.out) / io::frame_name("seg", t, "png"), res.seg[t].tensor());
  }
  if (clip.has_color()) {
    std::vector<RgbImage> gt;
    std::vector<FlowField> steps;
    for (int t = 0; t < clip.frame_count(); ++t) {
      gt.push_back(colorspace::lab_to_rgb(GrayFrame(pipeline::resample(clip.gray[t].tensor(), h * r, w * r)),
                                          ColorEmbedding(pipeline::resample(clip.ab[t].tensor(), h * r, w * r))));
      if (t + 1 < clip.frame_count()) steps.push_back(flows->step(t, h * r, w * r));
    }
    const auto report = training::evaluate(pred, gt, steps);
    std::ofstream(fs::path(a.out) / "metrics.json") << report.to_json().dump(2) << "\n";
    std::cout << "psnr " << report.psnr_db << " ssim " << report.ssim << " twe " << report.temporal_warp_error
              << "\n";
  }
  std::cout << "wrote " << clip.frame_count() << " frames to " << a.out << "\n";
  return kOk;
}

int serve(const std::string& ckpt, const std::string& host, int port, const std::string& resolution) {
  const auto [h, w] = parse_resolution(resolution);
  auto model = std::make_shared<const ModelState>(load_checkpoint(ckpt));
  service::Service svc(model, {h, w});
  const int bound = svc.bind(host, port);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  svc.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Scribble-based video colorization"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic clip");
  synth->add_option("--spec", spec_path, "Spec JSON")->required();
  synth->add_option("--out", out_dir, "Output clip directory")->required();

  std::string stage, data, config, ckpt_in, ckpt_out, loss_csv;
  auto* tr = app.add_subcommand("train", "Run one training stage");
  tr->add_option("--stage", stage, "cpnet_warmup | ssnet_rm_warmup | ssnet_sr_warmup | joint")->required();
  tr->add_option("--data", data, "Clip directory or directory of clips")->required();
  tr->add_option("--config", config, "Training config JSON");
  tr->add_option("--ckpt-in", ckpt_in, "Checkpoint to continue from");
  tr->add_option("--ckpt-out", ckpt_out, "Checkpoint to write")->required();
  tr->add_option("--loss-csv", loss_csv, "Loss curve CSV (default: checkpoint path with .csv)");

  ColorizeArgs ca;
  auto* col = app.add_subcommand("colorize", "Colorize a clip from first-frame scribbles");
  col->add_option("--clip", ca.clip, "Clip directory")->required();
  col->add_option("--scribbles", ca.scribbles, "Scribble JSON")->required();
  col->add_option("--ckpt", ca.ckpt, "Checkpoint")->required();
  col->add_option("--out", ca.out, "Output directory")->required();
  col->add_option("--sr-ratio", ca.sr_ratio, "Upsampling ratio: 2, 4 or 8");
  col->add_option("--flow", ca.flow, "gt | zero | file");
  col->add_option("--flow-dir", ca.flow_dir, "Directory of .svcf files for --flow file (default: the clip)");
  col->add_option("--resolution", ca.resolution, "Processing resolution HxW");

  std::string serve_ckpt, host = "127.0.0.1", serve_res = "256x448";
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "Run the HTTP service");
  sv->add_option("--ckpt", serve_ckpt, "Checkpoint")->required();
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--port", port, "Port (0 picks a free one)");
  sv->add_option("--resolution", serve_res, "Processing resolution HxW");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return synth_data(spec_path, out_dir);
    if (*tr) return train(stage, data, config, ckpt_in, ckpt_out, loss_csv);
    if (*col) return colorize(ca);
    if (*sv) return serve(serve_ckpt, host, port, serve_res);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const LoadError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
