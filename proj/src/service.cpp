#include "svc/service.hpp"

#include <httplib.h>

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "svc/colorspace.hpp"
#include "svc/io.hpp"
#include "svc/pipeline.hpp"
#include "svc/synthdata.hpp"

namespace svc::service {

using nlohmann::json;

namespace {

struct Cancelled {};

struct Session {
  std::mutex mu;
  std::vector<GrayFrame> native;
  std::vector<GrayFrame> proc;  // frames at the service's processing resolution
  std::vector<FlowField> flows;
  std::string clip_path;
  std::optional<scribble::ScribbleSet> scribbles;
  std::string status = "idle";
  std::string error;
  std::atomic<int> done{0};
  std::uint64_t version = 0;
  std::uint64_t result_version = 0;
  std::vector<std::string> results;  // PNG bytes per frame
  std::atomic<bool> cancel{false};
  std::thread worker;

  ~Session() {
    cancel = true;
    if (worker.joinable()) worker.join();
  }
};

void send_json(httplib::Response& res, int code, const json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int code, const std::string& msg) { send_json(res, code, {{"error", msg}}); }

GrayFrame to_gray(Tensorf img) {
  if (img.c == 1) return GrayFrame(std::move(img));
  require(img.c == 3, "frames must be gray or RGB PNGs");
  return colorspace::rgb_to_lab(RgbImage(std::move(img))).first;
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const ModelState> model;
  ServiceOptions options;
  httplib::Server server;
  std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  void routes();
  void create(const httplib::Request& req, httplib::Response& res);
  void put_scribbles(Session& s, const httplib::Request& req, httplib::Response& res);
  void colorize(Session& s, const httplib::Request& req, httplib::Response& res);
  void status(Session& s, httplib::Response& res);
  void result(Session& s, int t, const httplib::Request& req, httplib::Response& res);
  void run(Session& s, scribble::ScribbleSet scribbles, std::uint64_t version, int ratio,
           std::unique_ptr<flowwarp::FlowProvider> flows);
};

void Service::Impl::create(const httplib::Request& req, httplib::Response& res) {
  auto s = std::make_shared<Session>();
  try {
    if (req.is_multipart_form_data()) {
      for (const auto& f : req.get_file_values("frames")) s->native.push_back(to_gray(io::decode_png(f.content)));
      if (s->native.empty()) return send_error(res, 400, "multipart body has no 'frames' parts");
      for (const auto& f : s->native)
        if (!f.same_size(s->native.front())) return send_error(res, 400, "frames differ in resolution");
    } else {
      const json body = json::parse(req.body);
      s->clip_path = body.at("clip").get<std::string>();
      synthdata::VideoClip clip = synthdata::load_clip(s->clip_path);
      s->native = std::move(clip.gray);
      s->flows = std::move(clip.flows);
    }
  } catch (const LoadError& e) {
    return send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    return send_error(res, 400, std::string("bad session body: ") + e.what());
  }
  for (const auto& f : s->native) s->proc.push_back(pipeline::resample_gray(f, options.height, options.width));
  const std::string id = new_id();
  const int n = static_cast<int>(s->native.size());
  {
    std::lock_guard lock(mu);
    sessions.emplace(id, std::move(s));
  }
  send_json(res, 201, {{"id", id}, {"frame_count", n}, {"resolution", {options.height, options.width}}});
}

void Service::Impl::put_scribbles(Session& s, const httplib::Request& req, httplib::Response& res) {
  scribble::ScribbleSet set;
  try {
    set = scribble::from_json(json::parse(req.body));
  } catch (const std::exception& e) {
    return send_json(res, 422, {{"errors", json::array({{{"index", -1}, {"message", e.what()}}})}});
  }
  const auto issues = scribble::validate(set, options.height, options.width);
  if (!issues.empty()) {
    json errs = json::array();
    for (const auto& i : issues) errs.push_back({{"index", i.index}, {"message", i.message}});
    return send_json(res, 422, {{"errors", errs}});
  }
  std::lock_guard lock(s.mu);
  s.scribbles = std::move(set);
  ++s.version;
  if (s.status != "running") s.status = "idle";
  send_json(res, 200, {{"version", s.version}});
}

void Service::Impl::colorize(Session& s, const httplib::Request& req, httplib::Response& res) {
  int ratio = 2;
  if (req.has_param("sr_ratio")) {
    try {
      ratio = std::stoi(req.get_param_value("sr_ratio"));
    } catch (const std::exception&) {
      ratio = 0;
    }
  }
  if (!ssnet::valid_ratio(ratio)) return send_error(res, 400, "sr_ratio must be 2, 4 or 8");
  const std::string flow = req.has_param("flow") ? req.get_param_value("flow") : "zero";

  std::lock_guard lock(s.mu);
  if (s.status == "running") return send_error(res, 409, "colorization already running");
  std::unique_ptr<flowwarp::FlowProvider> provider;
  try {
    if (flow == "zero") {
      provider = std::make_unique<flowwarp::ZeroFlow>();
    } else if (flow == "gt") {
      if (s.flows.empty()) return send_error(res, 400, "session has no ground-truth flow");
      provider = std::make_unique<flowwarp::GroundTruthFlow>(s.flows);
    } else if (flow == "file") {
      if (s.clip_path.empty()) return send_error(res, 400, "flow=file needs a session created from a clip path");
      provider = std::make_unique<flowwarp::FileFlow>(s.clip_path);
    } else {
      return send_error(res, 400, "flow must be zero, gt or file");
    }
  } catch (const std::exception& e) {
    return send_error(res, 400, e.what());
  }
  if (s.worker.joinable()) s.worker.join();
  scribble::ScribbleSet set =
      s.scribbles.value_or(scribble::ScribbleSet{options.height, options.width, scribble::kDefaultRadius, {}});
  s.status = "running";
  s.error.clear();
  s.done = 0;
  s.results.clear();
  s.cancel = false;
  s.worker = std::thread([this, &s, set = std::move(set), v = s.version, ratio, p = std::move(provider)]() mutable {
    run(s, std::move(set), v, ratio, std::move(p));
  });
  send_json(res, 202, {{"status", "running"}, {"version", s.version}});
}

void Service::Impl::run(Session& s, scribble::ScribbleSet scribbles, std::uint64_t version, int ratio,
                        std::unique_ptr<flowwarp::FlowProvider> flows) {
  try {
    const auto frames = pipeline::prepare_frames(s.native, options.height, options.width, ratio);
    pipeline::ColorizeOptions opt;
    opt.sr_ratio = ratio;
    opt.progress = [&](int done, int) {
      if (s.cancel) throw Cancelled{};
      s.done = done;
    };
    const auto out = pipeline::colorize(*model, frames.proc, frames.full, scribble::rasterize(scribbles), *flows, opt);
    std::vector<std::string> pngs;
    for (std::size_t t = 0; t < out.z.size(); ++t) {
      const auto bytes = io::encode_png(pipeline::compose_rgb(frames.full[t], out.z[t]).tensor());
      pngs.emplace_back(bytes.begin(), bytes.end());
    }
    std::lock_guard lock(s.mu);
    s.results = std::move(pngs);
    s.result_version = version;
    s.status = "done";
  } catch (const Cancelled&) {
    std::lock_guard lock(s.mu);
    s.status = "failed";
    s.error = "cancelled";
  } catch (const std::exception& e) {
    std::lock_guard lock(s.mu);
    s.status = "failed";
    s.error = e.what();
  }
}

void Service::Impl::status(Session& s, httplib::Response& res) {
  std::lock_guard lock(s.mu);
  const int total = static_cast<int>(s.native.size());
  const int done = s.status == "done" ? total : s.done.load();
  json body = {{"status", s.status},
               {"progress", static_cast<double>(done) / total},
               {"frames_done", done},
               {"frame_count", total},
               {"version", s.version}};
  if (!s.results.empty()) body["result_version"] = s.result_version;
  if (!s.error.empty()) body["error"] = s.error;
  send_json(res, 200, body);
}

void Service::Impl::result(Session& s, int t, const httplib::Request& req, httplib::Response& res) {
  std::lock_guard lock(s.mu);
  if (s.results.empty()) return send_error(res, 404, "no result yet");
  if (t < 0 || t >= static_cast<int>(s.results.size())) return send_error(res, 404, "frame out of range");
  if (s.result_version != s.version) return send_error(res, 409, "result is stale; scribbles changed");
  if (req.has_param("version") && req.get_param_value("version") != std::to_string(s.result_version))
    return send_error(res, 409, "requested version is not the current result");
  res.set_header("X-Result-Version", std::to_string(s.result_version));
  res.set_content(s.results[t], "image/png");
}

void Service::Impl::routes() {
  auto with_session = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "unknown session");
      fn(*s, req, res);
    };
  };
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create(req, res); });
  server.Get(R"(/sessions/([0-9a-f]+)/frame/(\d+))", with_session([this](Session& s, const auto& req, auto& res) {
               const int t = std::stoi(req.matches[2]);
               if (t >= static_cast<int>(s.proc.size())) return send_error(res, 404, "frame out of range");
               const auto bytes = io::encode_png(s.proc[t].tensor());
               res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
             }));
  server.Put(R"(/sessions/([0-9a-f]+)/scribbles)",
             with_session([this](Session& s, const auto& req, auto& res) { put_scribbles(s, req, res); }));
  server.Post(R"(/sessions/([0-9a-f]+)/colorize)",
              with_session([this](Session& s, const auto& req, auto& res) { colorize(s, req, res); }));
  server.Get(R"(/sessions/([0-9a-f]+)/status)",
             with_session([this](Session& s, const auto&, auto& res) { status(s, res); }));
  server.Get(R"(/sessions/([0-9a-f]+)/result/(\d+))", with_session([this](Session& s, const auto& req, auto& res) {
               result(s, std::stoi(req.matches[2]), req, res);
             }));
  server.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::shared_ptr<Session> gone;
    {
      std::lock_guard lock(mu);
      auto it = sessions.find(req.matches[1]);
      if (it == sessions.end()) return send_error(res, 404, "unknown session");
      gone = std::move(it->second);
      sessions.erase(it);
    }
    gone->cancel = true;
    res.status = 204;
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });
  server.set_payload_max_length(std::size_t{1} << 30);
}

Service::Service(std::shared_ptr<const ModelState> model, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  require(model && model->cpnet && model->ssnet, "service needs a loaded model");
  require(options.height % 32 == 0 && options.width % 32 == 0,
          "processing resolution must be a multiple of 32, got " + dims_string(options.height, options.width));
  impl_->model = std::move(model);
  impl_->options = options;
  impl_->routes();
}

Service::~Service() {
  stop();
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(impl_->mu);
    sessions.swap(impl_->sessions);
  }
  for (auto& [_, s] : sessions) s->cancel = true;
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

}  // namespace svc::service
