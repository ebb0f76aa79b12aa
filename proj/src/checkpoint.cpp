#include "svc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace svc {

ModelState::ModelState(const cpnet::CpnetConfig& cc, const ssnet::SsnetConfig& sc, std::uint64_t seed)
    : cpnet_config(cc), ssnet_config(sc), init_seed(seed) {
  cpnet = std::make_unique<cpnet::Cpnet<float>>(cc);
  ssnet = std::make_unique<ssnet::Ssnet<float>>(sc);
  std::mt19937_64 rng(seed);
  cpnet->init(rng);
  ssnet->init(rng);
}

std::vector<nn::Parameter<float>*> ModelState::parameters() const {
  std::vector<nn::Parameter<float>*> out;
  cpnet->collect(out);
  ssnet->collect(out);
  return out;
}

std::uint64_t ModelState::frozen_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* p : parameters()) {
    if (!p->frozen) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p->value.size()) * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw LoadError(path, "truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  nlohmann::json header;
  header["cpnet"] = cpnet::to_json(state.cpnet_config);
  header["ssnet"] = ssnet::to_json(state.ssnet_config);
  header["init_seed"] = state.init_seed;
  header["semantic_encoder_seed"] = state.cpnet_config.semantic_encoder_seed;
  header["stages_completed"] = state.stages_completed;
  nlohmann::json params = nlohmann::json::array();
  std::uint64_t offset = 0;
  const auto all = state.parameters();
  for (const auto* p : all) {
    params.push_back({{"name", p->name},
                      {"shape", p->shape},
                      {"frozen", p->frozen},
                      {"offset", offset},
                      {"count", p->value.size()}});
    offset += static_cast<std::uint64_t>(p->value.size());
  }
  header["params"] = params;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError(path.string(), "cannot write checkpoint");
  os.write("SVCK", 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : all) os.write(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(float));
  if (!os) throw LoadError(path.string(), "write failed");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  const std::string ps = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError(ps, "missing checkpoint");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SVCK", 4) != 0) throw LoadError(ps, "not a checkpoint");
  const auto version = get_le<std::uint32_t>(is, ps);
  if (version != kCheckpointVersion)
    throw LoadError(ps, "unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(is, ps);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw LoadError(ps, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(ps, std::string("bad checkpoint header: ") + e.what());
  }

  ModelState state;
  try {
    state.cpnet_config = cpnet::cpnet_config_from_json(header.at("cpnet"));
    state.ssnet_config = ssnet::ssnet_config_from_json(header.at("ssnet"));
    state.init_seed = header.value("init_seed", std::uint64_t{1});
    state.stages_completed = header.value("stages_completed", std::set<std::string>{});
    state.cpnet = std::make_unique<cpnet::Cpnet<float>>(state.cpnet_config);
    state.ssnet = std::make_unique<ssnet::Ssnet<float>>(state.ssnet_config);
    // The frozen encoder is regenerated from its seed; stored weights must agree.
    const std::uint64_t seeded = state.frozen_hash();

    const auto named = nn::by_name(state.parameters());
    const auto data_start = is.tellg();
    for (const auto& entry : header.at("params")) {
      const std::string name = entry.at("name");
      auto it = named.find(name);
      if (it == named.end()) throw LoadError(ps, "unknown parameter " + name);
      auto* p = it->second;
      const auto count = entry.at("count").get<std::int64_t>();
      if (count != p->value.size()) throw LoadError(ps, "size mismatch for " + name);
      is.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>() * sizeof(float)));
      if (!is.read(reinterpret_cast<char*>(p->value.data()), count * sizeof(float)))
        throw LoadError(ps, "truncated data for " + name);
      p->frozen = entry.value("frozen", p->frozen);
    }
    if (named.size() != header.at("params").size()) throw LoadError(ps, "checkpoint is missing parameters");
    if (state.frozen_hash() != seeded) throw LoadError(ps, "frozen encoder weights do not match the recorded seed");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(ps, std::string("bad checkpoint header: ") + e.what());
  } catch (const ValidationError& e) {
    throw LoadError(ps, std::string("bad checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(ps, std::string("bad checkpoint config: ") + e.what());
  }
  return state;
}

}  // namespace svc
