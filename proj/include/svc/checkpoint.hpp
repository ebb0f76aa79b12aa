#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "svc/cpnet.hpp"
#include "svc/ssnet.hpp"

namespace svc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Every parameter of both networks plus configuration and stage history.
struct ModelState {
  cpnet::CpnetConfig cpnet_config;
  ssnet::SsnetConfig ssnet_config;
  std::uint64_t init_seed = 1;
  std::set<std::string> stages_completed;
  std::unique_ptr<cpnet::Cpnet<float>> cpnet;
  std::unique_ptr<ssnet::Ssnet<float>> ssnet;

  ModelState() = default;
  ModelState(const cpnet::CpnetConfig& cc, const ssnet::SsnetConfig& sc, std::uint64_t seed);

  std::vector<nn::Parameter<float>*> parameters() const;
  /// Order-sensitive FNV-1a over the bytes of every frozen parameter.
  std::uint64_t frozen_hash() const;
  bool has_stage(const std::string& s) const { return stages_completed.count(s) > 0; }
};

/// Layout: "SVCK", u32 version, u64 header length, JSON header, then
/// little-endian float32 parameter data at the offsets listed in the header.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace svc
