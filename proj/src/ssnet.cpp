#include "svc/ssnet.hpp"

namespace svc::ssnet {

bool valid_ratio(int r) { return r == 2 || r == 4 || r == 8; }

void SsnetConfig::validate() const {
  if (refinement_channels < 1 || combination_channels < 1 || sr_channels < 2)
    throw ConfigError("ssnet channel counts must be positive (sr_channels >= 2)");
  if (!valid_ratio(sr_ratio)) throw ConfigError("sr_ratio must be 2, 4 or 8");
  if (!(tau > 0)) throw ConfigError("tau must be positive");
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
}

nlohmann::json to_json(const SsnetConfig& c) {
  return {{"refinement_channels", c.refinement_channels},
          {"combination_channels", c.combination_channels},
          {"sr_channels", c.sr_channels},
          {"sr_ratio", c.sr_ratio},
          {"tau", c.tau},
          {"alpha", c.alpha}};
}

SsnetConfig ssnet_config_from_json(const nlohmann::json& j) {
  SsnetConfig c;
  c.refinement_channels = j.value("refinement_channels", c.refinement_channels);
  c.combination_channels = j.value("combination_channels", c.combination_channels);
  c.sr_channels = j.value("sr_channels", c.sr_channels);
  c.sr_ratio = j.value("sr_ratio", c.sr_ratio);
  c.tau = j.value("tau", c.tau);
  c.alpha = j.value("alpha", c.alpha);
  c.validate();
  return c;
}

}  // namespace svc::ssnet
