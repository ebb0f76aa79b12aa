#include "svc/cpnet.hpp"

namespace svc::cpnet {

void CpnetConfig::validate() const {
  if (base_channels < 1) throw ConfigError("cpnet base_channels must be positive");
  if (depth < 1 || depth > kEncoderStages) throw ConfigError("cpnet depth must be in [1,5]");
  if (semantic_channels < 1) throw ConfigError("cpnet semantic_channels must be positive");
  if (residual_blocks < 0) throw ConfigError("cpnet residual_blocks must be non-negative");
}

nlohmann::json to_json(const CpnetConfig& c) {
  return {{"base_channels", c.base_channels},
          {"depth", c.depth},
          {"semantic_channels", c.semantic_channels},
          {"residual_blocks", c.residual_blocks},
          {"semantic_encoder_seed", c.semantic_encoder_seed}};
}

CpnetConfig cpnet_config_from_json(const nlohmann::json& j) {
  CpnetConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depth = j.value("depth", c.depth);
  c.semantic_channels = j.value("semantic_channels", c.semantic_channels);
  c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
  c.semantic_encoder_seed = j.value("semantic_encoder_seed", c.semantic_encoder_seed);
  c.validate();
  return c;
}

CpnetResult cpnet_forward(const Cpnet<float>& net, const GrayFrame& gray, const ScribbleMap& scribbles) {
  nn::Tape<float> tape(false);
  auto out = net(tape.constant(gray.tensor()), tape.constant(scribbles.tensor()));
  return {ColorEmbedding(out.color.value()), SegmentationMap(out.seg.value())};
}

}  // namespace svc::cpnet
