#include <doctest.h>

#include <fstream>
#include <sstream>

#include "svc/checkpoint.hpp"
#include "test_util.hpp"

using namespace svc;

namespace {

ModelState model(std::uint64_t seed) {
  cpnet::CpnetConfig cc;
  cc.base_channels = 4;
  cc.residual_blocks = 1;
  ssnet::SsnetConfig sc;
  sc.refinement_channels = 4;
  sc.combination_channels = 4;
  sc.sr_channels = 4;
  sc.sr_ratio = 4;
  sc.tau = 150;
  return ModelState(cc, sc, seed);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_CASE("round trip preserves parameters, configs and stages") {
  testutil::TempDir dir("ckpt");
  ModelState a = model(5);
  a.stages_completed = {"cpnet_warmup", "ssnet_sr_warmup"};
  save_checkpoint(a, dir / "m.svck");
  const ModelState b = load_checkpoint(dir / "m.svck");
  CHECK(b.stages_completed == a.stages_completed);
  CHECK(b.init_seed == 5);
  CHECK(b.ssnet_config.sr_ratio == 4);
  CHECK(b.ssnet_config.tau == 150);
  CHECK(b.cpnet_config.base_channels == 4);
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK(pa[k]->name == pb[k]->name);
    CHECK(pa[k]->value == pb[k]->value);
    CHECK(pa[k]->frozen == pb[k]->frozen);
  }
  CHECK(a.frozen_hash() == b.frozen_hash());
  save_checkpoint(b, dir / "again.svck");
  CHECK(slurp(dir / "m.svck") == slurp(dir / "again.svck"));
}

TEST_CASE("frozen hash follows the encoder seed only") {
  CHECK(model(1).frozen_hash() == model(2).frozen_hash());
  ModelState other = model(1);
  cpnet::CpnetConfig cc = other.cpnet_config;
  cc.semantic_encoder_seed = 99;
  CHECK(ModelState(cc, other.ssnet_config, 1).frozen_hash() != other.frozen_hash());
}

TEST_CASE("malformed checkpoints raise LoadError") {
  testutil::TempDir dir("ckpt_bad");
  save_checkpoint(model(3), dir / "ok.svck");
  const std::string ok = slurp(dir / "ok.svck");

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.svck"), LoadError);
  spit(dir / "magic.svck", "XXXX" + ok.substr(4));
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.svck"), LoadError);
  std::string version = ok;
  version[4] = 9;
  spit(dir / "version.svck", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.svck"), LoadError);
  spit(dir / "short.svck", ok.substr(0, ok.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.svck"), LoadError);
  spit(dir / "header.svck", ok.substr(0, 40));
  CHECK_THROWS_AS(load_checkpoint(dir / "header.svck"), LoadError);

  // Tampering with a frozen weight breaks the seed check.
  ModelState m = model(3);
  for (auto* p : m.parameters())
    if (p->frozen) {
      p->value(0, 0) += 1.f;
      break;
    }
  save_checkpoint(m, dir / "tampered.svck");
  try {
    load_checkpoint(dir / "tampered.svck");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("frozen") != std::string::npos);
    CHECK(std::string(e.what()).find("tampered.svck") != std::string::npos);
  }
}
