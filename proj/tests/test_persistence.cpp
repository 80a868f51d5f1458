#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <snrl/checkpoint.hpp>
#include <snrl/config.hpp>

#include <filesystem>

using namespace snrl;

namespace {

TrainerOptions tiny(Regime regime) {
  TrainerOptions o;
  o.net.policy_hidden = {16, 16};
  o.net.value_hidden = {16};
  o.net.disc_hidden = {8};
  o.n_envs = 2;
  o.horizon = 16;
  o.ppo.minibatch_size = 16;
  o.ppo.epochs = 1;
  o.ppo.regime = regime;
  o.amp.minibatch_size = 16;
  o.amp.minibatches = 1;
  o.n_updates = 4;
  return o;
}

void check_same(const TrainState& a, const TrainState& b) {
  CHECK(flatten(a.policy.trainable()) == flatten(b.policy.trainable()));
  CHECK(flatten(a.policy.effective()) == flatten(b.policy.effective()));
  CHECK(flatten(a.value) == flatten(b.value));
  CHECK(flatten(a.disc.net) == flatten(b.disc.net));
  CHECK(flatten(a.policy_opt.second_moment) == flatten(b.policy_opt.second_moment));
  CHECK(a.policy_opt.steps == b.policy_opt.steps);
  CHECK(flatten(a.disc_opt.first_moment) == flatten(b.disc_opt.first_moment));
  CHECK(a.update_index == b.update_index);
  CHECK(a.policy.sigma() == b.policy.sigma());
  CHECK(a.policy.is_spectral() == b.policy.is_spectral());
  if (a.policy.is_spectral()) {
    for (std::size_t l = 0; l < a.policy.sn().state.u.size(); ++l)
      CHECK(a.policy.sn().state.u[l] == b.policy.sn().state.u[l]);
    CHECK(a.policy.sn().state.sigma == b.policy.sn().state.sigma);
    CHECK(a.policy.sn_coef() == b.policy.sn_coef());
  }
}

std::vector<std::uint8_t> with_fixed_crc(std::vector<std::uint8_t> bytes) {
  bytes.resize(bytes.size() - 4);
  const auto crc = crc32_of(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return bytes;
}

}  // namespace

TEST_CASE("config: sections, comments, lists and last-wins") {
  RunConfig cfg;
  apply_config_text(cfg, R"(
# leading comment
[ppo]
gamma = 0.97   # trailing comment
epochs = 3
epochs = 4

[run]
regime = sn
seeds = 42, 777, 2025
[network]
policy_hidden = 32, 16
sn_coef = 0.2
[env]
cmd_vx = -0.25, 0.25
)");
  CHECK(cfg.train.ppo.gamma == 0.97);
  CHECK(cfg.train.ppo.epochs == 4);
  CHECK(cfg.train.ppo.regime == Regime::kSn);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{42, 777, 2025});
  CHECK(cfg.train.net.policy_hidden == std::vector<Eigen::Index>{32, 16});
  CHECK(cfg.train.net.sn_coef == 0.2);
  CHECK(cfg.train.env.cmd_vx.lo == -0.25);
  CHECK(cfg.train.env.cmd_vx.hi == 0.25);
}

TEST_CASE("config: errors carry source and line number") {
  auto message = [](std::string_view text) {
    RunConfig cfg;
    try {
      apply_config_text(cfg, text, "base.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[ppo]\ngamma = 0.9\nbogus = 1\n").rfind("base.cfg:3:", 0) == 0);
  CHECK(message("[ppo]\n\n\nepochs = three\n").rfind("base.cfg:4:", 0) == 0);
  CHECK(message("gamma = 0.9\n").rfind("base.cfg:1:", 0) == 0);
  CHECK(message("[ppo\n").rfind("base.cfg:1:", 0) == 0);
  CHECK(message("[ppo]\njust words\n").rfind("base.cfg:2:", 0) == 0);
  CHECK(message("[run]\nregime = dropout\n").rfind("base.cfg:2:", 0) == 0);
  CHECK(message("[ppo]\ngamma = 0.9\n").empty());
}

TEST_CASE("config: format round trips every key") {
  RunConfig cfg;
  cfg.train.ppo.gamma = 0.9123456789012345;
  cfg.train.net.value_hidden = {7, 9};
  cfg.seeds = {1, 2, 3};
  cfg.bench.regimes = {Regime::kGpLcp};
  cfg.eval.real_mode = true;
  const std::string text = format_config(cfg);
  RunConfig back;
  apply_config_text(back, text);
  CHECK(format_config(back) == text);
  CHECK(back.train.ppo.gamma == cfg.train.ppo.gamma);
  for (const auto& key : config_keys()) {
    const auto dot = key.find('.');
    CHECK(text.find(key.substr(dot + 1) + " = ") != std::string::npos);
  }
}

TEST_CASE("config: validate rejects inconsistent settings") {
  RunConfig cfg;
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  RunConfig bad;
  set_config_value(bad, "ppo.clip_ratio", "1.5");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint: bit-exact round trip for plain and SN states") {
  for (auto regime : {Regime::kBaseline, Regime::kSn, Regime::kGpLcp}) {
    Trainer t(tiny(regime));
    t.run_update();
    t.run_update();
    const auto bytes = encode_checkpoint(t.state(), regime);
    const auto back = decode_checkpoint(bytes);
    CHECK(back.regime == regime);
    check_same(t.state(), back.state);
    CHECK(encode_checkpoint(back.state, regime) == bytes);
  }
}

TEST_CASE("checkpoint: file round trip and resumed training matches") {
  auto o = tiny(Regime::kSn);
  Trainer a(o);
  a.run_update();
  const auto path = std::filesystem::temp_directory_path() / "snrl_test_ckpt.snrl";
  save_checkpoint(path, a.state(), Regime::kSn);
  auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  check_same(a.state(), loaded.state);
}

TEST_CASE("checkpoint: corruption is detected") {
  Trainer t(tiny(Regime::kSn));
  const auto good = encode_checkpoint(t.state(), Regime::kSn);

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), doctest::Contains("CRC"), CheckpointError);

  auto truncated = good;
  truncated.resize(good.size() - 9);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(with_fixed_crc(truncated)), CheckpointError);

  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(with_fixed_crc(magic)), doctest::Contains("magic"),
                       CheckpointError);

  auto version = good;
  version[4] = 99;
  CHECK_THROWS_WITH_AS(decode_checkpoint(with_fixed_crc(version)), doctest::Contains("version"),
                       CheckpointError);

  CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>{1, 2, 3}), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.snrl"), CheckpointError);
}

TEST_CASE("crc32_of: standard check value") {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> b(s.begin(), s.end());
  CHECK(crc32_of(b) == 0xCBF43926u);
}
