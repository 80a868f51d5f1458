// Run configuration: a flat key = value file with [section] headers.
//
//   [env]
//   n_joints = 6
//   [run]
//   regime = sn
//   seeds = 42, 777, 2025
//
// Every key has a default and unknown keys are errors. Sections may repeat and
// a key may appear more than once; the last value wins.
#ifndef SNRL_CONFIG_HPP_
#define SNRL_CONFIG_HPP_

#include <snrl/trainer.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace snrl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  int episodes = 3;
  int steps = 2000;
  Command command{0.25, 0.0};
  bool real_mode = false;
  bool absolute_energy = false;
  std::uint64_t seed = 1000;
};

struct VerifySettings {
  int samples = 10000;
  int bins = 20;
  double layer_tolerance = 0.05;  // allowed excess of effective-layer sigma over its target
  std::uint64_t seed = 11;
};

struct BenchSettings {
  std::vector<Regime> regimes{Regime::kBaseline, Regime::kSn, Regime::kGpLcp};
  Eigen::Index n_envs = 16;
  Eigen::Index horizon = 128;
  Eigen::Index minibatch_size = 0;  // 0: whole batch
  std::uint64_t seed = 7;
};

struct RunConfig {
  TrainerOptions train;  // env, randomization, ppo (regime, gp weight), network (sn coef)
  std::vector<std::uint64_t> seeds{42};
  std::filesystem::path out_dir = "out";
  std::uint64_t checkpoint_every = 50;
  int progress_every = 10;
  int workers = 0;  // 0: SNRL_THREADS, else capped by it
  bool log_wall_time = false;
  EvalSettings eval;
  VerifySettings verify;
  BenchSettings bench;

  void validate() const;
};

/// Sets one "section.key" from its textual value.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses config text; errors carry "<source>:<line>: ".
void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view source = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, grouped by section; parses back to cfg.
std::string format_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace snrl

#endif  // SNRL_CONFIG_HPP_
