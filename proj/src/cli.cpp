#include <snrl/cli.hpp>

#include <snrl/checkpoint.hpp>
#include <snrl/metrics.hpp>
#include <snrl/parallel.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace snrl {

namespace fs = std::filesystem;

int effective_workers(int configured) {
  const bool env_set = std::getenv("SNRL_THREADS") != nullptr;
  const int cap = worker_count_from_env();
  if (configured <= 0) return cap;
  return env_set ? std::min(configured, cap) : configured;
}

namespace {

std::string checkpoint_name(std::uint64_t update) {
  return "checkpoint_" + std::to_string(update) + ".snrl";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int train_one(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, std::ostream& out,
              std::ostream& err) {
  fs::create_directories(dir);
  RunConfig resolved = cfg;
  resolved.seeds = {seed};
  resolved.out_dir = dir;
  write_text(dir / "config.cfg", format_config(resolved));

  TrainerOptions opts = cfg.train;
  opts.seed = seed;
  opts.workers = effective_workers(cfg.workers);
  Trainer trainer(opts);
  const Regime regime = opts.ppo.regime;

  if (opts.n_updates == 0) {
    save_checkpoint(dir / checkpoint_name(0), trainer.state(), regime);
    out << "seed " << seed << ": wrote initial checkpoint " << (dir / checkpoint_name(0)).string()
        << '\n';
    return kExitOk;
  }

  std::ofstream log(dir / "metrics.csv");
  if (!log) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  log << "update,mean_task_reward,mean_style_reward,mean_grad_norm_sq,lr,wall_time\n"
      << std::setprecision(17);

  for (std::uint64_t u = 1; u <= opts.n_updates; ++u) {
    const UpdateLog entry = trainer.run_update();
    log << u << ',' << entry.mean_task_reward << ',' << entry.mean_style_reward << ','
        << entry.mean_grad_norm_sq << ',' << entry.lr << ','
        << (cfg.log_wall_time ? entry.wall_time : 0.0) << '\n';
    log.flush();
    if (entry.aborted) {
      const auto path = dir / checkpoint_name(u - 1);
      save_checkpoint(path, trainer.state(), regime);
      err << "seed " << seed << ": non-finite loss at update " << u
          << "; last good state saved to " << path.string() << '\n';
      return kExitAborted;
    }
    if (u % cfg.checkpoint_every == 0 || u == opts.n_updates)
      save_checkpoint(dir / checkpoint_name(u), trainer.state(), regime);
    if (cfg.progress_every > 0 &&
        (u % static_cast<std::uint64_t>(cfg.progress_every) == 0 || u == opts.n_updates)) {
      out << "seed " << seed << "  update " << u << '/' << opts.n_updates << std::fixed
          << std::setprecision(4) << "  task " << entry.mean_task_reward << "  style "
          << entry.mean_style_reward << "  |grad_s log pi|^2 " << entry.mean_grad_norm_sq
          << std::defaultfloat << "  lr " << entry.lr << '\n';
    }
  }
  return kExitOk;
}

std::optional<Checkpoint> open_checkpoint(const fs::path& path, const RunConfig& cfg,
                                          std::ostream& err) {
  try {
    auto ckpt = load_checkpoint(path);
    if (ckpt.state.policy.state_dim() != observation_dim(cfg.train.env) ||
        ckpt.state.policy.action_dim() != cfg.train.env.n_joints) {
      err << "checkpoint " << path.string()
          << " does not match the configured environment (n_joints)\n";
      return std::nullopt;
    }
    return ckpt;
  } catch (const CheckpointError& e) {
    err << e.what() << '\n';
    return std::nullopt;
  }
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir =
        cfg.seeds.size() == 1 ? cfg.out_dir : cfg.out_dir / ("seed_" + std::to_string(seed));
    const int rc = train_one(cfg, seed, dir, out, err);
    if (rc != kExitOk) return rc;
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& out,
             std::ostream& err) {
  cfg.validate();
  const auto ckpt = open_checkpoint(checkpoint, cfg, err);
  if (!ckpt) return kExitCheckpoint;

  EvalOptions opts;
  opts.episodes = cfg.eval.episodes;
  opts.steps = cfg.eval.steps;
  opts.command = cfg.eval.command;
  opts.real_mode = cfg.eval.real_mode;
  opts.absolute_energy = cfg.eval.absolute_energy;
  opts.seed = cfg.eval.seed;
  auto report = evaluate_policy(ckpt->state.policy, cfg.train.env, cfg.train.randomization, opts);
  report.regime = to_string(ckpt->regime);

  fs::create_directories(cfg.out_dir);
  write_eval_csv(report, cfg.out_dir / "eval_report.csv");
  print_eval_table(report, out);
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& out,
               std::ostream& err) {
  cfg.validate();
  const auto ckpt = open_checkpoint(checkpoint, cfg, err);
  if (!ckpt) return kExitCheckpoint;
  const GaussianPolicy& policy = ckpt->state.policy;
  const Mlp& net = policy.effective();

  RngStream rng(cfg.verify.seed, 7);
  const double empirical = empirical_lipschitz(net, cfg.verify.samples, rng);
  const double product = lipschitz_bound(net);
  out << std::setprecision(6);
  out << "regime " << to_string(ckpt->regime) << "  samples " << cfg.verify.samples << '\n';

  if (!policy.is_spectral()) {
    out << "mean network is not spectrally normalized: verification limited to the empirical "
           "Lipschitz estimate\n";
    out << "empirical Lipschitz " << empirical << "  (layer-norm product " << product << ")\n";
    return kExitOk;
  }

  const double coef = policy.sn_coef();
  bool ok = true;

  const auto samples = sample_on_policy(policy, cfg.train.env, cfg.train.randomization,
                                        cfg.verify.samples, cfg.verify.seed);
  const auto sweep = grad_norm_sweep(policy, samples.states, samples.actions, cfg.verify.bins);
  const double below = 1.0 - sweep.fraction_exceeding;
  const double below_slack = 1.0 - sweep.fraction_exceeding_slack;
  out << "grad-norm^2 p95 " << sweep.percentile95 << "  threshold (2 coef/sigma)^2 "
      << sweep.threshold << '\n';
  out << "  below threshold             " << below * 100 << "%  "
      << verdict(below >= 0.95) << '\n';
  out << "  below threshold * sqrt(d_a) " << below_slack * 100 << "%  "
      << verdict(below_slack >= 0.95) << '\n';
  ok = ok && below_slack >= 0.95;

  const auto& sigma_hat = policy.sn().state.sigma;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double expected = (l + 1 == net.num_layers()) ? coef : 1.0;
    const double oracle = sigma_max_oracle(net.weights[l]);
    const bool layer_ok = oracle <= expected * (1.0 + cfg.verify.layer_tolerance);
    ok = ok && layer_ok;
    out << "layer " << l << "  sigma(effective) " << oracle << "  target " << expected
        << "  power-iteration estimate of raw " << sigma_hat[l] << "  " << verdict(layer_ok)
        << '\n';
  }
  const bool lip_ok = empirical <= product * (1.0 + 1e-9) &&
                      product <= coef * std::pow(1.0 + cfg.verify.layer_tolerance,
                                                 static_cast<double>(net.num_layers()));
  ok = ok && lip_ok;
  out << "empirical Lipschitz " << empirical << "  certified product " << product
      << "  coefficient " << coef << "  " << verdict(lip_ok) << '\n';
  out << "overall " << verdict(ok) << '\n';
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
  cfg.validate();
  MemoryBenchConfig bench;
  bench.env = cfg.train.env;
  bench.net = cfg.train.net;
  bench.ppo = cfg.train.ppo;
  bench.n_envs = cfg.bench.n_envs;
  bench.horizon = cfg.bench.horizon;
  bench.seed = cfg.bench.seed;
  const Eigen::Index total = bench.n_envs * bench.horizon;
  bench.ppo.minibatch_size = cfg.bench.minibatch_size > 0 ? cfg.bench.minibatch_size
                                                          : std::max<Eigen::Index>(1, total);

  std::vector<MemoryBenchResult> rows;
  for (Regime r : cfg.bench.regimes) rows.push_back(memory_proxy_bench(r, bench));

  double base = 0;
  for (const auto& r : rows)
    if (r.regime == Regime::kBaseline) base = static_cast<double>(r.peak_bytes);
  if (base == 0 && !rows.empty()) base = static_cast<double>(rows.front().peak_bytes);

  fs::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir / "bench.csv");
  if (!csv) throw std::runtime_error("cannot write " + (cfg.out_dir / "bench.csv").string());
  csv << "regime,peak_traces,peak_bytes,ratio\n" << std::setprecision(17);
  out << std::left << std::setw(12) << "regime" << std::right << std::setw(14) << "peak traces"
      << std::setw(16) << "peak bytes" << std::setw(10) << "ratio" << '\n';
  for (const auto& r : rows) {
    const double ratio = base > 0 ? static_cast<double>(r.peak_bytes) / base : 0.0;
    csv << to_string(r.regime) << ',' << r.peak_traces << ',' << r.peak_bytes << ',' << ratio
        << '\n';
    out << std::left << std::setw(12) << to_string(r.regime) << std::right << std::setw(14)
        << r.peak_traces << std::setw(16) << r.peak_bytes << std::setw(10) << std::fixed
        << std::setprecision(3) << ratio << std::defaultfloat << '\n';
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lipschitz-constrained locomotion policy training", "snrl"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint;
  std::vector<std::pair<std::string, std::string>> overrides;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key = value with [sections])");
    sub->add_option_function<std::string>(
           "--set",
           [&](const std::string& kv) {
             const auto eq = kv.find('=');
             if (eq == std::string::npos)
               throw CLI::ValidationError("--set", "expected section.key=value");
             overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
           },
           "override any config key, e.g. --set ppo.epochs=3")
        ->trigger_on_parse();
    sub->add_option_function<std::string>(
           "--out", [&](const std::string& v) { overrides.emplace_back("run.out", v); },
           "output directory")
        ->trigger_on_parse();
  };
  auto add_key = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                     const std::string& help) {
    sub->add_option_function<std::string>(
           flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help)
        ->trigger_on_parse();
  };

  auto* train = app.add_subcommand("train", "train a policy");
  add_config(train);
  add_key(train, "--regime", "run.regime", "baseline | reg-reward | gp-lcp | sn");
  add_key(train, "--sn-coef", "network.sn_coef", "spectral normalization coefficient");
  add_key(train, "--gp-weight", "ppo.gp_weight", "gradient-penalty weight");
  add_key(train, "--seed", "run.seeds", "seed, or comma-separated seeds");
  add_key(train, "--n-updates", "run.n_updates", "number of policy updates");
  add_key(train, "--n-envs", "run.n_envs", "parallel environments");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with the mean action");
  add_config(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  add_key(eval, "--episodes", "eval.episodes", "episodes to run");
  add_key(eval, "--steps", "eval.steps", "steps per episode");
  add_key(eval, "--vx", "eval.vx", "commanded forward velocity");
  add_key(eval, "--wyaw", "eval.wyaw", "commanded yaw rate");
  add_key(eval, "--seed", "eval.seed", "first episode seed");
  eval->add_flag_function(
          "--real-mode", [&](std::int64_t) { overrides.emplace_back("eval.real_mode", "true"); },
          "enable first-order actuator lag")
      ->trigger_on_parse();

  auto* verify = app.add_subcommand("verify", "check Lipschitz and gradient bounds");
  add_config(verify);
  verify->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  add_key(verify, "--samples", "verify.samples", "on-policy samples and Lipschitz pairs");

  auto* bench = app.add_subcommand("bench", "training-memory proxy per regime");
  add_config(bench);
  add_key(bench, "--regimes", "bench.regimes", "comma-separated regimes");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  if (!argv.empty()) argv.pop_back();  // program name
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& [key, value] : overrides) {
      try {
        set_config_value(cfg, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("command line: ") + e.what());
      }
    }
    cfg.validate();
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(cfg, out, err);
    if (*eval) return cmd_eval(cfg, checkpoint, out, err);
    if (*verify) return cmd_verify(cfg, checkpoint, out, err);
    if (*bench) return cmd_bench(cfg, out, err);
  } catch (const CheckpointError& e) {
    err << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace snrl
