#include <snrl/config.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace snrl {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty())
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("value must be finite");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + std::string(s) + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number_field(Access access) {
  return {[access](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(v); },
          [access](const RunConfig& c) {
            const T& x = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(x);
            } else {
              return std::to_string(x);
            }
          }};
}

template <typename Access>
Field bool_field(Access access) {
  return {[access](RunConfig& c, std::string_view v) { access(c) = parse_bool(v); },
          [access](const RunConfig& c) {
            return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
Field range_field(Access access) {
  return {[access](RunConfig& c, std::string_view v) {
            const auto parts = split_list(v);
            if (parts.size() != 2) throw ConfigError("expected 'lo, hi'");
            access(c) = Range{parse_number<double>(parts[0]), parse_number<double>(parts[1])};
          },
          [access](const RunConfig& c) {
            const Range& r = access(const_cast<RunConfig&>(c));
            return format_double(r.lo) + ", " + format_double(r.hi);
          }};
}

template <typename T, typename Access>
Field list_field(Access access) {
  return {[access](RunConfig& c, std::string_view v) {
            std::vector<T> xs;
            for (auto p : split_list(v)) xs.push_back(parse_number<T>(p));
            access(c) = std::move(xs);
          },
          [access](const RunConfig& c) {
            return join<T>(access(const_cast<RunConfig&>(c)),
                           [](const T& x) { return std::to_string(x); });
          }};
}

Regime regime_value(std::string_view v) {
  try {
    return parse_regime(trim(v));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> m;
    // [env]
    m["env.n_joints"] = number_field<int>([](RunConfig& c) -> int& { return c.train.env.n_joints; });
    m["env.dt"] = number_field<double>([](RunConfig& c) -> double& { return c.train.env.dt; });
    m["env.inertia"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.inertia; });
    m["env.damping"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.damping; });
    m["env.motor_constant"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.motor_constant; });
    m["env.gear_ratio"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.gear_ratio; });
    m["env.half_spacing"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.half_spacing; });
    m["env.torque_limit"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.torque_limit; });
    m["env.cmd_vx"] = range_field([](RunConfig& c) -> Range& { return c.train.env.cmd_vx; });
    m["env.cmd_yaw"] = range_field([](RunConfig& c) -> Range& { return c.train.env.cmd_yaw; });
    m["env.episode_length"] =
        number_field<int>([](RunConfig& c) -> int& { return c.train.env.episode_length; });
    m["env.actuator_lag"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.actuator_lag; });
    m["env.max_joint_velocity"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.env.max_joint_velocity; });
    m["env.init_noise_std"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.init_noise_std; });
    m["env.task_alpha"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.task_alpha; });
    m["env.task_beta"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.env.task_beta; });

    // [randomization]
    m["randomization.inertia_scale"] =
        range_field([](RunConfig& c) -> Range& { return c.train.randomization.inertia_scale; });
    m["randomization.damping"] =
        range_field([](RunConfig& c) -> Range& { return c.train.randomization.damping; });
    m["randomization.motor_scale"] =
        range_field([](RunConfig& c) -> Range& { return c.train.randomization.motor_scale; });
    m["randomization.joint_noise_std"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.randomization.joint_noise_std; });
    m["randomization.base_velocity_noise"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.randomization.base_velocity_noise; });
    m["randomization.joint_bias"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.randomization.joint_bias; });
    m["randomization.action_delay"] =
        range_field([](RunConfig& c) -> Range& { return c.train.randomization.action_delay; });

    // [ppo]
    m["ppo.clip_ratio"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.clip_ratio; });
    m["ppo.gamma"] = number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.gamma; });
    m["ppo.gae_lambda"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.gae_lambda; });
    m["ppo.epochs"] = number_field<int>([](RunConfig& c) -> int& { return c.train.ppo.epochs; });
    m["ppo.minibatch_size"] = number_field<Eigen::Index>(
        [](RunConfig& c) -> Eigen::Index& { return c.train.ppo.minibatch_size; });
    m["ppo.lr_start"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.lr_start; });
    m["ppo.lr_end"] = number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.lr_end; });
    m["ppo.value_loss_weight"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.ppo.value_loss_weight; });
    m["ppo.entropy_weight"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.entropy_weight; });
    m["ppo.gp_weight"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.gp_weight; });
    m["ppo.gp_reduction"] = Field{
        [](RunConfig& c, std::string_view v) {
          v = trim(v);
          if (v == "mean") {
            c.train.ppo.gp_reduction = GpReduction::kMean;
          } else if (v == "max") {
            c.train.ppo.gp_reduction = GpReduction::kMax;
          } else {
            throw ConfigError("expected 'mean' or 'max'");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.train.ppo.gp_reduction == GpReduction::kMean ? "mean" : "max");
        }};
    m["ppo.style_weight"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.style_weight; });
    m["ppo.task_weight"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.task_weight; });
    m["ppo.reward_scale"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.reward_scale; });
    m["ppo.reg_joint_velocity"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.ppo.reg.joint_velocity; });
    m["ppo.reg_joint_acceleration"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.ppo.reg.joint_acceleration; });
    m["ppo.reg_torque"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.ppo.reg.torque; });
    m["ppo.reg_torque_difference"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.ppo.reg.torque_difference; });

    // [network]
    m["network.policy_hidden"] = list_field<Eigen::Index>(
        [](RunConfig& c) -> std::vector<Eigen::Index>& { return c.train.net.policy_hidden; });
    m["network.value_hidden"] = list_field<Eigen::Index>(
        [](RunConfig& c) -> std::vector<Eigen::Index>& { return c.train.net.value_hidden; });
    m["network.disc_hidden"] = list_field<Eigen::Index>(
        [](RunConfig& c) -> std::vector<Eigen::Index>& { return c.train.net.disc_hidden; });
    m["network.sigma"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.net.sigma; });
    m["network.sn_coef"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.net.sn_coef; });
    m["network.power_iterations"] =
        number_field<int>([](RunConfig& c) -> int& { return c.train.net.power_iterations; });
    m["network.power_warmup"] =
        number_field<int>([](RunConfig& c) -> int& { return c.train.net.power_warmup; });
    m["network.policy_head_scale"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.net.policy_head_scale; });
    m["network.value_head_scale"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.train.net.value_head_scale; });

    // [amp]
    m["amp.minibatches"] =
        number_field<int>([](RunConfig& c) -> int& { return c.train.amp.minibatches; });
    m["amp.minibatch_size"] = number_field<Eigen::Index>(
        [](RunConfig& c) -> Eigen::Index& { return c.train.amp.minibatch_size; });

    // [reference]
    m["reference.cycles"] =
        number_field<int>([](RunConfig& c) -> int& { return c.train.reference.cycles; });
    m["reference.amplitude"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.reference.amplitude; });
    m["reference.frequency"] =
        number_field<double>([](RunConfig& c) -> double& { return c.train.reference.frequency; });

    // [run]
    m["run.regime"] = Field{
        [](RunConfig& c, std::string_view v) { c.train.ppo.regime = regime_value(v); },
        [](const RunConfig& c) { return to_string(c.train.ppo.regime); }};
    m["run.seeds"] =
        list_field<std::uint64_t>([](RunConfig& c) -> std::vector<std::uint64_t>& { return c.seeds; });
    m["run.out"] = Field{[](RunConfig& c, std::string_view v) { c.out_dir = std::string(trim(v)); },
                         [](const RunConfig& c) { return c.out_dir.string(); }};
    m["run.n_envs"] = number_field<int>([](RunConfig& c) -> int& { return c.train.n_envs; });
    m["run.horizon"] = number_field<int>([](RunConfig& c) -> int& { return c.train.horizon; });
    m["run.n_updates"] = number_field<std::uint64_t>(
        [](RunConfig& c) -> std::uint64_t& { return c.train.n_updates; });
    m["run.checkpoint_every"] = number_field<std::uint64_t>(
        [](RunConfig& c) -> std::uint64_t& { return c.checkpoint_every; });
    m["run.progress_every"] =
        number_field<int>([](RunConfig& c) -> int& { return c.progress_every; });
    m["run.workers"] = number_field<int>([](RunConfig& c) -> int& { return c.workers; });

    // [log]
    m["log.wall_time"] = bool_field([](RunConfig& c) -> bool& { return c.log_wall_time; });

    // [eval]
    m["eval.episodes"] = number_field<int>([](RunConfig& c) -> int& { return c.eval.episodes; });
    m["eval.steps"] = number_field<int>([](RunConfig& c) -> int& { return c.eval.steps; });
    m["eval.vx"] = number_field<double>([](RunConfig& c) -> double& { return c.eval.command.v_x; });
    m["eval.wyaw"] =
        number_field<double>([](RunConfig& c) -> double& { return c.eval.command.w_yaw; });
    m["eval.real_mode"] = bool_field([](RunConfig& c) -> bool& { return c.eval.real_mode; });
    m["eval.absolute_energy"] =
        bool_field([](RunConfig& c) -> bool& { return c.eval.absolute_energy; });
    m["eval.seed"] =
        number_field<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.eval.seed; });

    // [verify]
    m["verify.samples"] = number_field<int>([](RunConfig& c) -> int& { return c.verify.samples; });
    m["verify.bins"] = number_field<int>([](RunConfig& c) -> int& { return c.verify.bins; });
    m["verify.layer_tolerance"] = number_field<double>(
        [](RunConfig& c) -> double& { return c.verify.layer_tolerance; });
    m["verify.seed"] =
        number_field<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.verify.seed; });

    // [bench]
    m["bench.regimes"] = Field{
        [](RunConfig& c, std::string_view v) {
          std::vector<Regime> rs;
          for (auto p : split_list(v)) rs.push_back(regime_value(p));
          c.bench.regimes = std::move(rs);
        },
        [](const RunConfig& c) {
          return join<Regime>(c.bench.regimes, [](const Regime& r) { return to_string(r); });
        }};
    m["bench.n_envs"] = number_field<Eigen::Index>(
        [](RunConfig& c) -> Eigen::Index& { return c.bench.n_envs; });
    m["bench.horizon"] = number_field<Eigen::Index>(
        [](RunConfig& c) -> Eigen::Index& { return c.bench.horizon; });
    m["bench.minibatch_size"] = number_field<Eigen::Index>(
        [](RunConfig& c) -> Eigen::Index& { return c.bench.minibatch_size; });
    m["bench.seed"] =
        number_field<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.bench.seed; });
    return m;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    train.env.validate();
    train.randomization.validate(train.env);
    train.ppo.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  auto check = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(!seeds.empty(), "run.seeds: at least one seed is required");
  check(train.n_envs >= 1, "run.n_envs must be >= 1");
  check(train.horizon >= 1, "run.horizon must be >= 1");
  check(workers >= 0, "run.workers must be >= 0");
  check(checkpoint_every >= 1, "run.checkpoint_every must be >= 1");
  check(progress_every >= 0, "run.progress_every must be >= 0");
  check(train.net.sigma > 0, "network.sigma must be positive");
  check(train.net.sn_coef > 0, "network.sn_coef must be positive");
  check(train.net.power_iterations >= 1, "network.power_iterations must be >= 1");
  check(train.net.power_warmup >= 0, "network.power_warmup must be >= 0");
  check(train.net.policy_head_scale > 0 && train.net.value_head_scale > 0,
        "network: head scales must be positive");
  for (const auto* hidden : {&train.net.policy_hidden, &train.net.value_hidden,
                             &train.net.disc_hidden})
    for (auto w : *hidden) check(w >= 1, "network: hidden widths must be >= 1");
  check(train.amp.minibatches >= 0 && train.amp.minibatch_size >= 1, "amp: invalid minibatching");
  check(train.reference.cycles >= 1 && train.reference.frequency > 0,
        "reference: cycles and frequency must be positive");
  check(eval.episodes >= 0 && eval.steps >= 1, "eval: invalid episode settings");
  check(verify.samples >= 1 && verify.bins >= 1, "verify: samples and bins must be >= 1");
  check(verify.layer_tolerance >= 0, "verify.layer_tolerance must be non-negative");
  check(bench.n_envs >= 0 && bench.horizon >= 0 && bench.minibatch_size >= 0,
        "bench: sizes must be non-negative");
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view source) {
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto fail = [&](const std::string& msg) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) fail("missing key");
    if (section.empty()) fail("key '" + std::string(key) + "' outside of a section");
    try {
      set_config_value(cfg, section + "." + std::string(key), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + field.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace snrl
