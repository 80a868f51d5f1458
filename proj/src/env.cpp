#include <snrl/env.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace snrl {

void EnvConfig::validate() const {
  require(n_joints > 0 && n_joints % 2 == 0, "EnvConfig: n_joints must be positive and even");
  require(dt > 0 && inertia > 0 && damping > 0 && motor_constant > 0 && gear_ratio > 0 &&
              half_spacing > 0 && torque_limit > 0,
          "EnvConfig: physical constants must be positive");
  require(episode_length > 0, "EnvConfig: episode_length must be positive");
  require(actuator_lag >= dt, "EnvConfig: actuator_lag must be at least dt");
  require(max_joint_velocity > 0, "EnvConfig: max_joint_velocity must be positive");
  require(task_alpha > 0 && task_beta > 0, "EnvConfig: task reward alpha/beta must be positive");
  require(cmd_vx.lo <= cmd_vx.hi && cmd_yaw.lo <= cmd_yaw.hi, "EnvConfig: empty command range");
}

RandomizationConfig RandomizationConfig::none(const EnvConfig& cfg) {
  RandomizationConfig r;
  r.inertia_scale = {1.0, 1.0};
  r.damping = {cfg.damping, cfg.damping};
  r.motor_scale = {1.0, 1.0};
  r.joint_noise_std = 0;
  r.base_velocity_noise = 0;
  r.joint_bias = 0;
  r.action_delay = {0, 0};
  return r;
}

void RandomizationConfig::validate(const EnvConfig& cfg) const {
  require(inertia_scale.lo <= 1.0 && inertia_scale.hi >= 1.0 && inertia_scale.lo > 0,
          "RandomizationConfig: inertia scale range must bracket 1");
  require(motor_scale.lo <= 1.0 && motor_scale.hi >= 1.0 && motor_scale.lo > 0,
          "RandomizationConfig: motor scale range must bracket 1");
  require(damping.contains(cfg.damping) && damping.lo > 0,
          "RandomizationConfig: damping range must contain the default");
  require(joint_noise_std >= 0 && base_velocity_noise >= 0 && joint_bias >= 0,
          "RandomizationConfig: noise magnitudes must be non-negative");
  require(action_delay.lo >= 0 && action_delay.lo <= action_delay.hi,
          "RandomizationConfig: invalid action delay range");
}

int delay_steps_for(double delay_seconds, double dt) {
  if (delay_seconds <= 0) return 0;
  return static_cast<int>(std::ceil(delay_seconds / dt - 1e-9));
}

ResetOutcome reset(const EnvConfig& cfg, const RandomizationConfig& rnd, RngStream& rng) {
  const int n = cfg.n_joints;
  ResetOutcome out;
  auto& p = out.params;
  p.inertia.resize(n);
  p.damping.resize(n);
  p.motor_constant.resize(n);
  p.joint_bias.resize(n);
  for (int i = 0; i < n; ++i) {
    p.inertia[i] = cfg.inertia * rng.uniform(rnd.inertia_scale.lo, rnd.inertia_scale.hi);
    p.damping[i] = rng.uniform(rnd.damping.lo, rnd.damping.hi);
    p.motor_constant[i] = cfg.motor_constant * rng.uniform(rnd.motor_scale.lo, rnd.motor_scale.hi);
    p.joint_bias[i] = rng.uniform(-rnd.joint_bias, rnd.joint_bias);
  }
  p.delay_steps =
      delay_steps_for(rng.uniform(rnd.action_delay.lo, rnd.action_delay.hi), cfg.dt);

  auto& s = out.state;
  s.theta = gaussian_sample<double>(rng, n, 0.0, cfg.init_noise_std);
  s.theta_dot = gaussian_sample<double>(rng, n, 0.0, cfg.init_noise_std);
  s.torque_applied = VectorXd::Zero(n);
  s.delay_queue.assign(p.delay_steps, VectorXd::Zero(n));
  s.step_index = 0;

  out.command.v_x = rng.uniform(cfg.cmd_vx.lo, cfg.cmd_vx.hi);
  out.command.w_yaw = rng.uniform(cfg.cmd_yaw.lo, cfg.cmd_yaw.hi);
  return out;
}

std::pair<double, double> base_velocity(const VectorXd& theta_dot, const EnvConfig& cfg) {
  const Eigen::Index half = theta_dot.size() / 2;
  const double left = theta_dot.head(half).mean();
  const double right = theta_dot.tail(half).mean();
  return {cfg.gear_ratio * (left + right) / 2.0, cfg.gear_ratio * (right - left) / cfg.half_spacing};
}

StepOutcome step(const ChainState& state, const VectorXd& action, const EpisodeParams& params,
                 const EnvConfig& cfg, bool real_mode) {
  require(action.size() == cfg.n_joints, "step: action dimension mismatch");
  StepOutcome out;
  out.state = state;
  auto& s = out.state;
  s.step_index += 1;

  if (!action.allFinite()) {
    out.torque_command = VectorXd::Zero(cfg.n_joints);
    out.done = true;
    out.failed = true;
    std::tie(out.v_x, out.w_yaw) = base_velocity(s.theta_dot, cfg);
    return out;
  }

  out.torque_command = cfg.torque_limit * action.cwiseMax(-1.0).cwiseMin(1.0);
  VectorXd delivered = out.torque_command;
  if (!s.delay_queue.empty()) {
    s.delay_queue.push_back(out.torque_command);
    delivered = std::move(s.delay_queue.front());
    s.delay_queue.pop_front();
  }

  if (real_mode) {
    s.torque_applied += (cfg.dt / cfg.actuator_lag) * (delivered - s.torque_applied);
  } else {
    s.torque_applied = delivered;
  }

  const VectorXd accel =
      (params.motor_constant.cwiseProduct(s.torque_applied) - params.damping.cwiseProduct(s.theta_dot))
          .cwiseQuotient(params.inertia);
  s.theta_dot += cfg.dt * accel;
  s.theta += cfg.dt * s.theta_dot;

  std::tie(out.v_x, out.w_yaw) = base_velocity(s.theta_dot, cfg);
  if (!s.theta_dot.allFinite() || s.theta_dot.cwiseAbs().maxCoeff() > cfg.max_joint_velocity) {
    out.done = true;
    out.failed = true;
  }
  if (s.step_index >= cfg.episode_length) out.done = true;
  return out;
}

double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(x + std::numbers::pi, two_pi);
  if (y < 0) y += two_pi;
  return y - std::numbers::pi;
}

VectorXd observe(const ChainState& state, const Command& cmd, const VectorXd& prev_action,
                 const EpisodeParams& params, const RandomizationConfig& rnd,
                 const EnvConfig& cfg, RngStream& rng) {
  const int n = cfg.n_joints;
  require(prev_action.size() == n, "observe: prev_action dimension mismatch");
  VectorXd obs(observation_dim(cfg));
  auto [vx, wy] = base_velocity(state.theta_dot, cfg);
  const double bv = rnd.base_velocity_noise;
  if (bv > 0) {
    vx += rng.uniform(-bv, bv);
    wy += rng.uniform(-bv, bv);
  }
  obs[0] = vx;
  obs[1] = wy;
  obs[2] = cmd.v_x;
  obs[3] = cmd.w_yaw;
  const double js = rnd.joint_noise_std;
  for (int i = 0; i < n; ++i) {
    const double noise = js > 0 ? js * rng.normal() : 0.0;
    obs[4 + i] = wrap_angle(state.theta[i] + params.joint_bias[i] + noise);
  }
  for (int i = 0; i < n; ++i) {
    const double noise = js > 0 ? js * rng.normal() : 0.0;
    obs[4 + n + i] = state.theta_dot[i] + noise;
  }
  obs.segment(4 + 2 * n, n) = prev_action;
  return obs;
}

double task_reward(const Command& cmd, double v_x, double w_yaw, double alpha, double beta) {
  require(alpha > 0 && beta > 0, "task_reward: alpha and beta must be positive");
  const double ex = cmd.v_x - v_x;
  const double ey = cmd.w_yaw - w_yaw;
  return alpha * std::exp(-beta * (ex * ex + ey * ey));
}

VectorXd motion_features(const ChainState& state) {
  const Eigen::Index n = state.theta.size();
  VectorXd f(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) f[i] = wrap_angle(state.theta[i]);
  f.tail(n) = state.theta_dot;
  return f;
}

// ---------------------------------------------------------------------------

ReferenceTrajectory generate_reference_gait(const EnvConfig& cfg, int cycles, double amplitude,
                                            double frequency) {
  require(cycles > 0, "generate_reference_gait: cycles must be positive");
  require(amplitude >= 0 && frequency > 0,
          "generate_reference_gait: amplitude must be >= 0 and frequency > 0");
  cfg.validate();
  const int n = cfg.n_joints;
  const auto steps =
      static_cast<Eigen::Index>(std::llround(cycles / (frequency * cfg.dt))) + 1;
  ReferenceTrajectory ref;
  ref.dt = cfg.dt;
  ref.time.resize(steps);
  ref.theta.resize(n, steps);
  ref.theta_dot.resize(n, steps);
  const double omega = 2.0 * std::numbers::pi * frequency;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    ref.time[k] = t;
    for (int i = 0; i < n; ++i) {
      const double phase = (i < n / 2) ? 0.0 : std::numbers::pi;
      ref.theta(i, k) = amplitude * std::sin(omega * t + phase);
      ref.theta_dot(i, k) = amplitude * omega * std::cos(omega * t + phase);
    }
  }
  return ref;
}

void write_reference_csv(const ReferenceTrajectory& ref, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const Eigen::Index n = ref.joints();
  out << "t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",theta_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",theta_dot_" << i;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < ref.steps(); ++k) {
    out << ref.time[k];
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << ref.theta(i, k);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << ref.theta_dot(i, k);
    out << '\n';
  }
}

ReferenceTrajectory read_reference_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3 || (columns - 1) % 2 != 0)
    throw std::runtime_error(path.string() + ": header must be t, theta_1..n, theta_dot_1..n");
  const Eigen::Index n = (columns - 1) / 2;

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": not a number: '" + cell + "'");
      }
    }
    if (static_cast<Eigen::Index>(row.size()) != columns)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw std::runtime_error(path.string() + ": need at least two rows");

  ReferenceTrajectory ref;
  const auto steps = static_cast<Eigen::Index>(rows.size());
  ref.time.resize(steps);
  ref.theta.resize(n, steps);
  ref.theta_dot.resize(n, steps);
  for (Eigen::Index k = 0; k < steps; ++k) {
    ref.time[k] = rows[k][0];
    for (Eigen::Index i = 0; i < n; ++i) {
      ref.theta(i, k) = rows[k][1 + i];
      ref.theta_dot(i, k) = rows[k][1 + n + i];
    }
  }
  ref.dt = ref.time[1] - ref.time[0];
  return ref;
}

// ---------------------------------------------------------------------------

ChainEnv::ChainEnv(EnvConfig cfg, RandomizationConfig rnd, RngStream rng, bool real_mode)
    : cfg_(cfg), rnd_(rnd), rng_(rng), real_mode_(real_mode) {
  cfg_.validate();
  rnd_.validate(cfg_);
}

VectorXd ChainEnv::reset() {
  auto r = snrl::reset(cfg_, rnd_, rng_);
  state_ = std::move(r.state);
  params_ = std::move(r.params);
  command_ = fixed_command_.value_or(r.command);
  prev_action_ = VectorXd::Zero(cfg_.n_joints);
  prev_torque_ = VectorXd::Zero(cfg_.n_joints);
  last_obs_ = observe(state_, command_, prev_action_, params_, rnd_, cfg_, rng_);
  return last_obs_;
}

ChainEnv::Step ChainEnv::step(const VectorXd& action) {
  Step out;
  out.features_before = motion_features(state_);
  out.prev_theta_dot = state_.theta_dot;
  auto r = snrl::step(state_, action, params_, cfg_, real_mode_);
  state_ = std::move(r.state);
  out.v_x = r.v_x;
  out.w_yaw = r.w_yaw;
  out.task_reward = task_reward(command_, r.v_x, r.w_yaw, cfg_.task_alpha, cfg_.task_beta);
  out.prev_torque_command = prev_torque_;
  out.torque_command = r.torque_command;
  out.theta_dot = state_.theta_dot;
  out.features_after = motion_features(state_);
  out.done = r.done;
  out.failed = r.failed;
  prev_torque_ = r.torque_command;
  if (action.allFinite()) prev_action_ = action.cwiseMax(-1.0).cwiseMin(1.0);
  last_obs_ = observe(state_, command_, prev_action_, params_, rnd_, cfg_, rng_);
  out.observation = last_obs_;
  return out;
}

}  // namespace snrl
