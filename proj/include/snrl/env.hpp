// Torque-driven differential chain: n decoupled joints split into a left and a
// right half whose mean velocities drive a differential base (v_x, yaw rate).
#ifndef SNRL_ENV_HPP_
#define SNRL_ENV_HPP_

#include <snrl/numkit.hpp>

#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace snrl {

struct Range {
  double lo = 0;
  double hi = 0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct EnvConfig {
  int n_joints = 6;
  double dt = 0.004;  // 250 Hz
  double inertia = 0.05;
  double damping = 1.5;
  double motor_constant = 1.0;
  double gear_ratio = 0.1;
  double half_spacing = 0.5;
  double torque_limit = 10.0;
  Range cmd_vx{-0.5, 0.5};
  Range cmd_yaw{-0.5, 0.5};
  int episode_length = 2000;
  double actuator_lag = 0.05;  // first-order lag time constant, real mode only
  double max_joint_velocity = 50.0;
  double init_noise_std = 0.01;
  double task_alpha = 1.0;
  double task_beta = 4.0;

  void validate() const;
};

struct RandomizationConfig {
  Range inertia_scale{0.8, 1.2};
  Range damping{0.5, 2.5};
  Range motor_scale{0.8, 1.2};
  double joint_noise_std = 0.0005;
  double base_velocity_noise = 0.025;  // uniform half-width
  double joint_bias = 0.0314;          // uniform half-width, drawn per episode
  Range action_delay{0.002, 0.01};     // seconds

  /// Every range collapsed onto the env defaults; no noise, bias or delay.
  static RandomizationConfig none(const EnvConfig& cfg);
  void validate(const EnvConfig& cfg) const;
};

struct Command {
  double v_x = 0;
  double w_yaw = 0;
};

/// Per-episode draws: physics, sensor bias and delay.
struct EpisodeParams {
  VectorXd inertia;
  VectorXd damping;
  VectorXd motor_constant;
  VectorXd joint_bias;
  int delay_steps = 0;
};

struct ChainState {
  VectorXd theta;
  VectorXd theta_dot;
  VectorXd torque_applied;
  std::deque<VectorXd> delay_queue;
  int step_index = 0;
};

struct StepOutcome {
  ChainState state;
  double v_x = 0;
  double w_yaw = 0;
  VectorXd torque_command;  // clipped command issued this step
  bool done = false;
  bool failed = false;
};

struct ResetOutcome {
  ChainState state;
  EpisodeParams params;
  Command command;
};

int delay_steps_for(double delay_seconds, double dt);

ResetOutcome reset(const EnvConfig& cfg, const RandomizationConfig& rnd, RngStream& rng);
StepOutcome step(const ChainState& state, const VectorXd& action, const EpisodeParams& params,
                 const EnvConfig& cfg, bool real_mode);

/// (v_x, w_yaw) from the mean joint velocities of each half.
std::pair<double, double> base_velocity(const VectorXd& theta_dot, const EnvConfig& cfg);

/// Wrap an angle to [-pi, pi).
double wrap_angle(double x);

/// [v_x, w_yaw, cmd.v_x, cmd.w_yaw, theta, theta_dot, prev_action]; joint
/// angles are read modulo 2 pi like an absolute encoder.
VectorXd observe(const ChainState& state, const Command& cmd, const VectorXd& prev_action,
                 const EpisodeParams& params, const RandomizationConfig& rnd,
                 const EnvConfig& cfg, RngStream& rng);

inline Eigen::Index observation_dim(const EnvConfig& cfg) { return 4 + 3 * cfg.n_joints; }

/// alpha * exp(-beta * ||v_cmd - v||^2)
double task_reward(const Command& cmd, double v_x, double w_yaw, double alpha, double beta);

/// Discriminator features (wrapped theta, theta_dot) of a state.
VectorXd motion_features(const ChainState& state);

// ---------------------------------------------------------------------------
// Reference motion

struct ReferenceTrajectory {
  double dt = 0.004;
  std::vector<double> time;
  MatrixXd theta;      // n x T
  MatrixXd theta_dot;  // n x T

  Eigen::Index steps() const { return theta.cols(); }
  Eigen::Index joints() const { return theta.rows(); }
};

/// theta_i(t) = A sin(2 pi f t + phi_i), phi = 0 on the left half and pi on
/// the right half, sampled every dt for the requested number of cycles.
ReferenceTrajectory generate_reference_gait(const EnvConfig& cfg, int cycles, double amplitude,
                                            double frequency);

/// CSV with header "t,theta_1..theta_n,theta_dot_1..theta_dot_n".
void write_reference_csv(const ReferenceTrajectory& ref, const std::filesystem::path& path);
ReferenceTrajectory read_reference_csv(const std::filesystem::path& path);

/// Stateful wrapper owned by one rollout worker.
class ChainEnv {
 public:
  ChainEnv(EnvConfig cfg, RandomizationConfig rnd, RngStream rng, bool real_mode = false);

  /// Starts a new episode; returns the first observation.
  VectorXd reset();

  struct Step {
    VectorXd observation;
    double task_reward = 0;
    double v_x = 0;
    double w_yaw = 0;
    VectorXd torque_command;
    VectorXd prev_torque_command;
    VectorXd theta_dot;
    VectorXd prev_theta_dot;
    VectorXd features_before;
    VectorXd features_after;
    bool done = false;
    bool failed = false;
  };

  /// Advances one control step. Does not auto-reset.
  Step step(const VectorXd& action);

  void set_fixed_command(std::optional<Command> cmd) { fixed_command_ = cmd; }
  void set_real_mode(bool on) { real_mode_ = on; }

  const ChainState& state() const { return state_; }
  const EpisodeParams& params() const { return params_; }
  const Command& command() const { return command_; }
  const EnvConfig& config() const { return cfg_; }
  const VectorXd& last_observation() const { return last_obs_; }

 private:
  EnvConfig cfg_;
  RandomizationConfig rnd_;
  RngStream rng_;
  bool real_mode_;
  std::optional<Command> fixed_command_;
  ChainState state_;
  EpisodeParams params_;
  Command command_;
  VectorXd prev_action_;
  VectorXd prev_torque_;
  VectorXd last_obs_;
};

}  // namespace snrl

#endif  // SNRL_ENV_HPP_
