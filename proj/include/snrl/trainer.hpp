// PPO with GAE under four regularization regimes, plus the AMP discriminator
// update, driven by one training loop with linear learning-rate decay.
#ifndef SNRL_TRAINER_HPP_
#define SNRL_TRAINER_HPP_

#include <snrl/amp.hpp>
#include <snrl/env.hpp>
#include <snrl/optim.hpp>
#include <snrl/policy.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace snrl {

enum class Regime : std::uint32_t { kBaseline = 0, kRegReward = 1, kGpLcp = 2, kSn = 3 };

std::string to_string(Regime r);
Regime parse_regime(std::string_view name);

enum class GpReduction { kMean, kMax };

struct RegWeights {
  double joint_velocity = 1e-3;
  double joint_acceleration = 1e-3;
  double torque = 1e-4;
  double torque_difference = 1e-3;
};

struct PpoConfig {
  double clip_ratio = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 5;
  Eigen::Index minibatch_size = 256;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  double value_loss_weight = 0.5;
  double entropy_weight = 0.0;
  Regime regime = Regime::kBaseline;
  double gp_weight = 0.01;
  GpReduction gp_reduction = GpReduction::kMean;
  RegWeights reg;
  double style_weight = 0.5;
  double task_weight = 0.5;
  double reward_scale = 1.0;  // applied to the combined reward before GAE

  void validate() const;
};

struct NetworkConfig {
  std::vector<Eigen::Index> policy_hidden{512, 512};
  std::vector<Eigen::Index> value_hidden{512, 512};
  std::vector<Eigen::Index> disc_hidden{256, 256};
  double sigma = 0.2;
  double sn_coef = 1.0;
  int power_iterations = 1;
  int power_warmup = 50;  // u-vector iterations at initialization
  double policy_head_scale = 0.01;  // multiplies the initial output-layer weights
  double value_head_scale = 0.01;
};

struct TrainState {
  GaussianPolicy policy;
  Mlp value;
  Discriminator disc;
  AdamState policy_opt;
  AdamState value_opt;
  AdamState disc_opt;
  std::uint64_t update_index = 0;
  MemoryTag param_tag;  // policy, value and discriminator parameters

  void retag();
};

TrainState make_train_state(const EnvConfig& env, const NetworkConfig& net, Regime regime,
                            RngStream& rng);

/// lr(u) = start + (end - start) * u / total.
double learning_rate(const PpoConfig& cfg, std::uint64_t update, std::uint64_t total);

// ---------------------------------------------------------------------------
// Rollouts

/// Column k = t * n_envs + e holds step t of env e.
struct RolloutBuffer {
  Eigen::Index n_envs = 0;
  Eigen::Index horizon = 0;
  MatrixXd observations;
  MatrixXd actions;
  VectorXd log_probs;
  VectorXd values;
  VectorXd task_rewards;
  VectorXd style_rewards;
  VectorXd reg_penalties;
  VectorXd rewards;
  std::vector<std::uint8_t> dones;
  MatrixXd torques;
  MatrixXd joint_velocities;
  MatrixXd features_from;
  MatrixXd features_to;
  MatrixXd last_observations;  // obs after the final step, one column per env
  double mean_grad_norm_sq = 0;
  std::int64_t failures = 0;
  MemoryTag tag;

  Eigen::Index size() const { return n_envs * horizon; }
  static RolloutBuffer allocate(Eigen::Index n_envs, Eigen::Index horizon, Eigen::Index obs_dim,
                                Eigen::Index act_dim, Eigen::Index n_joints);
};

/// Rollout workers: one env plus its action-noise stream each.
struct EnvPool {
  std::vector<ChainEnv> envs;
  std::vector<RngStream> action_rngs;
  int workers = 1;

  static EnvPool create(const EnvConfig& cfg, const RandomizationConfig& rnd, int n_envs,
                        std::uint64_t seed, int workers);
  std::size_t size() const { return envs.size(); }
};

struct RegPenalties {
  double joint_velocity = 0;
  double joint_acceleration = 0;
  double torque = 0;
  double torque_difference = 0;
  double total() const { return joint_velocity + joint_acceleration + torque + torque_difference; }
};

RegPenalties regularization_rewards(const VectorXd& theta_dot, const VectorXd& prev_theta_dot,
                                    const VectorXd& torque, const VectorXd& prev_torque,
                                    const RegWeights& w);

RolloutBuffer collect_rollout(const TrainState& ts, EnvPool& pool, Eigen::Index horizon,
                              const PpoConfig& cfg);

struct GaeResult {
  VectorXd advantages;  // normalized
  VectorXd returns;     // raw advantages + values
};

GaeResult compute_gae(const RolloutBuffer& buf, double gamma, double lambda, const Mlp& value_net,
                      bool normalize = true);

// ---------------------------------------------------------------------------
// Losses and update

struct GpPenalty {
  double penalty = 0;
  double mean_sq_norm = 0;
  Mlp grads;  // with respect to the policy's effective parameters
};

/// weight * reduce_b ||grad_s log pi(a_b|s_b)||^2 and its parameter gradient
/// via a second differentiation pass through the input gradient.
GpPenalty gp_penalty(const GaussianPolicy& p, const MatrixXd& states, const MatrixXd& actions,
                     double weight, GpReduction reduction = GpReduction::kMean);

struct SurrogateTerms {
  double loss = 0;
  MatrixXd mean_grad;  // dL/dmu, action_dim x B
  double clip_fraction = 0;
};

/// -mean(min(rho A, clip(rho, 1 - eps, 1 + eps) A)) and its gradient with
/// respect to the policy mean.
SurrogateTerms clipped_surrogate(const MatrixXd& means, const MatrixXd& actions,
                                 const VectorXd& old_log_probs, const VectorXd& advantages,
                                 double sigma, double clip_ratio);

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double gp_penalty = 0;
  double disc_loss = 0;
  double lr = 0;
  bool aborted = false;
  std::string incident;
};

/// One PPO update (all epochs and minibatches). On a non-finite loss the
/// returned state equals the input and stats.aborted is set.
TrainState ppo_update(const TrainState& ts, const RolloutBuffer& buf, const GaeResult& gae,
                      const PpoConfig& cfg, double lr, RngStream& rng, UpdateStats* stats);

// ---------------------------------------------------------------------------
// Loop

struct ReferenceGaitConfig {
  int cycles = 20;
  double amplitude = 0.5;
  double frequency = 1.5;
};

struct TrainerOptions {
  EnvConfig env;
  RandomizationConfig randomization;
  PpoConfig ppo;
  NetworkConfig net;
  AmpUpdateConfig amp;
  ReferenceGaitConfig reference;
  int n_envs = 16;
  int horizon = 128;
  std::uint64_t n_updates = 500;
  std::uint64_t seed = 42;
  int workers = 1;
};

struct UpdateLog {
  std::uint64_t update_index = 0;
  double mean_task_reward = 0;
  double mean_style_reward = 0;
  double mean_grad_norm_sq = 0;
  double lr = 0;
  double wall_time = 0;
  bool aborted = false;
};

class Trainer {
 public:
  explicit Trainer(TrainerOptions opts);
  Trainer(TrainerOptions opts, TrainState initial);

  UpdateLog run_update();

  const TrainState& state() const { return state_; }
  TrainState& state_mut() { return state_; }
  const TrainerOptions& options() const { return opts_; }
  const ReferenceDataset& reference() const { return reference_; }
  const RolloutBuffer& last_rollout() const { return last_rollout_; }

 private:
  TrainerOptions opts_;
  TrainState state_;
  EnvPool pool_;
  ReferenceDataset reference_;
  RolloutBuffer last_rollout_;
};

}  // namespace snrl

#endif  // SNRL_TRAINER_HPP_
