// Control-smoothness metrics, Lipschitz verification and the training-memory
// benchmark.
#ifndef SNRL_METRICS_HPP_
#define SNRL_METRICS_HPP_

#include <snrl/env.hpp>
#include <snrl/policy.hpp>
#include <snrl/trainer.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace snrl {

double joint_velocity_metric(const VectorXd& theta_dot);
/// ||tau_t - tau_{t-1}||, per control step (not divided by dt).
double torque_difference_metric(const VectorXd& torque, const VectorXd& prev_torque);
/// ||theta_dot_t - theta_dot_{t-1}||, per control step (not divided by dt).
double joint_acceleration_metric(const VectorXd& theta_dot, const VectorXd& prev_theta_dot);
/// sum_i tau_i * theta_dot_i, signed unless absolute is set.
double energy_metric(const VectorXd& torque, const VectorXd& theta_dot, bool absolute = false);
/// Squared velocity tracking error (lower is better).
double task_return_metric(const Command& cmd, double v_x, double w_yaw);

struct MetricRecord {
  double joint_velocity = 0;
  double joint_acceleration = 0;
  double torque_difference = 0;
  double energy = 0;
  double task_error = 0;
};

struct MetricSummary {
  std::string name;
  double mean = 0;
  double std = 0;
  std::int64_t n = 0;
};

struct EvalReport {
  std::vector<MetricSummary> metrics;  // joint_velocity .. task_return
  std::vector<std::uint64_t> seeds;
  std::string regime;
  Command command;
  bool real_mode = false;
  int episodes = 0;

  const MetricSummary& get(const std::string& name) const;
};

struct EvalOptions {
  int episodes = 1;
  int steps = 2000;
  Command command;
  bool real_mode = false;
  bool absolute_energy = false;
  std::uint64_t seed = 0;
};

/// Runs the deterministic mean policy (action = mu(s)) for full episodes.
EvalReport evaluate_policy(const GaussianPolicy& policy, const EnvConfig& env,
                           const RandomizationConfig& rnd, const EvalOptions& opts);

void write_eval_csv(const EvalReport& r, const std::filesystem::path& path);
void print_eval_table(const EvalReport& r, std::ostream& os);

// ---------------------------------------------------------------------------

struct PolicySamples {
  MatrixXd states;   // one column per sample
  MatrixXd actions;
};

/// States visited and actions drawn by the stochastic policy in one env,
/// resetting at episode ends.
PolicySamples sample_on_policy(const GaussianPolicy& policy, const EnvConfig& env,
                               const RandomizationConfig& rnd, int count, std::uint64_t seed);

struct GradNormSweep {
  std::vector<double> squared_norms;
  std::vector<double> histogram_edges;  // bins over [0, max]
  std::vector<std::int64_t> histogram_counts;
  double percentile95 = 0;
  double threshold = 0;            // (2 sn_coef / sigma)^2, 0 in plain mode
  double slack = 1;                // sqrt(action_dim)
  double fraction_exceeding = 0;   // against threshold
  double fraction_exceeding_slack = 0;  // against threshold * slack
};

/// ||grad_s log pi(a|s)||^2 over all samples. The bound is taken from the
/// policy in spectral mode, or passed explicitly via sn_coef for a plain one.
GradNormSweep grad_norm_sweep(const GaussianPolicy& p, const MatrixXd& states,
                              const MatrixXd& actions, int bins = 20, double sn_coef = 0);

double percentile(std::vector<double> values, double q);

/// Largest ||f(x) - f(y)|| / ||x - y|| over random pairs and small
/// perturbation pairs (x, x + 1e-4 u).
double empirical_lipschitz(const std::function<VectorXd(const VectorXd&)>& f,
                           Eigen::Index input_dim, int n_pairs, RngStream& rng,
                           double input_scale = 1.0);
double empirical_lipschitz(const Mlp& net, int n_pairs, RngStream& rng, double input_scale = 1.0);

// ---------------------------------------------------------------------------

struct MemoryBenchResult {
  Regime regime = Regime::kBaseline;
  std::int64_t peak_traces = 0;
  std::int64_t peak_bytes = 0;
  double wall_time = 0;
};

struct MemoryBenchConfig {
  EnvConfig env;
  NetworkConfig net;
  PpoConfig ppo;
  Eigen::Index n_envs = 16;
  Eigen::Index horizon = 128;
  std::uint64_t seed = 7;
};

/// Peak live tracked buffers during one ppo_update on synthetic data.
MemoryBenchResult memory_proxy_bench(Regime regime, const MemoryBenchConfig& cfg);

}  // namespace snrl

#endif  // SNRL_METRICS_HPP_
