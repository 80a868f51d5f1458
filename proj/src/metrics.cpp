#include <snrl/metrics.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace snrl {

double joint_velocity_metric(const VectorXd& theta_dot) { return theta_dot.norm(); }

double torque_difference_metric(const VectorXd& torque, const VectorXd& prev_torque) {
  require(torque.size() == prev_torque.size(), "torque_difference_metric: dimension mismatch");
  return (torque - prev_torque).norm();
}

double joint_acceleration_metric(const VectorXd& theta_dot, const VectorXd& prev_theta_dot) {
  require(theta_dot.size() == prev_theta_dot.size(),
          "joint_acceleration_metric: dimension mismatch");
  return (theta_dot - prev_theta_dot).norm();
}

double energy_metric(const VectorXd& torque, const VectorXd& theta_dot, bool absolute) {
  require(torque.size() == theta_dot.size(), "energy_metric: dimension mismatch");
  const double e = torque.dot(theta_dot);
  return absolute ? std::abs(e) : e;
}

double task_return_metric(const Command& cmd, double v_x, double w_yaw) {
  const double ex = cmd.v_x - v_x;
  const double ey = cmd.w_yaw - w_yaw;
  return ex * ex + ey * ey;
}

const MetricSummary& EvalReport::get(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return m;
  throw ContractError("EvalReport: no metric named '" + name + "'");
}

namespace {

class RunningStat {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  MetricSummary summary(std::string name) const {
    return {std::move(name), mean_, n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1)) : 0.0,
            n_};
  }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
};

}  // namespace

EvalReport evaluate_policy(const GaussianPolicy& policy, const EnvConfig& env,
                           const RandomizationConfig& rnd, const EvalOptions& opts) {
  require(opts.episodes >= 0 && opts.steps >= 1, "evaluate_policy: invalid episode settings");
  EnvConfig cfg = env;
  cfg.episode_length = opts.steps;
  EvalReport report;
  report.command = opts.command;
  report.real_mode = opts.real_mode;
  report.episodes = opts.episodes;
  report.regime = policy.is_spectral() ? "sn" : "plain";
  if (opts.episodes == 0) return report;

  RunningStat jv, ja, td, en, te;
  for (int ep = 0; ep < opts.episodes; ++ep) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(ep);
    report.seeds.push_back(seed);
    ChainEnv chain(cfg, rnd, RngStream(seed, 5000), opts.real_mode);
    chain.set_fixed_command(opts.command);
    VectorXd obs = chain.reset();
    for (int t = 0; t < opts.steps; ++t) {
      const VectorXd action = evaluate(policy.effective(), obs);
      const auto s = chain.step(action);
      jv.add(joint_velocity_metric(s.theta_dot));
      en.add(energy_metric(s.torque_command, s.theta_dot, opts.absolute_energy));
      te.add(task_return_metric(opts.command, s.v_x, s.w_yaw));
      if (t > 0) {
        ja.add(joint_acceleration_metric(s.theta_dot, s.prev_theta_dot));
        td.add(torque_difference_metric(s.torque_command, s.prev_torque_command));
      }
      obs = s.observation;
      if (s.done) break;
    }
  }
  report.metrics = {jv.summary("joint_velocity"), ja.summary("joint_acceleration"),
                    td.summary("torque_difference"), en.summary("energy"),
                    te.summary("task_return")};
  return report;
}

void write_eval_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric,mean,std,n\n" << std::setprecision(17);
  for (const auto& m : r.metrics) out << m.name << ',' << m.mean << ',' << m.std << ',' << m.n << '\n';
}

void print_eval_table(const EvalReport& r, std::ostream& os) {
  os << "regime " << r.regime << "  command (" << r.command.v_x << ", " << r.command.w_yaw
     << ")  episodes " << r.episodes << (r.real_mode ? "  [actuator lag]" : "") << '\n';
  os << std::left << std::setw(20) << "metric" << std::right << std::setw(14) << "mean"
     << std::setw(14) << "std" << std::setw(10) << "n" << '\n';
  for (const auto& m : r.metrics) {
    os << std::left << std::setw(20) << m.name << std::right << std::setw(14)
       << std::setprecision(6) << m.mean << std::setw(14) << m.std << std::setw(10) << m.n << '\n';
  }
}

// ---------------------------------------------------------------------------

PolicySamples sample_on_policy(const GaussianPolicy& policy, const EnvConfig& env,
                               const RandomizationConfig& rnd, int count, std::uint64_t seed) {
  require(count >= 0, "sample_on_policy: count must be non-negative");
  PolicySamples out;
  out.states.resize(policy.state_dim(), count);
  out.actions.resize(policy.action_dim(), count);
  ChainEnv chain(env, rnd, RngStream(seed, 6000));
  RngStream action_rng(seed, 6001);
  VectorXd obs = chain.reset();
  for (int k = 0; k < count; ++k) {
    const auto a = act(policy, obs, action_rng);
    out.states.col(k) = obs;
    out.actions.col(k) = a.action;
    const auto s = chain.step(a.action);
    obs = s.done ? chain.reset() : s.observation;
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

GradNormSweep grad_norm_sweep(const GaussianPolicy& p, const MatrixXd& states,
                              const MatrixXd& actions, int bins, double sn_coef) {
  require(bins >= 1, "grad_norm_sweep: bins must be >= 1");
  GradNormSweep out;
  out.slack = std::sqrt(static_cast<double>(p.action_dim()));
  const double coef = p.is_spectral() ? p.sn_coef() : sn_coef;
  if (coef > 0) {
    const double k = 2.0 * coef / p.sigma();
    out.threshold = k * k;
  }
  if (states.cols() == 0) return out;

  const MatrixXd grads = grad_logprob_state_batch(p, states, actions);
  const VectorXd sq = grads.colwise().squaredNorm().transpose();
  out.squared_norms.assign(sq.data(), sq.data() + sq.size());
  out.percentile95 = percentile(out.squared_norms, 0.95);

  const double top = std::max(sq.maxCoeff(), 1e-300);
  out.histogram_counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) out.histogram_edges.push_back(top * b / bins);
  for (double v : out.squared_norms) {
    auto b = static_cast<int>(v / top * bins);
    out.histogram_counts[std::clamp(b, 0, bins - 1)] += 1;
  }
  if (out.threshold > 0) {
    const auto n = static_cast<double>(sq.size());
    out.fraction_exceeding = static_cast<double>((sq.array() > out.threshold).count()) / n;
    out.fraction_exceeding_slack =
        static_cast<double>((sq.array() > out.threshold * out.slack).count()) / n;
  }
  return out;
}

double empirical_lipschitz(const std::function<VectorXd(const VectorXd&)>& f,
                           Eigen::Index input_dim, int n_pairs, RngStream& rng,
                           double input_scale) {
  require(n_pairs >= 1, "empirical_lipschitz: n_pairs must be >= 1");
  double best = 0;
  for (int k = 0; k < n_pairs; ++k) {
    const VectorXd x = gaussian_sample<double>(rng, input_dim, 0.0, input_scale);
    VectorXd y;
    if (k % 2 == 0) {
      y = gaussian_sample<double>(rng, input_dim, 0.0, input_scale);
    } else {
      y = x + 1e-4 * random_unit_vector<double>(rng, input_dim);
    }
    const double dx = (x - y).norm();
    if (dx == 0) continue;
    best = std::max(best, (f(x) - f(y)).norm() / dx);
  }
  return best;
}

double empirical_lipschitz(const Mlp& net, int n_pairs, RngStream& rng, double input_scale) {
  return empirical_lipschitz([&net](const VectorXd& x) -> VectorXd { return evaluate(net, x); },
                             net.input_dim(), n_pairs, rng, input_scale);
}

// ---------------------------------------------------------------------------

MemoryBenchResult memory_proxy_bench(Regime regime, const MemoryBenchConfig& cfg) {
  MemoryBenchResult out;
  out.regime = regime;
  if (cfg.n_envs * cfg.horizon == 0) return out;

  auto& probe = MemoryProbe::instance();
  const auto before = probe.snapshot();
  const auto t0 = std::chrono::steady_clock::now();
  {
    RngStream rng(cfg.seed, 1);
    PpoConfig ppo = cfg.ppo;
    ppo.regime = regime;
    TrainState ts = make_train_state(cfg.env, cfg.net, regime, rng);

    const Eigen::Index obs_dim = observation_dim(cfg.env);
    const Eigen::Index act = cfg.env.n_joints;
    auto buf = RolloutBuffer::allocate(cfg.n_envs, cfg.horizon, obs_dim, act, cfg.env.n_joints);
    RngStream data(cfg.seed, 2);
    buf.observations = gaussian_matrix<double>(data, obs_dim, buf.size());
    const MatrixXd mean = policy_mean(ts.policy, buf.observations);
    buf.actions = mean + ts.policy.sigma() * gaussian_matrix<double>(data, act, buf.size());
    buf.log_probs = log_prob_batch(ts.policy, buf.observations, buf.actions);
    buf.values = evaluate(ts.value, buf.observations).row(0).transpose();
    buf.rewards = gaussian_sample<double>(data, buf.size(), 0.0, 1.0);
    buf.task_rewards = buf.rewards;
    buf.style_rewards.setZero();
    buf.reg_penalties.setZero();
    buf.torques = gaussian_matrix<double>(data, act, buf.size());
    buf.joint_velocities = gaussian_matrix<double>(data, act, buf.size());
    buf.features_from = gaussian_matrix<double>(data, 2 * act, buf.size());
    buf.features_to = gaussian_matrix<double>(data, 2 * act, buf.size());
    buf.last_observations = gaussian_matrix<double>(data, obs_dim, cfg.n_envs);
    const auto gae = compute_gae(buf, ppo.gamma, ppo.gae_lambda, ts.value);

    probe.reset_peak();
    RngStream update_rng(cfg.seed, 3);
    UpdateStats stats;
    TrainState next = ppo_update(ts, buf, gae, ppo, ppo.lr_start, update_rng, &stats);
    const auto snap = probe.snapshot();
    out.peak_traces = snap.peak_traces - before.live_traces;
    out.peak_bytes = (snap.peak_elements - before.live_elements) *
                     static_cast<std::int64_t>(sizeof(double));
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace snrl
