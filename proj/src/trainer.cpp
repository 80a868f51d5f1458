#include <snrl/trainer.hpp>

#include <snrl/parallel.hpp>

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace snrl {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kBaseline:
      return "baseline";
    case Regime::kRegReward:
      return "reg-reward";
    case Regime::kGpLcp:
      return "gp-lcp";
    case Regime::kSn:
      return "sn";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  if (name == "baseline") return Regime::kBaseline;
  if (name == "reg-reward") return Regime::kRegReward;
  if (name == "gp-lcp") return Regime::kGpLcp;
  if (name == "sn") return Regime::kSn;
  throw ContractError("unknown regime '" + std::string(name) +
                      "' (expected baseline, reg-reward, gp-lcp or sn)");
}

void PpoConfig::validate() const {
  require(clip_ratio > 0 && clip_ratio < 1, "PpoConfig: clip_ratio must be in (0, 1)");
  require(gamma > 0 && gamma <= 1, "PpoConfig: gamma must be in (0, 1]");
  require(gae_lambda >= 0 && gae_lambda <= 1, "PpoConfig: gae_lambda must be in [0, 1]");
  require(epochs >= 1, "PpoConfig: epochs must be >= 1");
  require(minibatch_size >= 1, "PpoConfig: minibatch_size must be >= 1");
  require(lr_start >= 0 && lr_end >= 0, "PpoConfig: learning rates must be non-negative");
  require(gp_weight >= 0, "PpoConfig: gp_weight must be non-negative");
  require(reward_scale > 0, "PpoConfig: reward_scale must be positive");
}

void TrainState::retag() {
  param_tag = MemoryTag(MemoryKind::kBuffer, policy.trainable().element_count() +
                                                 value.element_count() +
                                                 disc.net.element_count());
}

namespace {

std::vector<Eigen::Index> layer_dims(Eigen::Index in, const std::vector<Eigen::Index>& hidden,
                                     Eigen::Index out) {
  std::vector<Eigen::Index> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

TrainState make_train_state(const EnvConfig& env, const NetworkConfig& net, Regime regime,
                            RngStream& rng) {
  env.validate();
  const Eigen::Index obs = observation_dim(env);
  const Eigen::Index act = env.n_joints;
  auto pdims = layer_dims(obs, net.policy_hidden, act);
  auto vdims = layer_dims(obs, net.value_hidden, 1);
  Mlp mean_net = init_params<double>(pdims, rng);
  mean_net.weights.back() *= net.policy_head_scale;
  Mlp value = init_params<double>(vdims, rng);
  value.weights.back() *= net.value_head_scale;
  auto disc = Discriminator::create(2 * env.n_joints, net.disc_hidden, rng);

  auto make_policy = [&] {
    if (regime != Regime::kSn) return GaussianPolicy::plain(std::move(mean_net), net.sigma);
    auto sn = make_sn_mlp(std::move(mean_net), net.sn_coef, rng, net.power_iterations);
    warm_start(sn, net.power_warmup);
    return GaussianPolicy::spectral(std::move(sn), net.sigma);
  };
  GaussianPolicy policy = make_policy();

  TrainState ts{std::move(policy), std::move(value), std::move(disc), {}, {}, {}, 0, {}};
  ts.policy_opt = AdamState::for_params(ts.policy.trainable());
  ts.value_opt = AdamState::for_params(ts.value);
  ts.disc_opt = AdamState::for_params(ts.disc.net);
  ts.retag();
  return ts;
}

double learning_rate(const PpoConfig& cfg, std::uint64_t update, std::uint64_t total) {
  if (total == 0) return cfg.lr_start;
  const double frac =
      static_cast<double>(std::min(update, total)) / static_cast<double>(total);
  return std::lerp(cfg.lr_start, cfg.lr_end, frac);
}

// ---------------------------------------------------------------------------

RolloutBuffer RolloutBuffer::allocate(Eigen::Index n_envs, Eigen::Index horizon,
                                      Eigen::Index obs_dim, Eigen::Index act_dim,
                                      Eigen::Index n_joints) {
  RolloutBuffer b;
  b.n_envs = n_envs;
  b.horizon = horizon;
  const Eigen::Index n = n_envs * horizon;
  b.observations.resize(obs_dim, n);
  b.actions.resize(act_dim, n);
  b.log_probs.resize(n);
  b.values.resize(n);
  b.task_rewards.resize(n);
  b.style_rewards.resize(n);
  b.reg_penalties.resize(n);
  b.rewards.resize(n);
  b.dones.assign(n, 0);
  b.torques.resize(n_joints, n);
  b.joint_velocities.resize(n_joints, n);
  b.features_from.resize(2 * n_joints, n);
  b.features_to.resize(2 * n_joints, n);
  b.last_observations.resize(obs_dim, n_envs);
  const std::int64_t elems = n * (obs_dim + act_dim + 6 + 2 * n_joints + 4 * n_joints) +
                             obs_dim * n_envs;
  b.tag = MemoryTag(MemoryKind::kBuffer, elems);
  return b;
}

EnvPool EnvPool::create(const EnvConfig& cfg, const RandomizationConfig& rnd, int n_envs,
                        std::uint64_t seed, int workers) {
  require(n_envs >= 1, "EnvPool: need at least one env");
  EnvPool pool;
  pool.workers = workers;
  for (int e = 0; e < n_envs; ++e) {
    pool.envs.emplace_back(cfg, rnd, RngStream(seed, 1000 + static_cast<std::uint64_t>(e)));
    pool.action_rngs.emplace_back(seed, 2000 + static_cast<std::uint64_t>(e));
    pool.envs.back().reset();
  }
  return pool;
}

RegPenalties regularization_rewards(const VectorXd& theta_dot, const VectorXd& prev_theta_dot,
                                    const VectorXd& torque, const VectorXd& prev_torque,
                                    const RegWeights& w) {
  require(theta_dot.size() == prev_theta_dot.size() && torque.size() == prev_torque.size() &&
              theta_dot.size() == torque.size(),
          "regularization_rewards: dimension mismatch");
  RegPenalties p;
  p.joint_velocity = w.joint_velocity * theta_dot.squaredNorm();
  p.joint_acceleration = w.joint_acceleration * (theta_dot - prev_theta_dot).squaredNorm();
  p.torque = w.torque * torque.squaredNorm();
  p.torque_difference = w.torque_difference * (torque - prev_torque).squaredNorm();
  return p;
}

RolloutBuffer collect_rollout(const TrainState& ts, EnvPool& pool, Eigen::Index horizon,
                              const PpoConfig& cfg) {
  require(horizon >= 1, "collect_rollout: horizon must be >= 1");
  require(pool.size() >= 1, "collect_rollout: empty env pool");
  const auto n_envs = static_cast<Eigen::Index>(pool.size());
  const EnvConfig& env_cfg = pool.envs.front().config();
  const Eigen::Index obs_dim = observation_dim(env_cfg);
  const Eigen::Index act_dim = env_cfg.n_joints;
  auto buf = RolloutBuffer::allocate(n_envs, horizon, obs_dim, act_dim, env_cfg.n_joints);

  const GaussianPolicy& policy = ts.policy;
  const double sigma = policy.sigma();
  double grad_norm_sum = 0;
  std::vector<ChainEnv::Step> steps(pool.size());

  for (Eigen::Index t = 0; t < horizon; ++t) {
    MatrixXd obs(obs_dim, n_envs);
    for (Eigen::Index e = 0; e < n_envs; ++e) obs.col(e) = pool.envs[e].last_observation();
    const MatrixXd mean = policy_mean(policy, obs);
    const MatrixXd values = evaluate(ts.value, obs);

    MatrixXd actions(act_dim, n_envs);
    for (Eigen::Index e = 0; e < n_envs; ++e) {
      actions.col(e) =
          mean.col(e) + sigma * gaussian_sample<double>(pool.action_rngs[e], act_dim, 0.0, 1.0);
    }
    const VectorXd logp = log_prob_batch(policy, obs, actions);
    grad_norm_sum += grad_logprob_state_batch(policy, obs, actions).colwise().squaredNorm().sum();

    parallel_for(pool.size(), pool.workers, [&](std::size_t e) {
      auto s = pool.envs[e].step(actions.col(static_cast<Eigen::Index>(e)));
      if (!s.observation.allFinite()) {
        s.done = true;
        s.failed = true;
      }
      if (s.done) pool.envs[e].reset();
      steps[e] = std::move(s);
    });

    MatrixXd from(2 * env_cfg.n_joints, n_envs);
    MatrixXd to(2 * env_cfg.n_joints, n_envs);
    for (Eigen::Index e = 0; e < n_envs; ++e) {
      from.col(e) = steps[e].features_before;
      to.col(e) = steps[e].features_after;
    }
    const VectorXd scores = discriminator_scores(ts.disc, from, to);

    for (Eigen::Index e = 0; e < n_envs; ++e) {
      const Eigen::Index k = t * n_envs + e;
      const auto& s = steps[e];
      buf.observations.col(k) = obs.col(e);
      buf.actions.col(k) = actions.col(e);
      buf.log_probs[k] = logp[e];
      buf.values[k] = values(0, e);
      buf.task_rewards[k] = s.task_reward;
      buf.style_rewards[k] = style_reward_from_score(scores[e]);
      double penalty = 0;
      if (cfg.regime == Regime::kRegReward) {
        penalty = regularization_rewards(s.theta_dot, s.prev_theta_dot, s.torque_command,
                                         s.prev_torque_command, cfg.reg)
                      .total();
      }
      buf.reg_penalties[k] = penalty;
      buf.rewards[k] = cfg.reward_scale * (cfg.task_weight * s.task_reward +
                                           cfg.style_weight * buf.style_rewards[k] - penalty);
      buf.dones[k] = s.done ? 1 : 0;
      if (s.failed) ++buf.failures;
      buf.torques.col(k) = s.torque_command;
      buf.joint_velocities.col(k) = s.theta_dot;
      buf.features_from.col(k) = s.features_before;
      buf.features_to.col(k) = s.features_after;
    }
  }
  for (Eigen::Index e = 0; e < n_envs; ++e)
    buf.last_observations.col(e) = pool.envs[e].last_observation();
  buf.mean_grad_norm_sq = grad_norm_sum / static_cast<double>(buf.size());
  return buf;
}

GaeResult compute_gae(const RolloutBuffer& buf, double gamma, double lambda, const Mlp& value_net,
                      bool normalize) {
  require(buf.size() > 0, "compute_gae: empty buffer");
  const Eigen::Index n_envs = buf.n_envs;
  const VectorXd bootstrap = evaluate(value_net, buf.last_observations).row(0).transpose();
  GaeResult out;
  out.advantages.resize(buf.size());
  VectorXd running = VectorXd::Zero(n_envs);
  for (Eigen::Index t = buf.horizon; t-- > 0;) {
    for (Eigen::Index e = 0; e < n_envs; ++e) {
      const Eigen::Index k = t * n_envs + e;
      const double next_value =
          (t + 1 == buf.horizon) ? bootstrap[e] : buf.values[(t + 1) * n_envs + e];
      const double nonterminal = buf.dones[k] ? 0.0 : 1.0;
      const double delta = buf.rewards[k] + gamma * next_value * nonterminal - buf.values[k];
      running[e] = delta + gamma * lambda * nonterminal * running[e];
      out.advantages[k] = running[e];
    }
  }
  out.returns = out.advantages + buf.values;
  if (normalize && out.advantages.size() > 1) {
    const double mean = out.advantages.mean();
    const double var = (out.advantages.array() - mean).square().mean();
    out.advantages = (out.advantages.array() - mean) / (std::sqrt(var) + 1e-8);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct GpTerms {
  double penalty = 0;
  double mean_sq_norm = 0;
  Mlp weight_grads;     // through the weights inside the input gradient
  MatrixXd mean_adjoint;  // adjoint of the policy mean
};

GpTerms gp_terms(const Mlp& eff, const ForwardTrace<double>& trace, const MatrixXd& actions,
                 double sigma, double weight, GpReduction reduction) {
  const double s2 = sigma * sigma;
  const auto batch = static_cast<double>(trace.batch());
  const MatrixXd residual = (actions - trace.output) / s2;
  const auto igt = backward_input_traced(eff, trace, residual);
  const VectorXd sq = igt.input_grad.colwise().squaredNorm().transpose();

  GpTerms out;
  out.mean_sq_norm = sq.mean();
  MatrixXd adjoint;
  if (reduction == GpReduction::kMean) {
    out.penalty = weight * out.mean_sq_norm;
    adjoint = (2.0 * weight / batch) * igt.input_grad;
  } else {
    Eigen::Index worst = 0;
    out.penalty = weight * sq.maxCoeff(&worst);
    adjoint = MatrixXd::Zero(igt.input_grad.rows(), igt.input_grad.cols());
    adjoint.col(worst) = 2.0 * weight * igt.input_grad.col(worst);
  }
  auto adj = backward_through_input_grad(eff, trace, igt, adjoint);
  out.weight_grads = std::move(adj.params);
  out.mean_adjoint = -adj.out_grad / s2;
  return out;
}

}  // namespace

GpPenalty gp_penalty(const GaussianPolicy& p, const MatrixXd& states, const MatrixXd& actions,
                     double weight, GpReduction reduction) {
  require(actions.rows() == p.action_dim() && actions.cols() == states.cols(),
          "gp_penalty: action shape mismatch");
  require(states.cols() > 0, "gp_penalty: empty batch");
  const Mlp& eff = p.effective();
  const auto trace = forward(eff, states);
  auto terms = gp_terms(eff, trace, actions, p.sigma(), weight, reduction);
  GpPenalty out;
  out.penalty = terms.penalty;
  out.mean_sq_norm = terms.mean_sq_norm;
  out.grads = std::move(terms.weight_grads);
  out.grads += backward_params(eff, trace, terms.mean_adjoint);
  return out;
}

SurrogateTerms clipped_surrogate(const MatrixXd& means, const MatrixXd& actions,
                                 const VectorXd& old_log_probs, const VectorXd& advantages,
                                 double sigma, double clip_ratio) {
  const Eigen::Index batch = means.cols();
  require(actions.rows() == means.rows() && actions.cols() == batch &&
              old_log_probs.size() == batch && advantages.size() == batch,
          "clipped_surrogate: shape mismatch");
  const double s2 = sigma * sigma;
  const double log_norm =
      static_cast<double>(means.rows()) * std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  SurrogateTerms out;
  out.mean_grad = MatrixXd::Zero(means.rows(), batch);
  const auto inv_b = 1.0 / static_cast<double>(batch);
  Eigen::Index clipped = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const VectorXd diff = actions.col(b) - means.col(b);
    const double logp = -diff.squaredNorm() / (2.0 * s2) - log_norm;
    const double ratio = std::exp(logp - old_log_probs[b]);
    const double adv = advantages[b];
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
    out.loss -= inv_b * std::min(ratio * adv, clipped_ratio * adv);
    const bool active = adv >= 0 ? ratio <= 1.0 + clip_ratio : ratio >= 1.0 - clip_ratio;
    if (active) {
      out.mean_grad.col(b) = -inv_b * adv * ratio * diff / s2;
    } else {
      ++clipped;
    }
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  return out;
}

namespace {

template <typename Derived>
MatrixXd gather_cols(const Eigen::MatrixBase<Derived>& m, std::span<const Eigen::Index> idx) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
  return out;
}

VectorXd gather(const VectorXd& v, std::span<const Eigen::Index> idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[idx[j]];
  return out;
}

void shuffle(std::vector<Eigen::Index>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

TrainState ppo_update(const TrainState& ts, const RolloutBuffer& buf, const GaeResult& gae,
                      const PpoConfig& cfg, double lr, RngStream& rng, UpdateStats* stats) {
  cfg.validate();
  require(buf.size() > 0, "ppo_update: empty buffer");
  require(gae.advantages.size() == buf.size() && gae.returns.size() == buf.size(),
          "ppo_update: advantages do not match buffer");
  UpdateStats local;
  UpdateStats& st = stats ? *stats : local;
  st = UpdateStats{};
  st.lr = lr;

  TrainState next = ts;
  const bool spectral = next.policy.is_spectral();
  const bool gp = cfg.regime == Regime::kGpLcp;
  const double sigma = next.policy.sigma();
  const double entropy = static_cast<double>(next.policy.action_dim()) *
                         (0.5 + 0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(buf.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto mb = static_cast<std::size_t>(std::min(cfg.minibatch_size, buf.size()));
  std::size_t batches = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::span<const Eigen::Index> idx(order.data() + start,
                                              std::min(mb, order.size() - start));
      const MatrixXd obs = gather_cols(buf.observations, idx);
      const MatrixXd act = gather_cols(buf.actions, idx);
      const VectorXd old_logp = gather(buf.log_probs, idx);
      const VectorXd adv = gather(gae.advantages, idx);
      const VectorXd ret = gather(gae.returns, idx);
      const auto batch = static_cast<double>(idx.size());

      if (spectral) next.policy.refresh();
      const Mlp& eff = next.policy.effective();
      const auto ptrace = forward(eff, obs);
      const auto vtrace = forward(next.value, obs);

      auto surr = clipped_surrogate(ptrace.output, act, old_logp, adv, sigma, cfg.clip_ratio);
      MatrixXd mean_grad = std::move(surr.mean_grad);
      double penalty = 0;
      Mlp gp_grads;
      if (gp) {
        auto terms = gp_terms(eff, ptrace, act, sigma, cfg.gp_weight, cfg.gp_reduction);
        penalty = terms.penalty;
        mean_grad += terms.mean_adjoint;
        gp_grads = std::move(terms.weight_grads);
      }

      const VectorXd verr = vtrace.output.row(0).transpose() - ret;
      const double vloss = 0.5 * cfg.value_loss_weight * verr.squaredNorm() / batch;
      const double total = surr.loss + vloss + penalty - cfg.entropy_weight * entropy;

      Mlp pgrads = backward_params(eff, ptrace, mean_grad);
      if (gp) pgrads += gp_grads;
      if (spectral) chain_to_raw(pgrads, next.policy.scales());
      Mlp vgrads =
          backward_params(next.value, vtrace, (cfg.value_loss_weight / batch) * verr.transpose());
      MemoryTag grad_tag(MemoryKind::kBuffer, pgrads.element_count() + vgrads.element_count());

      if (!std::isfinite(total) || !pgrads.all_finite() || !vgrads.all_finite()) {
        st.aborted = true;
        st.incident = "non-finite loss at epoch " + std::to_string(epoch) + ", minibatch " +
                      std::to_string(start / mb) + "; update rolled back";
        return ts;
      }

      adam_step(next.policy.trainable_mut(), pgrads, next.policy_opt, lr);
      adam_step(next.value, vgrads, next.value_opt, lr);

      st.policy_loss += surr.loss;
      st.value_loss += vloss;
      st.gp_penalty += penalty;
      ++batches;
    }
  }
  if (spectral) next.policy.refresh();
  if (batches > 0) {
    st.policy_loss /= static_cast<double>(batches);
    st.value_loss /= static_cast<double>(batches);
    st.gp_penalty /= static_cast<double>(batches);
  }
  next.update_index = ts.update_index + 1;
  return next;
}

// ---------------------------------------------------------------------------

namespace {

TrainState initial_state(const TrainerOptions& opts) {
  RngStream rng(opts.seed, 1);
  return make_train_state(opts.env, opts.net, opts.ppo.regime, rng);
}

}  // namespace

Trainer::Trainer(TrainerOptions opts) : Trainer(opts, initial_state(opts)) {}

Trainer::Trainer(TrainerOptions opts, TrainState initial)
    : opts_(std::move(opts)),
      state_(std::move(initial)),
      pool_(EnvPool::create(opts_.env, opts_.randomization, opts_.n_envs, opts_.seed,
                            opts_.workers)) {
  opts_.ppo.validate();
  reference_ = make_reference_dataset(generate_reference_gait(
      opts_.env, opts_.reference.cycles, opts_.reference.amplitude, opts_.reference.frequency));
}

UpdateLog Trainer::run_update() {
  const auto t0 = std::chrono::steady_clock::now();
  UpdateLog log;
  log.update_index = state_.update_index;
  log.lr = learning_rate(opts_.ppo, state_.update_index, opts_.n_updates);

  last_rollout_ = collect_rollout(state_, pool_, opts_.horizon, opts_.ppo);
  const auto gae =
      compute_gae(last_rollout_, opts_.ppo.gamma, opts_.ppo.gae_lambda, state_.value);
  RngStream rng = RngStream(opts_.seed, 3).split(state_.update_index);

  UpdateStats stats;
  TrainState next = ppo_update(state_, last_rollout_, gae, opts_.ppo, log.lr, rng, &stats);
  if (!stats.aborted) {
    AmpUpdateConfig amp = opts_.amp;
    amp.learning_rate = log.lr;
    const ReferenceDataset policy_transitions{last_rollout_.features_from,
                                              last_rollout_.features_to};
    next.disc = amp_update(next.disc, reference_, policy_transitions, next.disc_opt, amp, rng);
  } else {
    next.update_index = state_.update_index + 1;
  }
  state_ = std::move(next);

  log.aborted = stats.aborted;
  log.mean_task_reward = last_rollout_.task_rewards.mean();
  log.mean_style_reward = last_rollout_.style_rewards.mean();
  log.mean_grad_norm_sq = last_rollout_.mean_grad_norm_sq;
  log.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

}  // namespace snrl
