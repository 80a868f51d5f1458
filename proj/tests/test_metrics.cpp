#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <snrl/metrics.hpp>

#include <numbers>

using namespace snrl;

TEST_CASE("joint_velocity_metric") {
  CHECK(joint_velocity_metric(VectorXd::Zero(6)) == 0.0);
  VectorXd v = VectorXd::Zero(6);
  v[0] = 3;
  v[1] = 4;
  CHECK(joint_velocity_metric(v) == doctest::Approx(5.0));
  RngStream rng(1, 0);
  const VectorXd r = gaussian_sample(rng, 9, 0.0, 1.0);
  double sq = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) sq += r[i] * r[i];
  CHECK(joint_velocity_metric(r) == doctest::Approx(std::sqrt(sq)).epsilon(1e-14));
}

TEST_CASE("torque_difference_metric") {
  const VectorXd a = VectorXd::Constant(3, 1.5);
  CHECK(torque_difference_metric(a, a) == 0.0);
  CHECK(torque_difference_metric(VectorXd::Constant(1, 5), VectorXd::Constant(1, 2)) == 3.0);
  const VectorXd u = (VectorXd(3) << 0.5, -1.0, 2.0).finished();
  VectorXd prev = -u;
  for (int k = 0; k < 8; ++k) {
    const VectorXd cur = (k % 2 == 0) ? VectorXd(u) : VectorXd(-u);
    CHECK(torque_difference_metric(cur, prev) == doctest::Approx(2 * u.norm()));
    prev = cur;
  }
}

TEST_CASE("joint_acceleration_metric") {
  const VectorXd v = VectorXd::Constant(4, 2.0);
  CHECK(joint_acceleration_metric(v, v) == 0.0);
  VectorXd w = v;
  w[2] += 0.1;
  CHECK(joint_acceleration_metric(w, v) == doctest::Approx(0.1));

  const double amp = 1.3;
  const int period = 50;
  double peak = 0;
  for (int k = 1; k < 4 * period; ++k) {
    const double a = amp * std::sin(2 * std::numbers::pi * k / period);
    const double b = amp * std::sin(2 * std::numbers::pi * (k - 1) / period);
    peak = std::max(peak, joint_acceleration_metric(VectorXd::Constant(1, a), VectorXd::Constant(1, b)));
  }
  CHECK(peak == doctest::Approx(2 * std::numbers::pi * amp / period).epsilon(0.01));
}

TEST_CASE("energy_metric: signed and absolute") {
  CHECK(energy_metric(VectorXd::Zero(2), VectorXd::Ones(2)) == 0.0);
  CHECK(energy_metric(VectorXd::Constant(1, 2), VectorXd::Constant(1, 3)) == 6.0);
  CHECK(energy_metric(VectorXd::Constant(1, 2), VectorXd::Constant(1, -3)) == -6.0);
  CHECK(energy_metric(VectorXd::Constant(1, 2), VectorXd::Constant(1, -3), true) == 6.0);
}

TEST_CASE("task_return_metric") {
  CHECK(task_return_metric({0.2, 0.1}, 0.2, 0.1) == 0.0);
  CHECK(task_return_metric({0.3, 0.4}, 0.0, 0.0) == doctest::Approx(0.25));
  CHECK(task_return_metric({0.25, 0.0}, 0.0, 0.0) == doctest::Approx(0.0625));
}

TEST_CASE("percentile: interpolation") {
  CHECK(percentile({}, 0.5) == 0.0);
  CHECK(percentile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(percentile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(percentile({4, 1, 3, 2}, 0.5) == 2.5);
}

TEST_CASE("grad_norm_sweep: actions at the mode give zero norms") {
  RngStream rng(2, 0);
  auto sn = make_sn_mlp(init_params({6, 16, 2}, rng), 1.0, rng, 30);
  const auto p = GaussianPolicy::spectral(std::move(sn), 0.2);
  const MatrixXd s = gaussian_matrix(rng, 6, 50);
  const auto sw = grad_norm_sweep(p, s, policy_mean(p, s));
  CHECK(sw.threshold == doctest::Approx(100.0));
  CHECK(sw.slack == doctest::Approx(std::sqrt(2.0)));
  CHECK(sw.percentile95 < 1e-20);
  CHECK(sw.fraction_exceeding == 0.0);
  for (double v : sw.squared_norms) CHECK(v < 1e-20);
  std::int64_t total = 0;
  for (auto c : sw.histogram_counts) total += c;
  CHECK(total == 50);
}

TEST_CASE("grad_norm_sweep: fresh SN net stays under its bound") {
  for (double coef : {0.5, 1.0}) {
    RngStream rng(3, 0);
    auto sn = make_sn_mlp(init_params({22, 64, 64, 6}, rng), coef, rng, 50);
    const auto p = GaussianPolicy::spectral(std::move(sn), 0.2);
    const MatrixXd s = gaussian_matrix(rng, 22, 2000);
    const MatrixXd a = policy_mean(p, s) + gaussian_matrix(rng, 6, 2000, 0.2);
    const auto sw = grad_norm_sweep(p, s, a);
    CHECK(sw.threshold == doctest::Approx(std::pow(2 * coef / 0.2, 2)));
    CHECK(sw.fraction_exceeding_slack <= 0.05);
  }
}

TEST_CASE("empirical_lipschitz: constant, linear and SN nets") {
  RngStream rng(4, 0);
  Mlp c = init_params({4, 8, 3}, rng);
  for (auto& w : c.weights) w.setZero();
  CHECK(empirical_lipschitz(c, 200, rng) == 0.0);

  Mlp lin = init_params({5, 4}, rng);
  const double sigma = sigma_max_oracle(lin.weights[0]);
  const double few = empirical_lipschitz(lin, 10, rng);
  const double many = empirical_lipschitz(lin, 5000, rng);
  CHECK(few <= sigma * (1 + 1e-9));
  CHECK(many <= sigma * (1 + 1e-9));
  CHECK(many >= 0.9 * sigma);

  auto sn = make_sn_mlp(init_params({22, 64, 64, 6}, rng), 0.2, rng, 200);
  const Mlp eff = normalize(sn);
  CHECK(empirical_lipschitz(eff, 2000, rng) <= 0.2 * (1 + 1e-3));
}

TEST_CASE("evaluate_policy: zero episodes and report contents") {
  EnvConfig env;
  RandomizationConfig rnd;
  RngStream rng(5, 0);
  Mlp m = init_params({22, 16, 6}, rng);
  m.weights.back() *= 0.01;
  const auto p = GaussianPolicy::plain(m, 0.2);
  EvalOptions opts;
  opts.episodes = 0;
  CHECK(evaluate_policy(p, env, rnd, opts).metrics.empty());

  opts.episodes = 1;
  opts.steps = 200;
  opts.command = {0.25, 0.0};
  const auto r = evaluate_policy(p, env, rnd, opts);
  CHECK(r.metrics.size() == 5);
  CHECK(r.get("torque_difference").n == 199);
  CHECK(r.get("task_return").n == 200);
  CHECK(r.get("task_return").mean >= 0.0);
  const auto again = evaluate_policy(p, env, rnd, opts);
  CHECK(again.get("torque_difference").mean == r.get("torque_difference").mean);
}

TEST_CASE("evaluate_policy: stationary policy has the hand-computed error") {
  EnvConfig env;
  const auto rnd = RandomizationConfig::none(env);
  env.init_noise_std = 0;
  Mlp m;
  m.weights.push_back(MatrixXd::Zero(6, 22));
  m.biases.push_back(VectorXd::Zero(6));
  const auto p = GaussianPolicy::plain(m, 0.2);
  EvalOptions opts;
  opts.steps = 100;
  opts.command = {0.25, 0.0};
  const auto r = evaluate_policy(p, env, rnd, opts);
  CHECK(r.get("task_return").mean == doctest::Approx(0.0625));
  CHECK(r.get("torque_difference").mean == 0.0);
}

TEST_CASE("memory_proxy_bench: ordering, determinism, empty case") {
  MemoryBenchConfig cfg;
  cfg.net.policy_hidden = {64, 64};
  cfg.net.value_hidden = {64, 64};
  cfg.net.disc_hidden = {32, 32};
  cfg.n_envs = 4;
  cfg.horizon = 64;
  cfg.ppo.epochs = 1;
  cfg.ppo.minibatch_size = 256;
  const auto base = memory_proxy_bench(Regime::kBaseline, cfg);
  const auto sn = memory_proxy_bench(Regime::kSn, cfg);
  const auto gp = memory_proxy_bench(Regime::kGpLcp, cfg);
  CHECK(gp.peak_bytes > sn.peak_bytes);
  CHECK(sn.peak_bytes >= base.peak_bytes);
  CHECK(gp.peak_traces > base.peak_traces);
  CHECK(memory_proxy_bench(Regime::kGpLcp, cfg).peak_bytes == gp.peak_bytes);

  cfg.n_envs = 0;
  const auto none = memory_proxy_bench(Regime::kGpLcp, cfg);
  CHECK(none.peak_bytes == 0);
  CHECK(none.peak_traces == 0);
}
