#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd.hpp"

#include <snrl/policy.hpp>

#include <numbers>

using namespace snrl;

namespace {

GaussianPolicy random_policy(std::initializer_list<Eigen::Index> dims, double sigma,
                             std::uint64_t seed) {
  RngStream rng(seed, 0);
  Mlp p = init_params(dims, rng);
  for (auto& b : p.biases) b = gaussian_sample(rng, b.size(), 0.0, 0.1);
  return GaussianPolicy::plain(std::move(p), sigma);
}

}  // namespace

TEST_CASE("act: vanishing sigma returns the mean") {
  const auto p = random_policy({4, 8, 2}, 1e-12, 1);
  RngStream rng(2, 0);
  const VectorXd s = VectorXd::LinSpaced(4, -1, 1);
  const auto a = act(p, s, rng);
  CHECK((a.action - a.mean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("act: sample statistics") {
  const auto p = random_policy({3, 2}, 0.2, 3);
  RngStream rng(4, 0);
  const VectorXd s = VectorXd::Ones(3);
  const VectorXd mu = policy_mean(p, s).col(0);
  VectorXd sum = VectorXd::Zero(2);
  double sq = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const VectorXd d = act(p, s, rng).action - mu;
    sum += d;
    sq += d.squaredNorm();
  }
  CHECK((sum / n).norm() < 0.01);
  CHECK(std::sqrt(sq / (2.0 * n)) == doctest::Approx(0.2).epsilon(0.01));
}

TEST_CASE("log_prob: density at the mode and shifted by two sigma") {
  const double sigma = 0.2;
  const auto p = random_policy({5, 3}, sigma, 5);
  const VectorXd s = VectorXd::Ones(5);
  const VectorXd mu = policy_mean(p, s).col(0);
  const double at_mode = log_prob(p, s, mu);
  CHECK(at_mode == doctest::Approx(-3.0 * std::log(sigma * std::sqrt(2 * std::numbers::pi))));
  VectorXd a = mu;
  a[1] += 2 * sigma;
  CHECK(at_mode - log_prob(p, s, a) == doctest::Approx(2.0).epsilon(1e-12));

  const VectorXd m = VectorXd::Zero(1);
  CHECK(gaussian_log_density(m, m, 1.0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
}

TEST_CASE("log_prob: one-dimensional density integrates to one") {
  const auto p = random_policy({2, 1}, 0.37, 6);
  const VectorXd s = (VectorXd(2) << 0.3, -0.8).finished();
  const double mu = policy_mean(p, s)(0, 0);
  // Composite Simpson over mu +- 10 sigma.
  const int n = 4000;
  const double lo = mu - 3.7, hi = mu + 3.7, h = (hi - lo) / n;
  double acc = 0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    acc += w * std::exp(log_prob(p, s, VectorXd::Constant(1, lo + i * h)));
  }
  CHECK(std::abs(acc * h / 3 - 1.0) < 1e-3);
}

TEST_CASE("log_prob: permuting actions and output rows together") {
  RngStream rng(7, 0);
  Mlp m = init_params({4, 6, 3}, rng);
  const auto p = GaussianPolicy::plain(m, 0.3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  Mlp mp = m;
  mp.weights.back() = perm * m.weights.back();
  mp.biases.back() = perm * m.biases.back();
  const auto pp = GaussianPolicy::plain(mp, 0.3);
  const VectorXd s = gaussian_sample(rng, 4, 0.0, 1.0);
  const VectorXd a = gaussian_sample(rng, 3, 0.0, 1.0);
  CHECK(log_prob(p, s, a) == doctest::Approx(log_prob(pp, s, VectorXd(perm * a))).epsilon(1e-13));
}

TEST_CASE("grad_logprob_state: zero at the mode, linear closed form") {
  const auto p = random_policy({4, 8, 2}, 0.2, 8);
  const VectorXd s = VectorXd::LinSpaced(4, -0.5, 0.5);
  CHECK(grad_logprob_state(p, s, policy_mean(p, s).col(0)).norm() < 1e-12);

  RngStream rng(9, 0);
  Mlp lin;
  lin.weights.push_back(gaussian_matrix(rng, 3, 5));
  lin.biases.push_back(VectorXd::Zero(3));
  const auto pl = GaussianPolicy::plain(lin, 0.4);
  const VectorXd x = gaussian_sample(rng, 5, 0.0, 1.0);
  const VectorXd a = gaussian_sample(rng, 3, 0.0, 1.0);
  const MatrixXd& w = lin.weights[0];
  const VectorXd expect = w.transpose() * (a - w * x) / 0.16;
  CHECK((grad_logprob_state(pl, x, a) - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("grad_logprob_state: finite differences on a full-size net") {
  const auto p = random_policy({22, 64, 64, 6}, 0.2, 10);
  RngStream rng(11, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd s = gaussian_sample(rng, 22, 0.0, 1.0);
    const VectorXd a = policy_mean(p, s).col(0) + gaussian_sample(rng, 6, 0.0, 0.2);
    auto f = [&](const VectorXd& x) { return log_prob(p, x, a); };
    CHECK(snrl::testing::rel_err(grad_logprob_state(p, s, a), snrl::testing::fd_vector(s, f)) <
          1e-4);
  }
}

TEST_CASE("grad_logprob_state: linear in the action residual") {
  const auto p = random_policy({5, 7, 2}, 0.25, 12);
  RngStream rng(13, 0);
  const VectorXd s = gaussian_sample(rng, 5, 0.0, 1.0);
  const VectorXd mu = policy_mean(p, s).col(0);
  const VectorXd d1 = gaussian_sample(rng, 2, 0.0, 1.0);
  const VectorXd d2 = gaussian_sample(rng, 2, 0.0, 1.0);
  const VectorXd lhs = grad_logprob_state(p, s, mu + 2.0 * d1 - 3.0 * d2);
  const VectorXd rhs =
      2.0 * grad_logprob_state(p, s, mu + d1) - 3.0 * grad_logprob_state(p, s, mu + d2);
  CHECK((lhs - rhs).norm() < 1e-10 * (1 + rhs.norm()));
}

TEST_CASE("batched forms agree with per-sample forms") {
  const auto p = random_policy({4, 9, 3}, 0.3, 14);
  RngStream rng(15, 0);
  const MatrixXd s = gaussian_matrix(rng, 4, 6);
  const MatrixXd a = gaussian_matrix(rng, 3, 6);
  const VectorXd lp = log_prob_batch(p, s, a);
  const MatrixXd g = grad_logprob_state_batch(p, s, a);
  for (Eigen::Index b = 0; b < 6; ++b) {
    CHECK(lp[b] == doctest::Approx(log_prob(p, s.col(b), a.col(b))).epsilon(1e-13));
    CHECK((g.col(b) - grad_logprob_state(p, s.col(b), a.col(b))).norm() < 1e-12);
  }
}

TEST_CASE("grad_norm_bound: values and plain-mode error") {
  for (auto [coef, bound] : {std::pair{1.0, 10.0}, {0.5, 5.0}, {0.2, 2.0}}) {
    RngStream rng(16, 0);
    auto sn = make_sn_mlp(init_params({4, 8, 2}, rng), coef, rng, 20);
    const auto p = GaussianPolicy::spectral(std::move(sn), 0.2);
    CHECK(grad_norm_bound(p) == doctest::Approx(bound).epsilon(1e-14));
    CHECK(grad_norm_bound(p) * grad_norm_bound(p) == doctest::Approx(bound * bound));
  }
  CHECK_THROWS_AS(grad_norm_bound(random_policy({2, 2}, 0.2, 17)), NotApplicableError);
}

TEST_CASE("spectral policy: evaluation uses normalized weights") {
  RngStream rng(18, 0);
  auto sn = make_sn_mlp(init_params({5, 10, 2}, rng), 0.5, rng, 100);
  const auto p = GaussianPolicy::spectral(std::move(sn), 0.2);
  CHECK(sigma_max_oracle(p.effective().weights.back()) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(p.trainable().weights[0] != p.effective().weights[0]);
  CHECK_THROWS_AS(GaussianPolicy::plain(init_params({2, 2}, rng), 0.0), ContractError);
}
