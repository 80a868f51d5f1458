#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <snrl/specnorm.hpp>

using namespace snrl;

TEST_CASE("power_iteration: identity and diagonal") {
  RngStream rng(1, 0);
  const VectorXd u = random_unit_vector(rng, 4);
  const auto r = power_iteration(MatrixXd::Identity(4, 4), u, 1);
  CHECK(r.sigma == doctest::Approx(1.0).epsilon(1e-14));

  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 5;
  d(1, 1) = 1;
  const VectorXd u2 = (VectorXd(2) << 1, 1).finished().normalized();
  CHECK(std::abs(power_iteration(d, u2, 50).sigma - 5.0) < 1e-9);
}

TEST_CASE("power_iteration: zero matrix is degenerate, u kept") {
  RngStream rng(2, 0);
  const VectorXd u = random_unit_vector(rng, 3);
  const auto r = power_iteration(MatrixXd::Zero(3, 5), u, 3);
  CHECK(r.degenerate);
  CHECK(r.sigma == 0.0);
  CHECK(r.u == u);
}

TEST_CASE("power_iteration: contract errors") {
  const MatrixXd w = MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(power_iteration(w, VectorXd(VectorXd::Ones(3)), 1), ContractError);
  CHECK_THROWS_AS(power_iteration(w, VectorXd(VectorXd::Unit(2, 0)), 1), ContractError);
  CHECK_THROWS_AS(power_iteration(w, VectorXd(VectorXd::Unit(3, 0)), 0), ContractError);
}

TEST_CASE("power_iteration: estimate never exceeds the oracle") {
  RngStream rng(3, 0);
  for (int i = 0; i < 30; ++i) {
    const MatrixXd w = gaussian_matrix(rng, 9, 6);
    const VectorXd u = random_unit_vector(rng, 9);
    const double s = power_iteration(w, u, 1 + static_cast<int>(rng.below(5))).sigma;
    CHECK(s <= sigma_max_oracle(w) * (1 + 1e-12));
  }
}

TEST_CASE("normalize: layer with sigma 7 becomes 1") {
  RngStream rng(4, 0);
  Mlp p = init_params({5, 5}, rng);
  const VectorXd a = random_unit_vector(rng, 5);
  const VectorXd b = random_unit_vector(rng, 5);
  p.weights[0] = 7.0 * a * b.transpose() + 0.5 * gaussian_matrix(rng, 5, 5) * 0.01;
  auto sn = make_sn_mlp(p, 1.0, rng, 100);
  const Mlp eff = normalize(sn);
  CHECK(std::abs(sigma_max_oracle(eff.weights[0]) - 1.0) < 1e-6);
}

TEST_CASE("normalize: contract for several coefficients") {
  for (double coef : {0.1, 0.2, 0.5, 1.0}) {
    RngStream rng(5, 0);
    auto sn = make_sn_mlp(init_params({8, 16, 16, 3}, rng), coef, rng, 2000);
    const Mlp eff = normalize(sn);
    for (std::size_t l = 0; l + 1 < eff.num_layers(); ++l)
      CHECK(std::abs(sigma_max_oracle(eff.weights[l]) - 1.0) < 1e-6);
    CHECK(std::abs(sigma_max_oracle(eff.weights.back()) - coef) < 1e-6);
    CHECK(std::abs(lipschitz_bound(sn) - coef) < 1e-5);
  }
}

TEST_CASE("normalize: degenerate layer raises") {
  RngStream rng(6, 0);
  Mlp p = init_params({3, 4, 2}, rng);
  p.weights[1].setZero();
  auto sn = make_sn_mlp(p, 1.0, rng);
  CHECK_THROWS_AS(normalize(sn), DegenerateLayerError);
}

TEST_CASE("normalize: u-vectors persist between calls") {
  RngStream rng(7, 0);
  auto sn = make_sn_mlp(init_params({6, 6}, rng), 1.0, rng, 1);
  const VectorXd u0 = sn.state.u[0];
  normalize(sn);
  const VectorXd u1 = sn.state.u[0];
  CHECK((u1 - u0).norm() > 0);
  const auto r = power_iteration(sn.raw.weights[0], u1, 1);
  normalize(sn);
  CHECK((sn.state.u[0] - r.u).norm() < 1e-15);
}

TEST_CASE("warm_start: advances u without touching sigma") {
  RngStream rng(8, 0);
  auto sn = make_sn_mlp(init_params({6, 10, 2}, rng), 1.0, rng, 1);
  warm_start(sn, 200);
  CHECK(sn.state.sigma.empty());
  normalize(sn);
  for (std::size_t l = 0; l < sn.raw.num_layers(); ++l)
    CHECK(sn.state.sigma[l] == doctest::Approx(sigma_max_oracle(sn.raw.weights[l])).epsilon(1e-8));
}

TEST_CASE("lipschitz_bound: unnormalized net equals product of oracle norms") {
  RngStream rng(9, 0);
  const Mlp p = init_params({5, 7, 7, 2}, rng);
  double prod = 1;
  for (const auto& w : p.weights) prod *= sigma_max_oracle(w);
  CHECK(lipschitz_bound(p) == doctest::Approx(prod).epsilon(1e-14));
}

TEST_CASE("chain_to_raw: matches finite differences with sigma held fixed") {
  RngStream rng(10, 0);
  auto sn = make_sn_mlp(init_params({4, 6, 2}, rng), 0.5, rng, 3);
  const auto np = normalize_with_scales(sn);
  const MatrixXd x = gaussian_matrix(rng, 4, 5);
  const MatrixXd og = gaussian_matrix(rng, 2, 5);
  Mlp g = backward_params(np.effective, forward(np.effective, x), og);
  chain_to_raw(g, np.scales);

  const double h = 1e-6;
  for (std::size_t l = 0; l < sn.raw.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < sn.raw.weights[l].size(); i += 3) {
      auto raw = sn;
      auto f = [&](double delta) {
        raw.raw.weights[l].data()[i] = sn.raw.weights[l].data()[i] + delta;
        const Mlp e = effective_params(raw).effective;
        return (og.array() * evaluate(e, x).array()).sum();
      };
      const double fd = (f(h) - f(-h)) / (2 * h);
      CHECK(g.weights[l].data()[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("SpectralState: validation") {
  RngStream rng(11, 0);
  auto sn = make_sn_mlp(init_params({3, 3}, rng), 1.0, rng);
  sn.state.sn_coef = 0;
  CHECK_THROWS_AS(sn.state.validate(sn.raw), ContractError);
  sn.state.sn_coef = 1;
  sn.state.u[0] *= 2;
  CHECK_THROWS_AS(sn.state.validate(sn.raw), ContractError);
}
