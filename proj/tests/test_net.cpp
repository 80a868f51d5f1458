#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd.hpp"

#include <snrl/net.hpp>

using namespace snrl;
using snrl::testing::fd_params;
using snrl::testing::rel_err;

namespace {

Mlp random_net(std::initializer_list<Eigen::Index> dims, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Mlp p = init_params(dims, rng);
  for (auto& b : p.biases) b = gaussian_sample(rng, b.size(), 0.0, 0.1);
  return p;
}

}  // namespace

TEST_CASE("init_params: shapes, zero biases, determinism") {
  RngStream r(1, 0);
  const Mlp one = init_params({1, 1}, r);
  CHECK(one.weights.size() == 1);
  CHECK(one.weights[0].rows() == 1);
  CHECK(one.biases[0][0] == 0.0);

  RngStream a(2, 0), b(2, 0);
  const Mlp pa = init_params({4, 8, 3}, a);
  const Mlp pb = init_params({4, 8, 3}, b);
  CHECK(flatten(pa) == flatten(pb));
  CHECK(pa.dims() == std::vector<Eigen::Index>{4, 8, 3});

  RngStream big(3, 0);
  const Mlp w = init_params({400, 300}, big);
  const double var = w.weights[0].squaredNorm() / static_cast<double>(w.weights[0].size());
  CHECK(var == doctest::Approx(2.0 / 400).epsilon(0.02));

  RngStream e(4, 0);
  CHECK_THROWS_AS(init_params({3}, e), ContractError);
  CHECK_THROWS_AS(init_params({3, 0}, e), ContractError);
}

TEST_CASE("forward: zero weights and single linear layer") {
  Mlp p = random_net({3, 5, 2}, 7);
  for (auto& w : p.weights) w.setZero();
  const VectorXd x = VectorXd::Ones(3);
  const auto t = forward(p, x);
  CHECK((t.output.col(0) - p.biases.back()).norm() == 0.0);

  const Mlp lin = random_net({4, 3}, 8);
  RngStream rng(9, 0);
  const VectorXd s = gaussian_sample(rng, 4, 0.0, 1.0);
  const VectorXd expect = lin.weights[0] * s + lin.biases[0];
  CHECK((forward(lin, s).output.col(0) - expect).norm() < 1e-14);
  CHECK((evaluate(lin, s).col(0) - expect).norm() < 1e-14);

  CHECK_THROWS_AS(forward(lin, VectorXd::Ones(5)), ContractError);
}

TEST_CASE("forward: batch columns are independent samples") {
  const Mlp p = random_net({5, 16, 16, 3}, 10);
  RngStream rng(11, 0);
  const MatrixXd x = gaussian_matrix(rng, 5, 7);
  const auto t = forward(p, x);
  for (Eigen::Index b = 0; b < 7; ++b) {
    const VectorXd xb = x.col(b);
    CHECK((forward(p, xb).output.col(0) - t.output.col(b)).norm() < 1e-13);
  }
}

TEST_CASE("backward_params: trivial cases") {
  const Mlp p = random_net({3, 4, 2}, 12);
  const VectorXd x = VectorXd::Ones(3);
  const auto t = forward(p, x);
  const Mlp g = backward_params(p, t, MatrixXd::Zero(2, 1));
  CHECK(flatten(g).norm() == 0.0);

  Mlp scalar;
  scalar.weights.push_back(MatrixXd::Constant(1, 1, 2.5));
  scalar.biases.push_back(VectorXd::Zero(1));
  const VectorXd xs = VectorXd::Constant(1, -1.75);
  const Mlp gs = backward_params(scalar, forward(scalar, xs), MatrixXd::Ones(1, 1));
  CHECK(gs.weights[0](0, 0) == -1.75);
}

TEST_CASE("backward_params and backward_input: finite differences") {
  const Mlp p = random_net({22, 64, 64, 6}, 13);
  RngStream rng(14, 0);
  const MatrixXd x = gaussian_matrix(rng, 22, 3);
  const MatrixXd og = gaussian_matrix(rng, 6, 3);

  auto objective = [&](const Mlp& q) { return (og.array() * evaluate(q, x).array()).sum(); };
  const auto t = forward(p, x);
  CHECK(rel_err(backward_params(p, t, og), fd_params(p, objective)) < 1e-4);

  const MatrixXd gi = backward_input(p, t, og);
  for (Eigen::Index b = 0; b < 3; ++b) {
    const VectorXd ob = og.col(b);
    auto fx = [&](const VectorXd& xv) { return ob.dot(evaluate(p, xv).col(0)); };
    CHECK(rel_err(VectorXd(gi.col(b)), snrl::testing::fd_vector(x.col(b), fx)) < 1e-4);
  }
}

TEST_CASE("backward_input: linear layer and zero seed") {
  const Mlp lin = random_net({4, 3}, 15);
  const VectorXd x = VectorXd::Ones(4);
  const VectorXd og = (VectorXd(3) << 1, -2, 0.5).finished();
  const MatrixXd g = backward_input(lin, forward(lin, x), og);
  CHECK((g.col(0) - lin.weights[0].transpose() * og).norm() < 1e-14);
  CHECK(backward_input(lin, forward(lin, x), MatrixXd::Zero(3, 1)).norm() == 0.0);
}

TEST_CASE("input_jacobian_norm: linear map and zero weights") {
  const Mlp lin = random_net({5, 4}, 16);
  const VectorXd s = VectorXd::Ones(5);
  CHECK(input_jacobian_norm(lin, s) == doctest::Approx(lin.weights[0].norm()).epsilon(1e-13));
  Mlp z = random_net({5, 8, 4}, 17);
  for (auto& w : z.weights) w.setZero();
  CHECK(input_jacobian_norm(z, s) == 0.0);
}

TEST_CASE("double backprop: parameter and seed adjoints match finite differences") {
  const Mlp p = random_net({6, 12, 12, 3}, 18);
  RngStream rng(19, 0);
  const MatrixXd x = gaussian_matrix(rng, 6, 4);
  const MatrixXd og = gaussian_matrix(rng, 3, 4);
  const MatrixXd adj = gaussian_matrix(rng, 6, 4);

  const auto t = forward(p, x);
  const auto igt = backward_input_traced(p, t, og);
  CHECK((igt.input_grad - backward_input(p, t, og)).norm() < 1e-13);
  const auto a = backward_through_input_grad(p, t, igt, adj);

  // Weights only: out_grad is held fixed, so bias sensitivity is zero away from kinks.
  auto f = [&](const Mlp& q) {
    return (adj.array() * backward_input(q, forward(q, x), og).array()).sum();
  };
  CHECK(rel_err(a.params, fd_params(p, f)) < 1e-4);

  const VectorXd og_flat = Eigen::Map<const VectorXd>(og.data(), og.size());
  auto fo = [&](const VectorXd& v) {
    const MatrixXd o = Eigen::Map<const MatrixXd>(v.data(), og.rows(), og.cols());
    return (adj.array() * backward_input(p, t, o).array()).sum();
  };
  const VectorXd a_flat = Eigen::Map<const VectorXd>(a.out_grad.data(), a.out_grad.size());
  CHECK(rel_err(a_flat, snrl::testing::fd_vector(og_flat, fo)) < 1e-6);
}

TEST_CASE("MlpParams: validation and flatten round trip") {
  Mlp p = random_net({3, 4, 2}, 20);
  const VectorXd f = flatten(p);
  Mlp q = p.zeros_like();
  unflatten_into(q, f);
  CHECK(flatten(q) == f);
  p.biases[0].resize(5);
  CHECK_THROWS_AS(p.validate(), ContractError);
}
