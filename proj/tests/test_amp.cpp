#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd.hpp"

#include <snrl/amp.hpp>

using namespace snrl;

namespace {

Discriminator make_disc(Eigen::Index feat, std::uint64_t seed) {
  RngStream rng(seed, 0);
  const std::vector<Eigen::Index> hidden{16, 16};
  return Discriminator::create(feat, hidden, rng);
}

ReferenceDataset random_dataset(Eigen::Index feat, Eigen::Index n, double shift, RngStream& rng) {
  ReferenceDataset d;
  d.from = gaussian_matrix(rng, feat, n).array() + shift;
  d.to = gaussian_matrix(rng, feat, n).array() + shift;
  return d;
}

}  // namespace

TEST_CASE("style_reward_from_score: listed values") {
  CHECK(style_reward_from_score(1.0) == 1.0);
  CHECK(style_reward_from_score(-1.0) == 0.0);
  CHECK(style_reward_from_score(0.0) == 0.75);
  CHECK(style_reward_from_score(3.0) == 0.0);
  CHECK(style_reward_from_score(2.0) == 0.75);
  CHECK(style_reward_from_score(-5.0) == 0.0);
  CHECK(style_reward_from_score(9.0) == 0.0);
}

TEST_CASE("style_reward_from_score: bounded for random scores") {
  RngStream rng(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double d = rng.uniform(-10, 10);
    const double r = style_reward_from_score(d);
    CHECK((r >= 0.0 && r <= 1.0));
    if (d <= -1 || d >= 3) CHECK(r == 0.0);
  }
}

TEST_CASE("disc_loss: closed-form values") {
  RngStream rng(2, 0);
  Discriminator zero = make_disc(3, 3);
  for (auto& w : zero.net.weights) w.setZero();
  for (auto& b : zero.net.biases) b.setZero();
  const auto ref = random_dataset(3, 10, 0.0, rng);
  const auto pol = random_dataset(3, 12, 0.0, rng);
  CHECK(disc_loss(zero, ref, pol).loss == doctest::Approx(1.0).epsilon(1e-15));

  // Linear scorer reading the first coordinate of s.
  Discriminator lin;
  lin.feature_dim = 2;
  lin.net.weights.push_back(MatrixXd::Zero(1, 4));
  lin.net.weights[0](0, 0) = 1.0;
  lin.net.biases.push_back(VectorXd::Zero(1));
  ReferenceDataset r1{MatrixXd::Zero(2, 5), MatrixXd::Zero(2, 5)};
  r1.from.row(0).setOnes();
  ReferenceDataset p1{MatrixXd::Zero(2, 7), MatrixXd::Zero(2, 7)};
  p1.from.row(0).setConstant(-1.0);
  CHECK(disc_loss(lin, r1, p1).loss == 0.0);
}

TEST_CASE("disc_loss: gradient matches finite differences") {
  RngStream rng(4, 0);
  const auto d = make_disc(4, 5);
  const auto ref = random_dataset(4, 9, 0.5, rng);
  const auto pol = random_dataset(4, 11, -0.5, rng);
  const auto g = disc_loss(d, ref, pol);
  auto f = [&](const Mlp& q) {
    Discriminator dq{q, d.feature_dim};
    return disc_loss(dq, ref, pol).loss;
  };
  CHECK(snrl::testing::rel_err(g.grads, snrl::testing::fd_params(d.net, f)) < 1e-5);
}

TEST_CASE("disc_loss: invariant to batch ordering") {
  RngStream rng(6, 0);
  const auto d = make_disc(3, 7);
  const auto ref = random_dataset(3, 8, 0.0, rng);
  const auto pol = random_dataset(3, 8, 1.0, rng);
  ReferenceDataset rev{ref.from.rowwise().reverse(), ref.to.rowwise().reverse()};
  CHECK(disc_loss(d, rev, pol).loss == doctest::Approx(disc_loss(d, ref, pol).loss).epsilon(1e-14));
}

TEST_CASE("amp_update: zero learning rate leaves the discriminator unchanged") {
  RngStream rng(8, 0);
  const auto d = make_disc(3, 9);
  const auto ref = random_dataset(3, 64, 1.0, rng);
  const auto pol = random_dataset(3, 64, -1.0, rng);
  AdamState opt = AdamState::for_params(d.net);
  AmpUpdateConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.minibatch_size = 16;
  const auto out = amp_update(d, ref, pol, opt, cfg, rng);
  CHECK(flatten(out.net) == flatten(d.net));
}

TEST_CASE("amp_update: loss decreases on separable data") {
  RngStream rng(10, 0);
  auto d = make_disc(3, 11);
  const auto ref = random_dataset(3, 256, 2.0, rng);
  const auto pol = random_dataset(3, 256, -2.0, rng);
  AdamState opt = AdamState::for_params(d.net);
  AmpUpdateConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.minibatches = 1;
  cfg.minibatch_size = 256;
  double prev = disc_loss(d, ref, pol).loss;
  for (int i = 0; i < 10; ++i) {
    d = amp_update(d, ref, pol, opt, cfg, rng);
    const double now = disc_loss(d, ref, pol).loss;
    CHECK(now < prev);
    prev = now;
  }
  CHECK(discriminator_scores(d, ref.from, ref.to).mean() >
        discriminator_scores(d, pol.from, pol.to).mean());
}

TEST_CASE("reference dataset: consecutive pairs") {
  EnvConfig cfg;
  const auto traj = generate_reference_gait(cfg, 1, 0.5, 1.5);
  const auto data = make_reference_dataset(traj);
  CHECK(data.size() == traj.steps() - 1);
  CHECK(data.feature_dim() == 12);
  CHECK(data.to.col(3).head(6) == data.from.col(4).head(6));
  CHECK(style_reward(make_disc(12, 12), data.from.col(0), data.to.col(0)) >= 0.0);
}
