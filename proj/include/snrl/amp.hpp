// Adversarial motion prior: least-squares discriminator over state
// transitions and the style reward derived from its score.
#ifndef SNRL_AMP_HPP_
#define SNRL_AMP_HPP_

#include <snrl/env.hpp>
#include <snrl/net.hpp>
#include <snrl/optim.hpp>

namespace snrl {

/// Transition pairs (s, s'), column-stacked.
struct ReferenceDataset {
  MatrixXd from;
  MatrixXd to;

  Eigen::Index size() const { return from.cols(); }
  Eigen::Index feature_dim() const { return from.rows(); }
  void validate() const;
};

/// Consecutive (theta, theta_dot) pairs of a reference trajectory.
ReferenceDataset make_reference_dataset(const ReferenceTrajectory& ref);

struct Discriminator {
  Mlp net;  // input [s; s'], scalar output
  Eigen::Index feature_dim = 0;

  static Discriminator create(Eigen::Index feature_dim, std::span<const Eigen::Index> hidden,
                              RngStream& rng);
};

/// Stacks [from; to] into the discriminator input.
MatrixXd transition_input(const MatrixXd& from, const MatrixXd& to);

double discriminator_score(const Discriminator& d, const VectorXd& s, const VectorXd& s_next);
VectorXd discriminator_scores(const Discriminator& d, const MatrixXd& from, const MatrixXd& to);

/// max(0, 1 - 0.25 (score - 1)^2)
double style_reward_from_score(double score);
double style_reward(const Discriminator& d, const VectorXd& s, const VectorXd& s_next);

struct DiscLoss {
  double loss = 0;
  Mlp grads;
};

/// 0.5 mean (D(ref) - 1)^2 + 0.5 mean (D(policy) + 1)^2 with exact gradients.
DiscLoss disc_loss(const Discriminator& d, const ReferenceDataset& ref_batch,
                   const ReferenceDataset& policy_batch);

struct AmpUpdateConfig {
  double learning_rate = 1e-4;
  int minibatches = 4;
  Eigen::Index minibatch_size = 256;
};

/// Minibatch gradient steps of disc_loss against policy transitions.
Discriminator amp_update(const Discriminator& d, const ReferenceDataset& reference,
                         const ReferenceDataset& rollout, AdamState& optimizer,
                         const AmpUpdateConfig& cfg, RngStream& rng);

/// Random column subset of a dataset.
ReferenceDataset sample_batch(const ReferenceDataset& data, Eigen::Index count, RngStream& rng);

}  // namespace snrl

#endif  // SNRL_AMP_HPP_
