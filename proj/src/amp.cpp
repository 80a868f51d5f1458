#include <snrl/amp.hpp>

#include <algorithm>

namespace snrl {

void ReferenceDataset::validate() const {
  require(from.cols() > 0, "ReferenceDataset: empty");
  require(from.rows() == to.rows() && from.cols() == to.cols(),
          "ReferenceDataset: from/to shape mismatch");
}

ReferenceDataset make_reference_dataset(const ReferenceTrajectory& ref) {
  require(ref.steps() >= 2, "make_reference_dataset: need at least two samples");
  const Eigen::Index n = ref.joints();
  const Eigen::Index count = ref.steps() - 1;
  ReferenceDataset data;
  data.from.resize(2 * n, count);
  data.to.resize(2 * n, count);
  for (Eigen::Index k = 0; k < count; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      data.from(i, k) = wrap_angle(ref.theta(i, k));
      data.to(i, k) = wrap_angle(ref.theta(i, k + 1));
    }
    data.from.col(k).tail(n) = ref.theta_dot.col(k);
    data.to.col(k).tail(n) = ref.theta_dot.col(k + 1);
  }
  return data;
}

Discriminator Discriminator::create(Eigen::Index feature_dim, std::span<const Eigen::Index> hidden,
                                    RngStream& rng) {
  std::vector<Eigen::Index> dims{2 * feature_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return {init_params<double>(dims, rng), feature_dim};
}

MatrixXd transition_input(const MatrixXd& from, const MatrixXd& to) {
  require(from.rows() == to.rows() && from.cols() == to.cols(),
          "transition_input: from/to shape mismatch");
  MatrixXd x(2 * from.rows(), from.cols());
  x.topRows(from.rows()) = from;
  x.bottomRows(to.rows()) = to;
  return x;
}

double discriminator_score(const Discriminator& d, const VectorXd& s, const VectorXd& s_next) {
  require(s.size() == d.feature_dim && s_next.size() == d.feature_dim,
          "discriminator_score: feature dimension mismatch");
  return evaluate(d.net, transition_input(s, s_next))(0, 0);
}

VectorXd discriminator_scores(const Discriminator& d, const MatrixXd& from, const MatrixXd& to) {
  require(from.rows() == d.feature_dim, "discriminator_scores: feature dimension mismatch");
  return evaluate(d.net, transition_input(from, to)).row(0).transpose();
}

double style_reward_from_score(double score) {
  const double e = score - 1.0;
  return std::max(0.0, 1.0 - 0.25 * e * e);
}

double style_reward(const Discriminator& d, const VectorXd& s, const VectorXd& s_next) {
  return style_reward_from_score(discriminator_score(d, s, s_next));
}

DiscLoss disc_loss(const Discriminator& d, const ReferenceDataset& ref_batch,
                   const ReferenceDataset& policy_batch) {
  ref_batch.validate();
  policy_batch.validate();
  require(ref_batch.feature_dim() == d.feature_dim && policy_batch.feature_dim() == d.feature_dim,
          "disc_loss: feature dimension mismatch");
  const auto nr = static_cast<double>(ref_batch.size());
  const auto np = static_cast<double>(policy_batch.size());

  DiscLoss out;
  const auto ref_trace = forward(d.net, transition_input(ref_batch.from, ref_batch.to));
  const MatrixXd ref_err = ref_trace.output.array() - 1.0;
  out.loss += 0.5 * ref_err.squaredNorm() / nr;
  out.grads = backward_params(d.net, ref_trace, ref_err / nr);

  const auto pol_trace = forward(d.net, transition_input(policy_batch.from, policy_batch.to));
  const MatrixXd pol_err = pol_trace.output.array() + 1.0;
  out.loss += 0.5 * pol_err.squaredNorm() / np;
  out.grads += backward_params(d.net, pol_trace, pol_err / np);
  return out;
}

ReferenceDataset sample_batch(const ReferenceDataset& data, Eigen::Index count, RngStream& rng) {
  data.validate();
  ReferenceDataset out;
  out.from.resize(data.feature_dim(), count);
  out.to.resize(data.feature_dim(), count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.size())));
    out.from.col(k) = data.from.col(j);
    out.to.col(k) = data.to.col(j);
  }
  return out;
}

Discriminator amp_update(const Discriminator& d, const ReferenceDataset& reference,
                         const ReferenceDataset& rollout, AdamState& optimizer,
                         const AmpUpdateConfig& cfg, RngStream& rng) {
  rollout.validate();
  reference.validate();
  Discriminator next = d;
  if (optimizer.first_moment.num_layers() == 0) optimizer = AdamState::for_params(next.net);
  const Eigen::Index mb = std::min(cfg.minibatch_size, rollout.size());
  for (int k = 0; k < cfg.minibatches; ++k) {
    const auto ref_batch = sample_batch(reference, mb, rng);
    const auto pol_batch = sample_batch(rollout, mb, rng);
    const auto loss = disc_loss(next, ref_batch, pol_batch);
    if (!std::isfinite(loss.loss)) continue;
    adam_step(next.net, loss.grads, optimizer, cfg.learning_rate);
  }
  return next;
}

}  // namespace snrl
