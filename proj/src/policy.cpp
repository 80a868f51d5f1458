#include <snrl/policy.hpp>

#include <cmath>
#include <numbers>

namespace snrl {

GaussianPolicy GaussianPolicy::plain(Mlp mean_net, double sigma) {
  require(sigma > 0, "GaussianPolicy: sigma must be positive");
  mean_net.validate();
  GaussianPolicy p;
  p.effective_ = std::move(mean_net);
  p.scales_.assign(p.effective_.num_layers(), 1.0);
  p.sigma_ = sigma;
  return p;
}

GaussianPolicy GaussianPolicy::spectral(SnNet mean_net, double sigma, bool estimate) {
  require(sigma > 0, "GaussianPolicy: sigma must be positive");
  GaussianPolicy p;
  p.sn_ = std::move(mean_net);
  p.sigma_ = sigma;
  if (estimate) {
    p.refresh();
  } else {
    p.rebuild_effective();
  }
  return p;
}

const SnNet& GaussianPolicy::sn() const {
  if (!sn_) throw NotApplicableError("policy mean network is not spectrally normalized");
  return *sn_;
}

SnNet& GaussianPolicy::sn_mut() {
  if (!sn_) throw NotApplicableError("policy mean network is not spectrally normalized");
  return *sn_;
}

double GaussianPolicy::sn_coef() const { return sn().state.sn_coef; }

void GaussianPolicy::refresh() {
  if (!sn_) return;
  auto np = normalize_with_scales(*sn_);
  effective_ = std::move(np.effective);
  scales_ = std::move(np.scales);
  effective_tag_ = std::move(np.tag);
}

void GaussianPolicy::rebuild_effective() {
  if (!sn_) return;
  auto np = effective_params(*sn_);
  effective_ = std::move(np.effective);
  scales_ = std::move(np.scales);
  effective_tag_ = std::move(np.tag);
}

double gaussian_log_density(const VectorXd& mean, const VectorXd& a, double sigma) {
  require(mean.size() == a.size(), "log density: dimension mismatch");
  const double d = static_cast<double>(a.size());
  const double log_norm = std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  return -(a - mean).squaredNorm() / (2.0 * sigma * sigma) - d * log_norm;
}

ActionSample act(const GaussianPolicy& p, const VectorXd& s, RngStream& rng) {
  ActionSample out;
  out.mean = evaluate(p.effective(), s);
  out.action = out.mean + p.sigma() * gaussian_sample<double>(rng, out.mean.size(), 0.0, 1.0);
  out.log_prob = gaussian_log_density(out.mean, out.action, p.sigma());
  return out;
}

double log_prob(const GaussianPolicy& p, const VectorXd& s, const VectorXd& a) {
  require(a.size() == p.action_dim(), "log_prob: action dimension mismatch");
  const VectorXd mean = evaluate(p.effective(), s);
  return gaussian_log_density(mean, a, p.sigma());
}

VectorXd grad_logprob_state(const GaussianPolicy& p, const VectorXd& s, const VectorXd& a) {
  return grad_logprob_state_batch(p, s, a);
}

double grad_norm_bound(const GaussianPolicy& p) {
  if (!p.is_spectral())
    throw NotApplicableError("grad_norm_bound: requires a spectrally normalized mean network");
  return 2.0 * p.sn_coef() / p.sigma();
}

MatrixXd policy_mean(const GaussianPolicy& p, const MatrixXd& states) {
  return evaluate(p.effective(), states);
}

VectorXd log_prob_batch(const GaussianPolicy& p, const MatrixXd& states, const MatrixXd& actions) {
  require(actions.rows() == p.action_dim() && actions.cols() == states.cols(),
          "log_prob_batch: action shape mismatch");
  const MatrixXd mean = evaluate(p.effective(), states);
  const double sigma = p.sigma();
  const double log_norm =
      static_cast<double>(p.action_dim()) * std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  VectorXd out = -(actions - mean).colwise().squaredNorm().transpose() / (2.0 * sigma * sigma);
  out.array() -= log_norm;
  return out;
}

MatrixXd grad_logprob_state_batch(const GaussianPolicy& p, const MatrixXd& states,
                                  const MatrixXd& actions) {
  require(actions.rows() == p.action_dim() && actions.cols() == states.cols(),
          "grad_logprob_state: action shape mismatch");
  const auto trace = forward(p.effective(), states);
  const MatrixXd residual = (actions - trace.output) / (p.sigma() * p.sigma());
  return backward_input(p.effective(), trace, residual);
}

}  // namespace snrl
