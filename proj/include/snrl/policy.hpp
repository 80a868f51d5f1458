// Diagonal Gaussian torque policy with a fixed, shared standard deviation.
#ifndef SNRL_POLICY_HPP_
#define SNRL_POLICY_HPP_

#include <snrl/net.hpp>
#include <snrl/numkit.hpp>
#include <snrl/specnorm.hpp>

#include <optional>
#include <stdexcept>

namespace snrl {

class NotApplicableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// pi(a|s) = N(mu(s), sigma^2 I). In spectral mode mu is evaluated with the
/// normalized weights cached by the last refresh().
class GaussianPolicy {
 public:
  static GaussianPolicy plain(Mlp mean_net, double sigma);
  /// With estimate = false the stored sigma estimates are reused as-is
  /// (restoring a checkpoint) instead of running a power-iteration step.
  static GaussianPolicy spectral(SnNet mean_net, double sigma, bool estimate = true);

  bool is_spectral() const { return sn_.has_value(); }
  double sigma() const { return sigma_; }
  Eigen::Index action_dim() const { return effective_.output_dim(); }
  Eigen::Index state_dim() const { return effective_.input_dim(); }

  /// Parameters used for every evaluation (normalized in spectral mode).
  const Mlp& effective() const { return effective_; }
  /// Trainable parameters (raw weights in spectral mode).
  const Mlp& trainable() const { return is_spectral() ? sn_->raw : effective_; }
  Mlp& trainable_mut() { return is_spectral() ? sn_->raw : effective_; }

  /// Per-layer factors mapping effective-weight gradients to raw weights.
  const std::vector<double>& scales() const { return scales_; }

  const SnNet& sn() const;
  SnNet& sn_mut();
  double sn_coef() const;

  /// Spectral mode: one normalize() (power iteration, persisted u-vectors)
  /// and refresh of the effective weights. Plain mode: no-op.
  void refresh();
  /// Spectral mode: rebuild effective weights from stored sigma estimates.
  void rebuild_effective();

 private:
  GaussianPolicy() = default;

  std::optional<SnNet> sn_;
  Mlp effective_;
  std::vector<double> scales_;
  MemoryTag effective_tag_;
  double sigma_ = 0.2;
};

struct ActionSample {
  VectorXd action;
  double log_prob = 0;
  VectorXd mean;
};

double gaussian_log_density(const VectorXd& mean, const VectorXd& a, double sigma);

ActionSample act(const GaussianPolicy& p, const VectorXd& s, RngStream& rng);
double log_prob(const GaussianPolicy& p, const VectorXd& s, const VectorXd& a);
/// grad_s log pi(a|s) = J_mu(s)^T (a - mu(s)) / sigma^2.
VectorXd grad_logprob_state(const GaussianPolicy& p, const VectorXd& s, const VectorXd& a);
/// 2 * sn_coef / sigma; spectral mode only.
double grad_norm_bound(const GaussianPolicy& p);

// Batched forms, one sample per column.
MatrixXd policy_mean(const GaussianPolicy& p, const MatrixXd& states);
VectorXd log_prob_batch(const GaussianPolicy& p, const MatrixXd& states, const MatrixXd& actions);
MatrixXd grad_logprob_state_batch(const GaussianPolicy& p, const MatrixXd& states,
                                  const MatrixXd& actions);

}  // namespace snrl

#endif  // SNRL_POLICY_HPP_
