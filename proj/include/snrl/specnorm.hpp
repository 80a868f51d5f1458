// Spectral normalization of MLP weights by warm-started power iteration.
#ifndef SNRL_SPECNORM_HPP_
#define SNRL_SPECNORM_HPP_

#include <snrl/memory_probe.hpp>
#include <snrl/net.hpp>
#include <snrl/numkit.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace snrl {

/// A layer whose estimated spectral norm is too small to divide by.
class DegenerateLayerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDegenerateSigma = 1e-12;

template <typename Scalar>
struct PowerIterationResult {
  Scalar sigma = 0;
  Vector<Scalar> u;
  bool degenerate = false;  // zero matrix: sigma = 0 and u unchanged
};

/// Alternates v <- normalize(W^T u), u <- normalize(W v) for `steps` rounds
/// and returns sigma = u^T W v with the updated left vector.
template <typename Derived>
PowerIterationResult<typename Derived::Scalar> power_iteration(
    const Eigen::MatrixBase<Derived>& w, const Vector<typename Derived::Scalar>& u, int steps) {
  using Scalar = typename Derived::Scalar;
  require(steps >= 1, "power_iteration: steps must be >= 1");
  require(u.size() == w.rows(), "power_iteration: u has wrong dimension");
  require(std::abs(u.norm() - Scalar(1)) < Scalar(1e-6), "power_iteration: u is not unit norm");

  PowerIterationResult<Scalar> r;
  r.u = u;
  Vector<Scalar> v;
  for (int k = 0; k < steps; ++k) {
    v.noalias() = w.transpose() * r.u;
    const Scalar vn = v.norm();
    if (vn == Scalar(0)) {
      r.u = u;
      r.degenerate = true;
      return r;
    }
    v /= vn;
    Vector<Scalar> wu = w * v;
    const Scalar un = wu.norm();
    if (un == Scalar(0)) {
      r.u = u;
      r.degenerate = true;
      return r;
    }
    r.u = wu / un;
  }
  r.sigma = r.u.dot(w * v);
  return r;
}

template <typename Scalar>
struct SpectralState {
  std::vector<Vector<Scalar>> u;    // one left singular estimate per layer
  std::vector<Scalar> sigma;        // estimates from the latest normalize()
  int power_iterations = 1;
  Scalar sn_coef = Scalar(1);       // multiplies the final normalized layer
  MemoryTag tag;

  void validate(const MlpParams<Scalar>& raw) const {
    require(sn_coef > Scalar(0), "SpectralState: sn_coef must be positive");
    require(power_iterations >= 1, "SpectralState: power_iterations must be >= 1");
    require(u.size() == raw.num_layers(), "SpectralState: one u-vector per layer required");
    for (std::size_t l = 0; l < u.size(); ++l) {
      require(u[l].size() == raw.weights[l].rows(), "SpectralState: u-vector dimension mismatch");
      require(std::abs(u[l].norm() - Scalar(1)) < Scalar(1e-9),
              "SpectralState: u-vector not unit norm");
    }
  }
};

template <typename Scalar>
struct SnMlp {
  MlpParams<Scalar> raw;
  SpectralState<Scalar> state;
};

using SnNet = SnMlp<double>;

template <typename Scalar>
SnMlp<Scalar> make_sn_mlp(MlpParams<Scalar> raw, Scalar sn_coef, RngStream& rng,
                          int power_iterations = 1) {
  raw.validate();
  SnMlp<Scalar> sn;
  for (const auto& w : raw.weights) sn.state.u.push_back(random_unit_vector<Scalar>(rng, w.rows()));
  sn.raw = std::move(raw);
  sn.state.sn_coef = sn_coef;
  sn.state.power_iterations = power_iterations;
  std::int64_t elems = 0;
  for (const auto& u : sn.state.u) elems += u.size();
  sn.state.tag = MemoryTag(MemoryKind::kBuffer, elems);
  sn.state.validate(sn.raw);
  return sn;
}

/// Advances every u-vector by `steps` power iterations without touching the
/// stored sigma estimates. Zero layers are left alone.
template <typename Scalar>
void warm_start(SnMlp<Scalar>& sn, int steps) {
  require(steps >= 0, "warm_start: steps must be non-negative");
  if (steps == 0) return;
  for (std::size_t l = 0; l < sn.raw.num_layers(); ++l) {
    auto r = power_iteration(sn.raw.weights[l], sn.state.u[l], steps);
    if (!r.degenerate) sn.state.u[l] = std::move(r.u);
  }
}

/// Effective parameters plus the per-layer factor each raw weight was
/// multiplied by (coef / sigma_hat). Gradients with respect to the effective
/// weights map to raw weights through the same factor, sigma_hat held fixed.
template <typename Scalar>
struct NormalizedParams {
  MlpParams<Scalar> effective;
  std::vector<Scalar> scales;
  MemoryTag tag;
};

namespace detail {

template <typename Scalar>
NormalizedParams<Scalar> build_effective(const SnMlp<Scalar>& sn) {
  NormalizedParams<Scalar> out;
  out.effective = sn.raw;
  const std::size_t n = sn.raw.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    const Scalar coef = (l + 1 == n) ? sn.state.sn_coef : Scalar(1);
    const Scalar scale = coef / sn.state.sigma[l];
    out.effective.weights[l] *= scale;
    out.scales.push_back(scale);
  }
  std::int64_t elems = 0;
  for (const auto& w : out.effective.weights) elems += w.size();
  out.tag = MemoryTag(MemoryKind::kBuffer, elems);
  return out;
}

}  // namespace detail

/// Runs the configured power-iteration steps on every layer (persisting the
/// u-vectors) and returns W_l / sigma_hat(W_l), the last layer times sn_coef.
template <typename Scalar>
NormalizedParams<Scalar> normalize_with_scales(SnMlp<Scalar>& sn) {
  sn.state.validate(sn.raw);
  const std::size_t n = sn.raw.num_layers();
  std::vector<Scalar> sigma(n);
  std::vector<Vector<Scalar>> u(n);
  for (std::size_t l = 0; l < n; ++l) {
    auto r = power_iteration(sn.raw.weights[l], sn.state.u[l], sn.state.power_iterations);
    if (r.degenerate || r.sigma < Scalar(kDegenerateSigma))
      throw DegenerateLayerError("normalize: layer " + std::to_string(l) +
                                 " has spectral norm estimate below 1e-12");
    sigma[l] = r.sigma;
    u[l] = std::move(r.u);
  }
  sn.state.sigma = std::move(sigma);
  sn.state.u = std::move(u);
  return detail::build_effective(sn);
}

template <typename Scalar>
MlpParams<Scalar> normalize(SnMlp<Scalar>& sn) {
  return normalize_with_scales(sn).effective;
}

/// Effective parameters from the latest sigma estimates, without iterating.
template <typename Scalar>
NormalizedParams<Scalar> effective_params(const SnMlp<Scalar>& sn) {
  require(sn.state.sigma.size() == sn.raw.num_layers(),
          "effective_params: normalize() has not been run");
  return detail::build_effective(sn);
}

/// Maps gradients taken at the effective weights back to raw weights.
template <typename Scalar>
void chain_to_raw(MlpParams<Scalar>& grads, const std::vector<Scalar>& scales) {
  require(grads.num_layers() == scales.size(), "chain_to_raw: layer count mismatch");
  for (std::size_t l = 0; l < scales.size(); ++l) grads.weights[l] *= scales[l];
}

/// Product of exact per-layer spectral norms (Jacobi oracle).
template <typename Scalar>
Scalar lipschitz_bound(const MlpParams<Scalar>& p) {
  Scalar bound = 1;
  for (const auto& w : p.weights) bound *= sigma_max_oracle(w);
  return bound;
}

template <typename Scalar>
Scalar lipschitz_bound(const SnMlp<Scalar>& sn) {
  return lipschitz_bound(effective_params(sn).effective);
}

}  // namespace snrl

#endif  // SNRL_SPECNORM_HPP_
