// ReLU multilayer perceptron with a linear head and trace-replay reverse-mode
// differentiation, with respect to both the parameters and the input.
//
// Batches are column-stacked: an input batch is d0 x B, one sample per column.
#ifndef SNRL_NET_HPP_
#define SNRL_NET_HPP_

#include <snrl/memory_probe.hpp>
#include <snrl/numkit.hpp>

#include <span>
#include <string>
#include <vector>

namespace snrl {

template <typename Scalar>
struct MlpParams {
  std::vector<Matrix<Scalar>> weights;  // weights[l] is d_{l+1} x d_l
  std::vector<Vector<Scalar>> biases;

  std::size_t num_layers() const { return weights.size(); }
  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }

  std::vector<Eigen::Index> dims() const {
    std::vector<Eigen::Index> d;
    if (weights.empty()) return d;
    d.push_back(weights.front().cols());
    for (const auto& w : weights) d.push_back(w.rows());
    return d;
  }

  Eigen::Index element_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  MlpParams zeros_like() const {
    MlpParams z;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      z.weights.push_back(Matrix<Scalar>::Zero(weights[l].rows(), weights[l].cols()));
      z.biases.push_back(Vector<Scalar>::Zero(biases[l].size()));
    }
    return z;
  }

  MlpParams& operator+=(const MlpParams& other) {
    require(same_shape(other), "MlpParams: shape mismatch in +=");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += other.weights[l];
      biases[l] += other.biases[l];
    }
    return *this;
  }

  MlpParams& operator*=(Scalar c) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= c;
      biases[l] *= c;
    }
    return *this;
  }

  bool same_shape(const MlpParams& other) const {
    if (other.weights.size() != weights.size() || other.biases.size() != biases.size())
      return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != other.weights[l].rows() ||
          weights[l].cols() != other.weights[l].cols() ||
          biases[l].size() != other.biases[l].size())
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  /// Throws ContractError unless layers chain and every entry is finite.
  void validate() const {
    require(!weights.empty(), "MlpParams: no layers");
    require(weights.size() == biases.size(), "MlpParams: weight/bias count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      require(weights[l].rows() == biases[l].size(),
              "MlpParams: bias length mismatch at layer " + std::to_string(l));
      if (l > 0)
        require(weights[l].cols() == weights[l - 1].rows(),
                "MlpParams: incompatible dims at layer " + std::to_string(l));
    }
    require(all_finite(), "MlpParams: non-finite entry");
  }
};

using Mlp = MlpParams<double>;

/// Flattened coefficient view, weights then bias per layer, row-major.
template <typename Scalar>
Vector<Scalar> flatten(const MlpParams<Scalar>& p) {
  Vector<Scalar> out(p.element_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) out[k++] = p.weights[l].data()[i];
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) out[k++] = p.biases[l][i];
  }
  return out;
}

template <typename Scalar>
void unflatten_into(MlpParams<Scalar>& p, const Vector<Scalar>& flat) {
  require(flat.size() == p.element_count(), "unflatten_into: length mismatch");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) p.weights[l].data()[i] = flat[k++];
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l][i] = flat[k++];
  }
}

/// He-style fan-in initialization, zero biases.
template <typename Scalar = double>
MlpParams<Scalar> init_params(std::span<const Eigen::Index> dims, RngStream& rng) {
  require(dims.size() >= 2, "init_params: need at least input and output dims");
  for (auto d : dims) require(d > 0, "init_params: dims must be positive");
  MlpParams<Scalar> p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Scalar std = std::sqrt(Scalar(2) / static_cast<Scalar>(dims[l]));
    p.weights.push_back(gaussian_matrix<Scalar>(rng, dims[l + 1], dims[l], std));
    p.biases.push_back(Vector<Scalar>::Zero(dims[l + 1]));
  }
  return p;
}

template <typename Scalar = double>
MlpParams<Scalar> init_params(std::initializer_list<Eigen::Index> dims, RngStream& rng) {
  return init_params<Scalar>(std::span<const Eigen::Index>(dims.begin(), dims.size()), rng);
}

template <typename Scalar>
struct ForwardTrace {
  Matrix<Scalar> input;                           // d0 x B
  std::vector<Matrix<Scalar>> pre_activations;    // hidden layers only
  std::vector<Matrix<Scalar>> activations;        // relu(pre_activations[l])
  Matrix<Scalar> output;                          // linear head, dout x B
  MemoryTag tag;

  Eigen::Index batch() const { return input.cols(); }

  /// Input to layer l (the input itself for l == 0).
  const Matrix<Scalar>& layer_input(std::size_t l) const {
    return l == 0 ? input : activations[l - 1];
  }

  std::int64_t element_count() const {
    std::int64_t n = input.size() + output.size();
    for (const auto& z : pre_activations) n += z.size();
    for (const auto& a : activations) n += a.size();
    return n;
  }
};

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  require(!p.weights.empty(), "forward: empty network");
  require(x.rows() == p.input_dim(), "forward: input has " + std::to_string(x.rows()) +
                                         " rows, network expects " +
                                         std::to_string(p.input_dim()));
  ForwardTrace<Scalar> t;
  t.input = x;
  const std::size_t last = p.num_layers() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    Matrix<Scalar> z = p.weights[l] * t.layer_input(l);
    z.colwise() += p.biases[l];
    t.activations.push_back(relu(z));
    t.pre_activations.push_back(std::move(z));
  }
  t.output = p.weights[last] * t.layer_input(last);
  t.output.colwise() += p.biases[last];
  t.tag = MemoryTag(MemoryKind::kTrace, t.element_count());
  return t;
}

/// Evaluate without keeping a trace.
template <typename Scalar, typename Derived>
Matrix<Scalar> evaluate(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  require(x.rows() == p.input_dim(), "evaluate: input dimension mismatch");
  Matrix<Scalar> h = x;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Matrix<Scalar> z = p.weights[l] * h;
    z.colwise() += p.biases[l];
    h = (l + 1 < p.num_layers()) ? Matrix<Scalar>(relu(z)) : std::move(z);
  }
  return h;
}

namespace detail {

template <typename Scalar>
void check_backward_shapes(const MlpParams<Scalar>& p, const ForwardTrace<Scalar>& t,
                           const Matrix<Scalar>& out_grad) {
  require(t.pre_activations.size() + 1 == p.num_layers(), "backward: trace/net depth mismatch");
  require(t.input.rows() == p.input_dim(), "backward: trace input dimension mismatch");
  require(out_grad.rows() == p.output_dim() && out_grad.cols() == t.batch(),
          "backward: out_grad shape mismatch");
}

}  // namespace detail

/// Gradients of sum_b <out_grad[:, b], f(x_b)> with respect to every weight
/// and bias, summed over the batch.
template <typename Scalar, typename Derived>
MlpParams<Scalar> backward_params(const MlpParams<Scalar>& p, const ForwardTrace<Scalar>& t,
                                  const Eigen::MatrixBase<Derived>& out_grad) {
  Matrix<Scalar> delta = out_grad;
  detail::check_backward_shapes(p, t, delta);
  MlpParams<Scalar> g = p.zeros_like();
  for (std::size_t l = p.num_layers(); l-- > 0;) {
    g.weights[l].noalias() = delta * t.layer_input(l).transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = p.weights[l].transpose() * delta;
      delta = (t.pre_activations[l - 1].array() > Scalar(0)).select(back, Scalar(0));
    }
  }
  return g;
}

/// Input gradient of sum_b <out_grad[:, b], f(x_b)>, one column per sample.
template <typename Scalar, typename Derived>
Matrix<Scalar> backward_input(const MlpParams<Scalar>& p, const ForwardTrace<Scalar>& t,
                              const Eigen::MatrixBase<Derived>& out_grad) {
  Matrix<Scalar> delta = out_grad;
  detail::check_backward_shapes(p, t, delta);
  for (std::size_t l = p.num_layers(); l-- > 1;) {
    Matrix<Scalar> back = p.weights[l].transpose() * delta;
    delta = (t.pre_activations[l - 1].array() > Scalar(0)).select(back, Scalar(0));
  }
  return p.weights[0].transpose() * delta;
}

/// Frobenius norm of the input Jacobian at s, one backward pass per output.
template <typename Scalar>
Scalar input_jacobian_norm(const MlpParams<Scalar>& p, const Vector<Scalar>& s) {
  const Eigen::Index dout = p.output_dim();
  Matrix<Scalar> batch = s.replicate(1, dout);
  const auto t = forward(p, batch);
  const Matrix<Scalar> jt = backward_input(p, t, Matrix<Scalar>::Identity(dout, dout));
  return jt.norm();
}

// ---------------------------------------------------------------------------
// Differentiating through backward_input (double backprop).

/// backward_input with its intermediates retained so the input gradient can
/// itself be differentiated with respect to the parameters.
template <typename Scalar>
struct InputGradTrace {
  std::vector<Matrix<Scalar>> deltas;   // deltas[l]: masked adjoint at layer l output
  std::vector<Matrix<Scalar>> carried;  // carried[l]: W_l^T deltas[l] before masking, l >= 1
  Matrix<Scalar> input_grad;
  MemoryTag tag;
};

template <typename Scalar, typename Derived>
InputGradTrace<Scalar> backward_input_traced(const MlpParams<Scalar>& p,
                                             const ForwardTrace<Scalar>& t,
                                             const Eigen::MatrixBase<Derived>& out_grad) {
  InputGradTrace<Scalar> r;
  const std::size_t n = p.num_layers();
  r.deltas.resize(n);
  r.carried.resize(n);
  r.deltas[n - 1] = out_grad;
  detail::check_backward_shapes(p, t, r.deltas[n - 1]);
  for (std::size_t l = n; l-- > 1;) {
    r.carried[l] = p.weights[l].transpose() * r.deltas[l];
    r.deltas[l - 1] =
        (t.pre_activations[l - 1].array() > Scalar(0)).select(r.carried[l], Scalar(0));
  }
  r.input_grad = p.weights[0].transpose() * r.deltas[0];
  std::int64_t elems = r.input_grad.size();
  for (const auto& d : r.deltas) elems += d.size();
  for (const auto& c : r.carried) elems += c.size();
  r.tag = MemoryTag(MemoryKind::kTrace, elems);
  return r;
}

/// Tangent sweep of the second-order pass.
template <typename Scalar>
struct InputGradAdjoint {
  MlpParams<Scalar> params;     // from the weights appearing inside backward_input
  Matrix<Scalar> out_grad;      // adjoint of the out_grad that seeded backward_input
  std::vector<Matrix<Scalar>> tangents;  // retained per-layer adjoints
  MemoryTag tag;
};

/// Given the adjoint of input_grad, returns the parameter gradient through
/// the weights used in backward_input and the adjoint of its out_grad seed.
/// Activation masks are piecewise constant and contribute nothing.
template <typename Scalar, typename Derived>
InputGradAdjoint<Scalar> backward_through_input_grad(
    const MlpParams<Scalar>& p, const ForwardTrace<Scalar>& t, const InputGradTrace<Scalar>& r,
    const Eigen::MatrixBase<Derived>& input_grad_adjoint) {
  require(input_grad_adjoint.rows() == p.input_dim() && input_grad_adjoint.cols() == t.batch(),
          "backward_through_input_grad: adjoint shape mismatch");
  InputGradAdjoint<Scalar> a;
  a.params = p.zeros_like();
  const std::size_t n = p.num_layers();
  a.tangents.reserve(2 * n);

  // input_grad = W_0^T deltas[0]
  a.params.weights[0].noalias() = r.deltas[0] * input_grad_adjoint.transpose();
  a.tangents.push_back(p.weights[0] * input_grad_adjoint);  // adjoint of deltas[0]
  for (std::size_t l = 1; l < n; ++l) {
    // deltas[l-1] = mask(z_{l-1}) * (W_l^T deltas[l])
    Matrix<Scalar> carried_adj =
        (t.pre_activations[l - 1].array() > Scalar(0)).select(a.tangents.back(), Scalar(0));
    a.params.weights[l].noalias() = r.deltas[l] * carried_adj.transpose();
    Matrix<Scalar> next = p.weights[l] * carried_adj;
    a.tangents.push_back(std::move(carried_adj));
    a.tangents.push_back(std::move(next));
  }
  a.out_grad = a.tangents.back();
  std::int64_t elems = a.out_grad.size();
  for (const auto& m : a.tangents) elems += m.size();
  a.tag = MemoryTag(MemoryKind::kTrace, elems);
  return a;
}

}  // namespace snrl

#endif  // SNRL_NET_HPP_
