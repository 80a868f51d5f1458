// Dense linear algebra kernels and the counter-based random source shared by
// every other module.
#ifndef SNRL_NUMKIT_HPP_
#define SNRL_NUMKIT_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace snrl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Raised when a caller breaks an operation's precondition (shapes, ranges).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

/// Matrix product with shape and finiteness checks.
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
              std::to_string(b.rows()) + ")");
  Matrix<typename DerivedA::Scalar> out = a * b;
  require(out.allFinite(), "matmul: non-finite result");
  return out;
}

// ---------------------------------------------------------------------------
// RngStream

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: the k-th draw is a pure function of
/// (seed, stream-id, k), so streams can be split per worker without any
/// shared state and reproduce exactly on every platform.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_(stream_id),
        key_(detail::mix64(seed ^ detail::mix64(stream_id + detail::kGolden))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent child stream; the parent's position is not consumed.
  RngStream split(std::uint64_t child_id) const {
    return RngStream(detail::mix64(key_ + child_id * detail::kGolden), child_id);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Box-Muller; consumes two draws per variate so the stream stays stateless
  /// beyond its counter.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "RngStream::below: empty range");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

template <typename Scalar = double>
Vector<Scalar> gaussian_sample(RngStream& rng, Eigen::Index n, Scalar mean, Scalar std) {
  require(std >= Scalar(0), "gaussian_sample: negative standard deviation");
  require(n >= 0, "gaussian_sample: negative count");
  Vector<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = mean + std * static_cast<Scalar>(rng.normal());
  return out;
}

template <typename Scalar = double>
Vector<Scalar> random_unit_vector(RngStream& rng, Eigen::Index n) {
  require(n > 0, "random_unit_vector: empty dimension");
  Vector<Scalar> v = gaussian_sample<Scalar>(rng, n, Scalar(0), Scalar(1));
  const Scalar norm = v.norm();
  if (norm == Scalar(0)) {
    v.setZero();
    v[0] = Scalar(1);
    return v;
  }
  return v / norm;
}

template <typename Scalar = double>
Matrix<Scalar> gaussian_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols,
                               Scalar std = Scalar(1)) {
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = std * static_cast<Scalar>(rng.normal());
  return m;
}

// ---------------------------------------------------------------------------
// Jacobi spectral oracle

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, unsorted.
/// Only the lower/upper symmetric part is trusted; the input is copied.
template <typename Derived>
Vector<typename Derived::Scalar> jacobi_eigenvalues(const Eigen::MatrixBase<Derived>& sym,
                                                    int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  require(sym.rows() == sym.cols(), "jacobi_eigenvalues: matrix not square");
  const Eigen::Index n = sym.rows();
  Matrix<Scalar> a = sym;
  if (n < 2) return a.diagonal();

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Scalar off = 0;
    Scalar diag = 0;
    for (Eigen::Index p = 0; p < n; ++p) {
      diag += a(p, p) * a(p, p);
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off <= eps * eps * diag || off == Scalar(0)) break;

    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (std::abs(apq) <= eps * std::sqrt(std::abs(a(p, p) * a(q, q))) * Scalar(1e-3)) {
          a(p, q) = a(q, p) = Scalar(0);
          continue;
        }
        // Symmetric Schur rotation zeroing a(p, q).
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;

        const Scalar app = a(p, p);
        const Scalar aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = Scalar(0);
        for (Eigen::Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          const Scalar nkp = c * akp - s * akq;
          const Scalar nkq = s * akp + c * akq;
          a(k, p) = a(p, k) = nkp;
          a(k, q) = a(q, k) = nkq;
        }
      }
    }
  }
  return a.diagonal();
}

/// Largest singular value by cyclic Jacobi on the Gram matrix of the narrower
/// side. The rotations are applied one-sided (Hestenes): each (p, q) step is
/// the Jacobi rotation of G = W^T W, carried out on the columns of W so only
/// contiguous column operations are needed. Test oracle; independent of the
/// power-iteration path.
template <typename Derived>
typename Derived::Scalar sigma_max_oracle(const Eigen::MatrixBase<Derived>& w,
                                          int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  require(w.rows() > 0 && w.cols() > 0, "sigma_max_oracle: empty matrix");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a;  // column-major
  if (w.cols() <= w.rows()) {
    a = w;
  } else {
    a = w.transpose();
  }
  const Eigen::Index n = a.cols();
  // Diagonal of G, kept in step with the rotations.
  Vector<Scalar> g = a.colwise().squaredNorm().transpose();
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  Vector<Scalar> col_p(a.rows());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (n > 1 && sweep > 0) {
      // Early exit once the top diagonal entry rho is certified: interlacing
      // plus Gershgorin on the other rows bounds the second eigenvalue by
      // alpha, and Kato-Temple gives rho <= lambda_max <= rho + r^2 / (rho - alpha).
      const Matrix<Scalar> gram = a.transpose() * a;
      Eigen::Index k = 0;
      const Scalar rho = gram.diagonal().maxCoeff(&k);
      const Scalar r2 = std::max(gram.row(k).squaredNorm() - rho * rho, Scalar(0));
      Scalar alpha = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i == k) continue;
        const Scalar radius = gram.row(i).cwiseAbs().sum() - std::abs(gram(i, i)) - std::abs(gram(i, k));
        alpha = std::max(alpha, gram(i, i) + radius);
      }
      if (alpha < rho && r2 <= Scalar(1e-13) * rho * (rho - alpha)) return std::sqrt(rho);
    }
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar gpq = a.col(p).dot(a.col(q));
        if (std::abs(gpq) <= eps * std::sqrt(g[p] * g[q])) continue;
        rotated = true;
        const Scalar theta = (g[q] - g[p]) / (Scalar(2) * gpq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        col_p = a.col(p);
        a.col(p) = c * col_p - s * a.col(q);
        a.col(q) = s * col_p + c * a.col(q);
        g[p] -= t * gpq;
        g[q] += t * gpq;
      }
    }
    if (!rotated) break;
  }
  return std::sqrt(a.colwise().squaredNorm().maxCoeff());
}

}  // namespace snrl

#endif  // SNRL_NUMKIT_HPP_
