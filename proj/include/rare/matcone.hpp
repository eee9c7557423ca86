#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rare/errors.hpp"

namespace rare {

/// Relative eigenvalue slack used for cone-membership and order tests.
inline constexpr double kPsdTol = 1e-9;

/// Symmetric real matrix. Construction symmetrizes the input by averaging
/// with its transpose, so downstream code never sees floating-point
/// asymmetry from products like A*X*A^T.
class SymMatrix {
 public:
  /// 1x1 zero matrix; the smallest member of the space.
  SymMatrix() : m_(Eigen::MatrixXd::Zero(1, 1)) {}
  explicit SymMatrix(const Eigen::MatrixXd& m);

  static SymMatrix Zero(int dim);
  static SymMatrix Identity(int dim);
  static SymMatrix Diagonal(const Eigen::VectorXd& d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  /// Smallest eigenvalue (exact closed form for dim <= 2).
  double min_eigenvalue() const;
  /// Largest |eigenvalue|; the induced 2-norm for symmetric matrices.
  double spectral_norm() const;
  double trace() const { return m_.trace(); }

  bool all_finite() const { return m_.allFinite(); }

 private:
  Eigen::MatrixXd m_;
};

/// Counters for eigenvalue clips applied while constructing CovMatrix
/// values from nearly-PSD inputs.
struct ClipStats {
  long count = 0;
  double worst = 0.0;  // most negative eigenvalue that was clipped

  void merge(const ClipStats& other) {
    count += other.count;
    if (other.worst < worst) worst = other.worst;
  }
};

/// Positive semidefinite matrix (cone membership verified up to
/// kPsdTol * (1 + spectral norm) slack). Eigenvalues inside the slack band
/// but below zero are clipped to zero; each clip is recorded when a
/// ClipStats sink is supplied.
class CovMatrix {
 public:
  /// 1x1 zero matrix.
  CovMatrix() = default;
  explicit CovMatrix(const SymMatrix& s, ClipStats* clips = nullptr);
  explicit CovMatrix(const Eigen::MatrixXd& m, ClipStats* clips = nullptr)
      : CovMatrix(SymMatrix(m), clips) {}

  static CovMatrix Zero(int dim) { return CovMatrix(SymMatrix::Zero(dim)); }
  static CovMatrix Identity(int dim) {
    return CovMatrix(SymMatrix::Identity(dim));
  }

  int dim() const { return sym_.dim(); }
  const SymMatrix& sym() const { return sym_; }
  const Eigen::MatrixXd& mat() const { return sym_.mat(); }
  double operator()(int i, int j) const { return sym_(i, j); }

  double min_eigenvalue() const { return sym_.min_eigenvalue(); }
  double spectral_norm() const { return sym_.spectral_norm(); }
  double trace() const { return sym_.trace(); }

  /// True if the smallest eigenvalue is strictly positive.
  bool positive_definite() const { return sym_.min_eigenvalue() > 0.0; }

 private:
  SymMatrix sym_;
};

/// Cone order X <= Y: min eig(Y - X) >= -tol * (1 + ||Y - X||).
/// Reflexive at any tol >= 0.
bool psd_order_leq(const SymMatrix& x, const SymMatrix& y, double tol);

/// Strong order X << Y with an explicit margin: min eig(Y - X) >= margin.
bool strict_order_ll(const SymMatrix& x, const SymMatrix& y, double margin);

/// Induced 2-norm of a symmetric matrix (largest |eigenvalue|).
double spectral_norm(const SymMatrix& x);

/// Spectral-norm distance between two symmetric matrices.
double spectral_distance(const SymMatrix& x, const SymMatrix& y);

/// Solves S * Z = B for strictly positive definite S via Cholesky.
/// Throws NumericError identifying the smallest eigenvalue when the
/// factorization fails.
Eigen::MatrixXd chol_solve(const CovMatrix& s, const Eigen::MatrixXd& b);

/// PSD square root via eigendecomposition (eigenvalues below zero clamp
/// to zero). Works for singular inputs, unlike Cholesky.
Eigen::MatrixXd psd_sqrt(const CovMatrix& s);

/// Lattice key: each upper-triangle entry rounded to the nearest multiple
/// of delta. Quantized cells are stored as doubles so arbitrarily large
/// entries cannot overflow an integer lattice index.
struct QuantizedKey {
  std::vector<double> cells;

  bool operator==(const QuantizedKey& other) const = default;
};

struct QuantizedKeyHash {
  std::size_t operator()(const QuantizedKey& k) const;
};

QuantizedKey quantized_key(const SymMatrix& x, double delta);

namespace detail {
/// Eigenvalues of a symmetric matrix, ascending. Closed form for
/// dim <= 2, self-adjoint QR otherwise.
Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& m);
void require_same_dim(const SymMatrix& x, const SymMatrix& y,
                      const char* where);
}  // namespace detail

}  // namespace rare
