#include "rare/matcone.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace rare {

namespace detail {

Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 1) {
    Eigen::VectorXd v(1);
    v(0) = m(0, 0);
    return v;
  }
  if (n == 2) {
    // The outer eigenvalue mid +/- rad is cancellation-free; the inner one
    // comes from the determinant so heterogeneous scales (say diag(5, 1e18))
    // keep relative instead of absolute accuracy.
    const double a = m(0, 0), b = m(0, 1), c = m(1, 1);
    const double mid = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    const double det = a * c - b * b;
    Eigen::VectorXd v(2);
    if (mid >= 0.0) {
      v(1) = mid + rad;
      v(0) = v(1) > 0.0 ? det / v(1) : mid - rad;
    } else {
      v(0) = mid - rad;
      v(1) = v(0) < 0.0 ? det / v(0) : mid + rad;
    }
    return v;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericError("symmetric eigensolver failed to converge");
  }
  return es.eigenvalues();
}

void require_same_dim(const SymMatrix& x, const SymMatrix& y,
                      const char* where) {
  if (x.dim() != y.dim()) {
    std::ostringstream os;
    os << where << ": dimension mismatch (" << x.dim() << " vs " << y.dim()
       << ")";
    throw PreconditionError(os.str());
  }
}

}  // namespace detail

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    std::ostringstream os;
    os << "SymMatrix requires a square matrix of dim >= 1, got " << m.rows()
       << "x" << m.cols();
    throw PreconditionError(os.str());
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::Zero(int dim) {
  return SymMatrix(Eigen::MatrixXd::Zero(dim, dim));
}

SymMatrix SymMatrix::Identity(int dim) {
  return SymMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

SymMatrix SymMatrix::Diagonal(const Eigen::VectorXd& d) {
  return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

double SymMatrix::min_eigenvalue() const {
  return detail::sym_eigenvalues(m_)(0);
}

double SymMatrix::spectral_norm() const {
  const Eigen::VectorXd ev = detail::sym_eigenvalues(m_);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

CovMatrix::CovMatrix(const SymMatrix& s, ClipStats* clips) : sym_(s) {
  if (!s.all_finite()) {
    throw NumericError("CovMatrix: non-finite entries");
  }
  const double min_eig = s.min_eigenvalue();
  if (min_eig >= 0.0) return;
  const double norm = s.spectral_norm();
  const double slack = kPsdTol * (1.0 + norm);
  if (min_eig < -slack) {
    std::ostringstream os;
    os << "CovMatrix: not positive semidefinite, min eigenvalue " << min_eig
       << " below slack " << -slack;
    throw NumericError(os.str());
  }
  // Negative readings at the arithmetic noise floor of the matrix scale
  // are indistinguishable from zero; rebuilding would inject more error
  // than it removes.
  if (min_eig >= -16.0 * s.dim() *
                     std::numeric_limits<double>::epsilon() * norm) {
    return;
  }
  // Within tolerance of the cone boundary: clip negative eigenvalues to 0.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.mat());
  if (es.info() != Eigen::Success) {
    throw NumericError("CovMatrix: eigensolver failed during clip");
  }
  Eigen::VectorXd d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) {
    if (d(i) < 0.0) d(i) = 0.0;
  }
  sym_ = SymMatrix(es.eigenvectors() * d.asDiagonal() *
                   es.eigenvectors().transpose());
  if (clips != nullptr) {
    clips->count += 1;
    if (min_eig < clips->worst) clips->worst = min_eig;
  }
}

bool psd_order_leq(const SymMatrix& x, const SymMatrix& y, double tol) {
  detail::require_same_dim(x, y, "psd_order_leq");
  if (tol < 0.0) throw PreconditionError("psd_order_leq: tol must be >= 0");
  const SymMatrix diff(y.mat() - x.mat());
  return diff.min_eigenvalue() >= -tol * (1.0 + diff.spectral_norm());
}

bool strict_order_ll(const SymMatrix& x, const SymMatrix& y, double margin) {
  detail::require_same_dim(x, y, "strict_order_ll");
  const SymMatrix diff(y.mat() - x.mat());
  return diff.min_eigenvalue() >= margin;
}

double spectral_norm(const SymMatrix& x) { return x.spectral_norm(); }

double spectral_distance(const SymMatrix& x, const SymMatrix& y) {
  detail::require_same_dim(x, y, "spectral_distance");
  return SymMatrix(y.mat() - x.mat()).spectral_norm();
}

Eigen::MatrixXd chol_solve(const CovMatrix& s, const Eigen::MatrixXd& b) {
  if (s.dim() != b.rows()) {
    std::ostringstream os;
    os << "chol_solve: dimension mismatch, S is " << s.dim() << "x" << s.dim()
       << " but B has " << b.rows() << " rows";
    throw PreconditionError(os.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s.mat());
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "chol_solve: factorization failed, input not positive definite "
          "(min eigenvalue "
       << s.min_eigenvalue() << ")";
    throw NumericError(os.str());
  }
  Eigen::MatrixXd z = llt.solve(b);
  // one refinement step keeps the residual bound at condition numbers ~1e6
  z += llt.solve(b - s.mat() * z);
  return z;
}

Eigen::MatrixXd psd_sqrt(const CovMatrix& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.mat());
  if (es.info() != Eigen::Success) {
    throw NumericError("psd_sqrt: eigensolver failed");
  }
  Eigen::VectorXd d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) {
    d(i) = d(i) > 0.0 ? std::sqrt(d(i)) : 0.0;
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

std::size_t QuantizedKeyHash::operator()(const QuantizedKey& k) const {
  // FNV-1a over the cell bit patterns.
  std::uint64_t h = 1469598103934665603ULL;
  for (double c : k.cells) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(c));
    std::memcpy(&bits, &c, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  }
  return static_cast<std::size_t>(h);
}

QuantizedKey quantized_key(const SymMatrix& x, double delta) {
  if (!(delta > 0.0)) {
    throw PreconditionError("quantized_key: delta must be positive");
  }
  QuantizedKey key;
  const int n = x.dim();
  key.cells.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      double q = std::nearbyint(x(i, j) / delta);
      if (q == 0.0) q = 0.0;  // collapse -0.0
      key.cells.push_back(q);
    }
  }
  return key;
}

}  // namespace rare
