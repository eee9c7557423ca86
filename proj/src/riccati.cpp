#include "rare/riccati.hpp"

#include <algorithm>
#include <sstream>

namespace rare {

namespace kernel {

namespace {

// Above this spectral norm the subtraction in the textbook form loses the
// small modes of the output to cancellation (absolute error grows like
// ||A||^2 * ||X|| * eps), so strictly positive definite X switches to the
// algebraically identical information form, which has no subtraction.
constexpr double kInfoFormSwitch = 1e5;

bool info_form_apply(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& C, const Eigen::MatrixXd& R,
                     const Eigen::MatrixXd& X, Eigen::MatrixXd* out) {
  // f_i(X) = A (X^{-1} + C^T R^{-1} C)^{-1} A^T + Q
  Eigen::LLT<Eigen::MatrixXd> llt_x(X);
  if (llt_x.info() != Eigen::Success) return false;
  Eigen::LLT<Eigen::MatrixXd> llt_r(R);
  if (llt_r.info() != Eigen::Success) return false;
  const Eigen::MatrixXd x_inv =
      llt_x.solve(Eigen::MatrixXd::Identity(X.rows(), X.cols()));
  Eigen::MatrixXd m = x_inv + C.transpose() * llt_r.solve(C);
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt_m(m);
  if (llt_m.info() != Eigen::Success) return false;
  Eigen::MatrixXd z = llt_m.solve(A.transpose());
  z += llt_m.solve(A.transpose() - m * z);
  *out = A * z + Q;
  *out = 0.5 * (*out + out->transpose()).eval();
  return true;
}

}  // namespace

Eigen::MatrixXd lyapunov_apply(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out = A * X * A.transpose() + Q;
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

Eigen::MatrixXd riccati_apply(const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& C,
                              const Eigen::MatrixXd& R,
                              const Eigen::MatrixXd& X) {
  const Eigen::VectorXd x_eigs = detail::sym_eigenvalues(X);
  const double x_norm =
      std::max(std::abs(x_eigs(0)), std::abs(x_eigs(x_eigs.size() - 1)));
  if (x_norm > kInfoFormSwitch) {
    // the Cholesky of X doubles as the positive definiteness gate
    Eigen::MatrixXd out;
    if (info_form_apply(A, Q, C, R, X, &out)) return out;
  }

  // W = C X A^T, S = C X C^T + R; correction = W^T S^{-1} W
  const Eigen::MatrixXd W = C * X * A.transpose();
  Eigen::MatrixXd S = C * X * C.transpose() + R;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "riccati map: innovation covariance not positive definite "
          "(min eigenvalue "
       << SymMatrix(S).min_eigenvalue() << ")";
    throw NumericError(os.str());
  }
  Eigen::MatrixXd out =
      A * X * A.transpose() + Q - W.transpose() * llt.solve(W);
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

}  // namespace kernel

CovMatrix lyapunov_step(const SensorNetwork& net, const CovMatrix& x,
                        ClipStats* clips) {
  if (x.dim() != net.state_dim()) {
    throw PreconditionError("lyapunov_step: X dimension mismatch");
  }
  return CovMatrix(kernel::lyapunov_apply(net.A(), net.Q().mat(), x.mat()),
                   clips);
}

CovMatrix riccati_step(const SensorNetwork& net, SubsetId i,
                       const CovMatrix& x, ClipStats* clips) {
  if (i == 0) {
    throw PreconditionError(
        "riccati_step: the empty subset has no Riccati map; use "
        "lyapunov_step");
  }
  if (x.dim() != net.state_dim()) {
    throw PreconditionError("riccati_step: X dimension mismatch");
  }
  const StackedObsModel m = net.stacked(i);
  return CovMatrix(
      kernel::riccati_apply(net.A(), net.Q().mat(), m.C, m.R.mat(), x.mat()),
      clips);
}

CovMatrix rare_step(const SensorNetwork& net, SubsetId i, const CovMatrix& x,
                    ClipStats* clips) {
  net.require_valid_subset(i);
  return i == 0 ? lyapunov_step(net, x, clips)
                : riccati_step(net, i, x, clips);
}

RareTrajectory rare_trajectory(const SensorNetwork& net,
                               const Schedule& schedule, const CovMatrix& p0,
                               int horizon, RngStream& rng) {
  if (horizon < 1) {
    throw PreconditionError("rare_trajectory: horizon T >= 1");
  }
  std::vector<SubsetId> alphabet = schedule.support();
  if (std::find(alphabet.begin(), alphabet.end(), SubsetId{0}) ==
      alphabet.end()) {
    alphabet.insert(alphabet.begin(), 0);
  }
  const MapFamily maps(net, alphabet);

  RareTrajectory traj{p0, {}, {}};
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  CovMatrix p = p0;
  for (int t = 0; t < horizon; ++t) {
    const SubsetId i = schedule.sample(rng);
    try {
      p = maps.apply(i, p, &traj.clips);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "rare_trajectory: step " << t << " (subset "
         << subset_to_string(i) << "): " << e.what();
      throw NumericError(os.str());
    }
    traj.steps.emplace_back(i, p);
  }
  return traj;
}

FixedPoint dare_fixed_point(const SensorNetwork& net, SubsetId i, double tol,
                            int max_iter) {
  net.require_valid_subset(i);
  if (i == 0) {
    throw PreconditionError(
        "dare_fixed_point: the Lyapunov map of an unstable A has no fixed "
        "point; pick a non-empty subset");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw PreconditionError("dare_fixed_point: tol > 0 and max_iter >= 1");
  }
  const StackedObsModel m = net.stacked(i);
  const DetectabilityReport det = is_detectable(m.C, net.A());
  if (!det.detectable) {
    std::ostringstream os;
    os << "dare_fixed_point: pair (C^" << subset_to_string(i)
       << ", A) is not detectable (weak-detectability requirement); "
          "offending eigenvalues:";
    for (const auto& l : det.offending) {
      os << " (" << l.real() << (l.imag() < 0 ? "-" : "+")
         << std::abs(l.imag()) << "i)";
    }
    throw PreconditionError(os.str());
  }
  if (!is_stabilizable(net.A(), psd_sqrt(net.Q()))) {
    throw PreconditionError(
        "dare_fixed_point: (A, Q^{1/2}) is not stabilizable; the fixed "
        "point may not exist");
  }

  // Start at Q so every iterate stays positive definite.
  Eigen::MatrixXd x = net.Q().mat();
  for (int k = 1; k <= max_iter; ++k) {
    Eigen::MatrixXd next =
        kernel::riccati_apply(net.A(), net.Q().mat(), m.C, m.R.mat(), x);
    const double step = SymMatrix(next - x).spectral_norm();
    const double scale = 1.0 + SymMatrix(x).spectral_norm();
    x = std::move(next);
    if (step <= tol * scale) {
      FixedPoint fp{i, CovMatrix(x), 0.0, k};
      const Eigen::MatrixXd fx =
          kernel::riccati_apply(net.A(), net.Q().mat(), m.C, m.R.mat(), x);
      fp.residual = SymMatrix(fx - x).spectral_norm();
      return fp;
    }
  }
  std::ostringstream os;
  os << "dare_fixed_point: no convergence for subset " << subset_to_string(i)
     << " after " << max_iter << " iterations";
  throw NumericError(os.str());
}

MapFamily::MapFamily(const SensorNetwork& net,
                     const std::vector<SubsetId>& alphabet)
    : net_(&net), alphabet_(alphabet) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()),
                  alphabet_.end());
  models_.reserve(alphabet_.size());
  for (SubsetId id : alphabet_) {
    net.require_valid_subset(id);
    if (id == 0) {
      models_.emplace_back(std::nullopt);
    } else {
      models_.emplace_back(net.stacked(id));
    }
  }
}

int MapFamily::index_of(SubsetId i) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), i);
  if (it == alphabet_.end() || *it != i) {
    std::ostringstream os;
    os << "MapFamily: subset " << subset_to_string(i)
       << " is not in the alphabet";
    throw PreconditionError(os.str());
  }
  return static_cast<int>(it - alphabet_.begin());
}

Eigen::MatrixXd MapFamily::apply_raw(SubsetId i,
                                     const Eigen::MatrixXd& x) const {
  const int k = index_of(i);
  if (!models_[k].has_value()) {
    return kernel::lyapunov_apply(net_->A(), net_->Q().mat(), x);
  }
  const StackedObsModel& m = *models_[k];
  return kernel::riccati_apply(net_->A(), net_->Q().mat(), m.C, m.R.mat(), x);
}

CovMatrix MapFamily::apply(SubsetId i, const CovMatrix& x,
                           ClipStats* clips) const {
  return CovMatrix(apply_raw(i, x.mat()), clips);
}

}  // namespace rare
