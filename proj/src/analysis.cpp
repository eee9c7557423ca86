#include "rare/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <sstream>

namespace rare {

namespace {

int svd_rank(const Eigen::MatrixXcd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double thresh =
      static_cast<double>(m.cols()) * sv(0) * 1e-12;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++rank;
  }
  return rank;
}

std::vector<std::complex<double>> unstable_eigenvalues(
    const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigensolver failed on A");
  }
  std::vector<std::complex<double>> out;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (std::abs(lambda) >= 1.0 - kMarginalBand) out.push_back(lambda);
  }
  return out;
}

void push_unique(std::vector<std::complex<double>>& v,
                 std::complex<double> lambda) {
  for (const auto& u : v) {
    if (std::abs(u - lambda) <= 1e-9) return;
  }
  v.push_back(lambda);
}

}  // namespace

double spectral_radius(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigensolver failed on A");
  }
  double rho = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    rho = std::max(rho, std::abs(es.eigenvalues()(i)));
  }
  return rho;
}

DetectabilityReport is_detectable(const Eigen::MatrixXd& C,
                                  const Eigen::MatrixXd& A) {
  const int m = static_cast<int>(A.rows());
  if (A.rows() != A.cols()) {
    throw PreconditionError("is_detectable: A must be square");
  }
  if (C.cols() != m) {
    std::ostringstream os;
    os << "is_detectable: C has " << C.cols() << " columns, A is " << m << "x"
       << m;
    throw PreconditionError(os.str());
  }
  DetectabilityReport report;
  report.detectable = true;
  const Eigen::MatrixXcd Ac = A.cast<std::complex<double>>();
  const Eigen::MatrixXcd Cc = C.cast<std::complex<double>>();
  for (const auto& lambda : unstable_eigenvalues(A)) {
    Eigen::MatrixXcd stacked(m + C.rows(), m);
    stacked.topRows(m) =
        Ac - lambda * Eigen::MatrixXcd::Identity(m, m);
    stacked.bottomRows(C.rows()) = Cc;
    if (svd_rank(stacked) < m) {
      report.detectable = false;
      push_unique(report.offending, lambda);
    }
  }
  return report;
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int m = static_cast<int>(A.rows());
  if (A.rows() != A.cols()) {
    throw PreconditionError("is_stabilizable: A must be square");
  }
  if (B.rows() != m) {
    std::ostringstream os;
    os << "is_stabilizable: B has " << B.rows() << " rows, A is " << m << "x"
       << m;
    throw PreconditionError(os.str());
  }
  const Eigen::MatrixXcd Ac = A.cast<std::complex<double>>();
  const Eigen::MatrixXcd Bc = B.cast<std::complex<double>>();
  for (const auto& lambda : unstable_eigenvalues(A)) {
    Eigen::MatrixXcd wide(m, m + B.cols());
    wide.leftCols(m) = Ac - lambda * Eigen::MatrixXcd::Identity(m, m);
    wide.rightCols(B.cols()) = Bc;
    if (svd_rank(wide) < m) return false;
  }
  return true;
}

AssumptionReport validate_assumption_e1(const SensorNetwork& net) {
  AssumptionReport rep;
  rep.stabilizable = is_stabilizable(net.A(), psd_sqrt(net.Q()));
  rep.a_unstable = spectral_radius(net.A()) > 1.0;
  rep.q_positive_definite = net.Q().min_eigenvalue() > 0.0;
  return rep;
}

std::vector<DetectabilityReport> atom_reports(const SensorNetwork& net,
                                              const Schedule& schedule) {
  std::vector<DetectabilityReport> out;
  for (SubsetId id : schedule.support()) {
    net.require_valid_subset(id);
    DetectabilityReport rep;
    rep.subset = id;
    if (id != 0) {
      rep = is_detectable(net.stacked(id).C, net.A());
      rep.subset = id;
    }
    out.push_back(std::move(rep));
  }
  return out;
}

std::vector<SubsetId> detectable_subsets(const SensorNetwork& net,
                                         const Schedule& schedule) {
  std::vector<SubsetId> out;
  for (const auto& rep : atom_reports(net, schedule)) {
    if (rep.subset != 0 && rep.detectable) out.push_back(rep.subset);
  }
  return out;
}

bool is_weakly_detectable(const SensorNetwork& net, const Schedule& schedule) {
  return !detectable_subsets(net, schedule).empty();
}

}  // namespace rare
