#pragma once

#include <complex>
#include <vector>

#include "rare/sysmodel.hpp"

namespace rare {

/// Eigenvalues with |lambda| >= 1 - kMarginalBand count as unstable, so
/// marginally stable modes are treated conservatively.
inline constexpr double kMarginalBand = 1e-9;

struct DetectabilityReport {
  SubsetId subset = 0;
  bool detectable = false;
  /// Unstable eigenvalues of A at which [A - lambda*I; C] loses rank.
  std::vector<std::complex<double>> offending;
};

/// Popov-Belevitch-Hautus test: (C, A) is detectable iff
/// [A - lambda*I; C] has full column rank at every eigenvalue with
/// |lambda| >= 1. Rank is decided from singular values with threshold
/// M * sigma_max * 1e-12.
DetectabilityReport is_detectable(const Eigen::MatrixXd& C,
                                  const Eigen::MatrixXd& A);

/// Dual PBH test: (A, B) stabilizable iff [A - lambda*I, B] has full row
/// rank at every unstable eigenvalue.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct AssumptionReport {
  bool stabilizable = false;   // (A, Q^{1/2})
  bool a_unstable = false;     // spectral radius of A > 1
  bool q_positive_definite = false;
  bool all() const { return stabilizable && a_unstable && q_positive_definite; }
};

/// Checks the hypotheses backing the convergence guarantees. Violations
/// are reported, not fatal: simulation outside the guaranteed regime is
/// still allowed.
AssumptionReport validate_assumption_e1(const SensorNetwork& net);

/// The detectable-atom set J(D): schedule atoms i != 0 with positive
/// probability whose stacked pair (C^i, A) is detectable.
std::vector<SubsetId> detectable_subsets(const SensorNetwork& net,
                                         const Schedule& schedule);

/// Per-atom PBH reports for every positive-probability atom (the empty
/// set is reported as not detectable).
std::vector<DetectabilityReport> atom_reports(const SensorNetwork& net,
                                              const Schedule& schedule);

/// True iff J(D) is nonempty.
bool is_weakly_detectable(const SensorNetwork& net, const Schedule& schedule);

double spectral_radius(const Eigen::MatrixXd& A);

}  // namespace rare
