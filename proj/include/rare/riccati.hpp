#pragma once

#include <optional>
#include <vector>

#include "rare/analysis.hpp"
#include "rare/sysmodel.hpp"

namespace rare {

/// Lyapunov map f_0(X) = A X A^T + Q (no observation arrives).
CovMatrix lyapunov_step(const SensorNetwork& net, const CovMatrix& x,
                        ClipStats* clips = nullptr);

/// Riccati map of a non-empty subset:
///   f_i(X) = A X A^T + Q - A X C^T (C X C^T + R)^{-1} C X A^T
/// with the inverse taken through a positive definite factorization
/// (C X C^T + R is PD because every R^i is).
CovMatrix riccati_step(const SensorNetwork& net, SubsetId i,
                       const CovMatrix& x, ClipStats* clips = nullptr);

/// Dispatch on the subset: i = 0 applies the Lyapunov map, any other id
/// the corresponding Riccati map.
CovMatrix rare_step(const SensorNetwork& net, SubsetId i, const CovMatrix& x,
                    ClipStats* clips = nullptr);

/// One sample path of the switched covariance recursion
/// P(t+1) = f_{I(t)}(P(t)) with i.i.d. subset draws.
struct RareTrajectory {
  CovMatrix initial;
  std::vector<std::pair<SubsetId, CovMatrix>> steps;  // (I(t), P(t+1))
  ClipStats clips;

  int horizon() const { return static_cast<int>(steps.size()); }
};

RareTrajectory rare_trajectory(const SensorNetwork& net,
                               const Schedule& schedule, const CovMatrix& p0,
                               int horizon, RngStream& rng);

struct FixedPoint {
  SubsetId subset = 0;
  CovMatrix value;
  double residual = 0.0;  // ||f_i(P*) - P*||
  int iterations = 0;
};

/// Fixed point of f_i by iteration from X_0 = Q. Requires (C^i, A)
/// detectable and (A, Q^{1/2}) stabilizable; both are checked up front.
FixedPoint dare_fixed_point(const SensorNetwork& net, SubsetId i,
                            double tol = 1e-12, int max_iter = 100000);

namespace kernel {

/// The map kernels on plain matrices. Every covariance path in the
/// library funnels through these two functions, which is what makes
/// filter runs, trajectory replays and Monte Carlo sweeps bit-identical.
Eigen::MatrixXd lyapunov_apply(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& X);

Eigen::MatrixXd riccati_apply(const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& C,
                              const Eigen::MatrixXd& R,
                              const Eigen::MatrixXd& X);

}  // namespace kernel

/// Precomputed map family over a fixed alphabet of subset ids. Avoids
/// re-stacking observation models inside hot loops; results are
/// bit-identical to rare_step because the same kernels run underneath.
class MapFamily {
 public:
  MapFamily(const SensorNetwork& net, const std::vector<SubsetId>& alphabet);

  const std::vector<SubsetId>& alphabet() const { return alphabet_; }
  const SensorNetwork& net() const { return *net_; }

  /// Applies f_i; i must belong to the alphabet.
  Eigen::MatrixXd apply_raw(SubsetId i, const Eigen::MatrixXd& x) const;
  CovMatrix apply(SubsetId i, const CovMatrix& x,
                  ClipStats* clips = nullptr) const;

 private:
  const SensorNetwork* net_;
  std::vector<SubsetId> alphabet_;                 // ascending
  std::vector<std::optional<StackedObsModel>> models_;  // parallel to alphabet_
  int index_of(SubsetId i) const;
};

}  // namespace rare
