#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rare/matcone.hpp"
#include "rare/rng.hpp"

namespace rare {

/// Index into the power set of sensors {1..N}: bit k set means sensor k+1
/// transmits. Id 0 is the empty set.
using SubsetId = std::uint32_t;

inline constexpr int kMaxSensors = 16;

/// 1-based sensor indices contained in a subset, ascending.
std::vector<int> subset_sensors(SubsetId id);
/// Bitmask from 1-based sensor indices. Duplicates are an error.
SubsetId subset_from_sensors(const std::vector<int>& sensors);
/// Human-readable form like "{1,3}" ("{}" for the empty set).
std::string subset_to_string(SubsetId id);

struct Sensor {
  Eigen::MatrixXd C;  // m_n x M
  CovMatrix R;        // m_n x m_n, strictly positive definite
};

/// Observation model of one transmitting subset: rows of the member
/// sensors' C stacked in ascending sensor order, R block diagonal.
struct StackedObsModel {
  Eigen::MatrixXd C;
  CovMatrix R;
};

/// Immutable networked system model: x(t+1) = A x(t) + w(t) with
/// per-sensor observations y_n(t) = C_n x(t) + v_n(t).
class SensorNetwork {
 public:
  SensorNetwork(const Eigen::MatrixXd& A, const CovMatrix& Q,
                const CovMatrix& P0, std::vector<Sensor> sensors);

  int state_dim() const { return static_cast<int>(A_.rows()); }
  int sensor_count() const { return static_cast<int>(sensors_.size()); }
  SubsetId subset_count() const { return SubsetId{1} << sensor_count(); }

  const Eigen::MatrixXd& A() const { return A_; }
  const CovMatrix& Q() const { return Q_; }
  const CovMatrix& P0() const { return P0_; }
  const Sensor& sensor(int n) const { return sensors_.at(n); }  // 0-based

  /// Throws PreconditionError for ids outside [0, 2^N).
  void require_valid_subset(SubsetId id) const;

  /// Stacked model for a non-empty subset; id 0 is an error (the empty set
  /// has no observation model).
  StackedObsModel stacked(SubsetId id) const;

 private:
  Eigen::MatrixXd A_;
  CovMatrix Q_;
  CovMatrix P0_;
  std::vector<Sensor> sensors_;
};

SensorNetwork build_network(const Eigen::MatrixXd& A, const CovMatrix& Q,
                            const CovMatrix& P0, std::vector<Sensor> sensors);

/// Sparse probability distribution over subsets. Only atoms with positive
/// probability are stored; probabilities must sum to 1 within 1e-12 -
/// anything else is rejected, never renormalized.
class Schedule {
 public:
  static Schedule from_entries(std::vector<std::pair<SubsetId, double>> entries);

  const std::vector<std::pair<SubsetId, double>>& atoms() const {
    return atoms_;
  }
  double prob(SubsetId id) const;
  /// Atoms with positive probability, ascending by id.
  std::vector<SubsetId> support() const;
  SubsetId max_atom() const { return atoms_.empty() ? 0 : atoms_.back().first; }

  SubsetId sample(RngStream& rng) const;

 private:
  Schedule() = default;
  std::vector<std::pair<SubsetId, double>> atoms_;  // sorted by id
  std::vector<double> cdf_;
};

SubsetId sample_subset(const Schedule& s, RngStream& rng);

struct StateTrajectory {
  std::vector<Eigen::VectorXd> states;  // x(0..T)
};

struct ObsTrajectory {
  std::vector<SubsetId> subsets;        // I(0..T-1)
  std::vector<Eigen::VectorXd> obs;     // y(t); empty vector when I(t) = 0
};

/// Samples x(0) ~ N(0, P0) and iterates x(t+1) = A x(t) + w(t),
/// w ~ N(0, Q). Returns T+1 states.
StateTrajectory simulate_signal(const SensorNetwork& net, int horizon,
                                RngStream& rng);

/// Stacked observations along a given subset sequence; slots with
/// I(t) = 0 stay empty.
ObsTrajectory simulate_observations(const SensorNetwork& net,
                                    const StateTrajectory& traj,
                                    const std::vector<SubsetId>& subsets,
                                    RngStream& rng);

}  // namespace rare
