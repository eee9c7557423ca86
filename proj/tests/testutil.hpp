#pragma once

#include <Eigen/Dense>

#include "rare/mckalman.hpp"
#include "rare/rng.hpp"
#include "rare/sysmodel.hpp"

namespace rare::test {

// Scalar system A=2, Q=1, P0=1, one sensor C=1, R=1. Its Riccati map
// reduces to p -> (5p+1)/(p+1) with fixed point 2+sqrt(5).
inline SensorNetwork sys1d() {
  Eigen::MatrixXd a(1, 1), c(1, 1), r(1, 1), q(1, 1);
  a << 2.0;
  c << 1.0;
  r << 1.0;
  q << 1.0;
  return SensorNetwork(a, CovMatrix(q), CovMatrix(q),
                       {Sensor{c, CovMatrix(r)}});
}

// Decoupled 2-mode system A=diag(2,3), Q=P0=I; sensor 1 sees mode 1,
// sensor 2 sees mode 2. No singleton is detectable; {1,2} is.
inline SensorNetwork sys2d() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  Eigen::MatrixXd c1(1, 2), c2(1, 2), r(1, 1);
  c1 << 1.0, 0.0;
  c2 << 0.0, 1.0;
  r << 1.0;
  return SensorNetwork(a, CovMatrix::Identity(2), CovMatrix::Identity(2),
                       {Sensor{c1, CovMatrix(r)}, Sensor{c2, CovMatrix(r)}});
}

// sys2d plus a third sensor C3 = [1 1] whose pair is detectable on its
// own, giving a second detectable atom for cross-subset checks.
inline SensorNetwork sys2d3() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  Eigen::MatrixXd c1(1, 2), c2(1, 2), c3(1, 2), r(1, 1);
  c1 << 1.0, 0.0;
  c2 << 0.0, 1.0;
  c3 << 1.0, 1.0;
  r << 1.0;
  return SensorNetwork(a, CovMatrix::Identity(2), CovMatrix::Identity(2),
                       {Sensor{c1, CovMatrix(r)}, Sensor{c2, CovMatrix(r)},
                        Sensor{c3, CovMatrix(r)}});
}

// Single-sensor intermittent schedule: transmit with probability gamma.
inline Schedule gamma_schedule(double gamma) {
  if (gamma >= 1.0) return Schedule::from_entries({{1, 1.0}});
  return Schedule::from_entries({{0, 1.0 - gamma}, {1, gamma}});
}

// Scalar map oracles for sys1d, reduced from the matrix maps by hand.
inline double scalar_f0(double p) { return 4.0 * p + 1.0; }
inline double scalar_f1(double p) { return (5.0 * p + 1.0) / (p + 1.0); }
inline constexpr double kSys1dFixedPoint = 4.23606797749978969640;  // 2+sqrt5

inline Eigen::MatrixXd random_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline CovMatrix random_psd(int dim, RngStream& rng) {
  const Eigen::MatrixXd z = random_matrix(dim, dim, rng);
  return CovMatrix(SymMatrix(z * z.transpose()));
}

inline CovMatrix random_pd(int dim, RngStream& rng, double ridge = 0.1) {
  const Eigen::MatrixXd z = random_matrix(dim, dim, rng);
  return CovMatrix(SymMatrix(z * z.transpose() +
                             ridge * Eigen::MatrixXd::Identity(dim, dim)));
}

// Random network with strictly positive definite Q and R (the regime of
// the order/sublinearity properties).
inline SensorNetwork random_network(int dim, int n_sensors, RngStream& rng) {
  const Eigen::MatrixXd a = random_matrix(dim, dim, rng) * 1.2;
  std::vector<Sensor> sensors;
  for (int n = 0; n < n_sensors; ++n) {
    const int mn = 1 + static_cast<int>(rng.next_u64() % 2);
    sensors.push_back(
        Sensor{random_matrix(mn, dim, rng), random_pd(mn, rng, 0.3)});
  }
  return SensorNetwork(a, random_pd(dim, rng, 0.5), random_psd(dim, rng),
                       std::move(sensors));
}

}  // namespace rare::test
