// Benchmark: OpenMP path sweep and level-parallel support enumeration
// against their serial reference implementations. Verifies the aggregates
// agree bit for bit before reporting the speedup.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rare/mckalman.hpp"
#include "rare/support.hpp"

using namespace rare;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

SensorNetwork bench_network() {
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

}  // namespace

int main(int argc, char** argv) {
  int paths = 2000;
  int horizon = 2000;
  if (argc > 1) paths = std::stoi(argv[1]);
  if (argc > 2) horizon = std::stoi(argv[2]);

  const SensorNetwork net = bench_network();
  const Schedule schedule = Schedule::from_entries(
      {{0, 0.4}, {3, 0.25}, {4, 0.25}, {7, 0.1}});

  McOptions opt;
  opt.paths = paths;
  opt.horizon = horizon;
  opt.burn_in = horizon / 10;
  opt.seed = 42;

  std::printf("monte carlo sweep: %d paths x %d steps\n", paths, horizon);
  auto t0 = clock_type::now();
  const McResult serial =
      simulate_covariance_paths_serial(net, schedule, net.P0(), opt);
  const double t_serial = seconds_since(t0);

  t0 = clock_type::now();
  const McResult parallel =
      simulate_covariance_paths(net, schedule, net.P0(), opt);
  const double t_parallel = seconds_since(t0);

  const bool mc_match =
      serial.at_t_star.samples == parallel.at_t_star.samples &&
      serial.tail.sup_fraction == parallel.tail.sup_fraction &&
      serial.moments.moment == parallel.moments.moment &&
      serial.min_floor_margin == parallel.min_floor_margin;
  std::printf("  serial   %8.3f s\n", t_serial);
  std::printf("  parallel %8.3f s   speedup %.2fx   aggregates %s\n",
              t_parallel, t_serial / t_parallel,
              mc_match ? "identical" : "MISMATCH");

  SupportOptions sopt;
  sopt.depth = 7;
  sopt.node_cap = 200000;
  std::printf("support enumeration: depth %d\n", sopt.depth);
  sopt.parallel = false;
  t0 = clock_type::now();
  const SupportSet s_serial = enumerate_support(net, schedule, 3, sopt);
  const double t_sup_serial = seconds_since(t0);
  sopt.parallel = true;
  t0 = clock_type::now();
  const SupportSet s_parallel = enumerate_support(net, schedule, 3, sopt);
  const double t_sup_parallel = seconds_since(t0);

  bool sup_match = s_serial.points.size() == s_parallel.points.size();
  if (sup_match) {
    for (std::size_t k = 0; k < s_serial.points.size(); ++k) {
      sup_match = sup_match && s_serial.points[k].value.mat() ==
                                   s_parallel.points[k].value.mat();
    }
  }
  std::printf("  serial   %8.3f s   (%zu points)\n", t_sup_serial,
              s_serial.points.size());
  std::printf("  parallel %8.3f s   speedup %.2fx   points %s\n",
              t_sup_parallel, t_sup_serial / t_sup_parallel,
              sup_match ? "identical" : "MISMATCH");

  return mc_match && sup_match ? 0 : 1;
}
