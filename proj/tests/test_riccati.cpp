#include "rare/riccati.hpp"

#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace rare;

namespace {

CovMatrix scalar_cov(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return CovMatrix(m);
}

}  // namespace

TEST_CASE("lyapunov_step examples") {
  const SensorNetwork net = test::sys1d();
  CHECK(lyapunov_step(net, scalar_cov(1.0))(0, 0) == doctest::Approx(5.0));
  CHECK(lyapunov_step(net, scalar_cov(0.0))(0, 0) == doctest::Approx(1.0));

  const SensorNetwork net2 = test::sys2d();
  const CovMatrix out = lyapunov_step(net2, CovMatrix::Identity(2));
  CHECK(out(0, 0) == doctest::Approx(5.0));
  CHECK(out(1, 1) == doctest::Approx(10.0));
  CHECK(out(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("riccati_step examples against the scalar oracle") {
  const SensorNetwork net = test::sys1d();
  CHECK(riccati_step(net, 1, scalar_cov(1.0))(0, 0) ==
        doctest::Approx(test::scalar_f1(1.0)));
  CHECK(test::scalar_f1(1.0) == doctest::Approx(3.0));

  // the correction vanishes at X = 0 for every subset
  CHECK(riccati_step(net, 1, scalar_cov(0.0))(0, 0) == doctest::Approx(1.0));
  const SensorNetwork net2 = test::sys2d();
  for (SubsetId i = 1; i < net2.subset_count(); ++i) {
    const CovMatrix out = riccati_step(net2, i, CovMatrix::Zero(2));
    CHECK(spectral_distance(out.sym(), net2.Q().sym()) <= 1e-14);
  }

  // 2 + sqrt(5) solves p^2 - 4p - 1 = 0, the scalar fixed point
  const double p_star = 2.0 + std::sqrt(5.0);
  CHECK(p_star * p_star - 4.0 * p_star - 1.0 == doctest::Approx(0.0));
  CHECK(riccati_step(net, 1, scalar_cov(p_star))(0, 0) ==
        doctest::Approx(p_star).epsilon(1e-12));

  CHECK_THROWS_AS(riccati_step(net, 0, scalar_cov(1.0)), PreconditionError);
}

TEST_CASE("rare_step dispatches on the subset") {
  const SensorNetwork net = test::sys1d();
  CHECK(rare_step(net, 0, scalar_cov(1.0))(0, 0) == doctest::Approx(5.0));
  CHECK(rare_step(net, 1, scalar_cov(1.0))(0, 0) == doctest::Approx(3.0));

  const SensorNetwork net2 = test::sys2d();
  const CovMatrix out = rare_step(net2, 3, CovMatrix::Zero(2));
  CHECK(spectral_distance(out.sym(), SymMatrix::Identity(2)) <= 1e-14);
}

TEST_CASE("rare_trajectory on degenerate schedules") {
  const SensorNetwork net = test::sys1d();

  RngStream rng(1, 0, 400);
  const Schedule always = Schedule::from_entries({{1, 1.0}});
  const RareTrajectory traj =
      rare_trajectory(net, always, scalar_cov(1.0), 3, rng);
  REQUIRE(traj.horizon() == 3);
  // iterating p -> (5p+1)/(p+1) from 1 climbs monotonically to 2+sqrt(5)
  double p = 1.0;
  for (int t = 0; t < 3; ++t) {
    p = test::scalar_f1(p);
    CHECK(traj.steps[static_cast<std::size_t>(t)].second(0, 0) ==
          doctest::Approx(p).epsilon(1e-14));
  }
  CHECK(traj.steps[0].second(0, 0) == doctest::Approx(3.0));
  CHECK(traj.steps[1].second(0, 0) == doctest::Approx(4.0));
  CHECK(traj.steps[2].second(0, 0) == doctest::Approx(4.2));
}

TEST_CASE("rare_trajectory open loop and preconditions") {
  const SensorNetwork net = test::sys1d();
  RngStream rng(2, 0, 401);
  const Schedule never = Schedule::from_entries({{0, 1.0}});
  const RareTrajectory traj =
      rare_trajectory(net, never, scalar_cov(0.0), 2, rng);
  CHECK(traj.steps[0].second(0, 0) == doctest::Approx(1.0));
  CHECK(traj.steps[1].second(0, 0) == doctest::Approx(5.0));

  CHECK_THROWS_AS(rare_trajectory(net, never, scalar_cov(0.0), 0, rng),
                  PreconditionError);

  // numeric failures carry the step index: 4x growth from 1.2e307 stays
  // finite once, overflows on the second application
  CHECK_THROWS_WITH_AS(
      rare_trajectory(net, never, scalar_cov(1.2e307), 2, rng),
      doctest::Contains("step 1"), NumericError);
}

TEST_CASE("dare_fixed_point on the scalar system") {
  const SensorNetwork net = test::sys1d();
  const FixedPoint fp = dare_fixed_point(net, 1);
  CHECK(std::abs(fp.value(0, 0) - test::kSys1dFixedPoint) <= 1e-9);
  CHECK(fp.residual <= 1e-10 * (1.0 + fp.value.spectral_norm()));
  CHECK(fp.iterations > 0);
}

TEST_CASE("dare_fixed_point decouples on the diagonal system") {
  const SensorNetwork net2 = test::sys2d();
  const FixedPoint fp = dare_fixed_point(net2, 3);
  // each block solves its own scalar quadratic: p^2-4p-1=0 and p^2-9p-1=0
  const double p1 = 2.0 + std::sqrt(5.0);
  const double p2 = (9.0 + std::sqrt(85.0)) / 2.0;
  CHECK(p2 * p2 - 9.0 * p2 - 1.0 == doctest::Approx(0.0));
  CHECK(std::abs(fp.value(0, 0) - p1) <= 1e-9);
  CHECK(std::abs(fp.value(1, 1) - p2) <= 1e-9);
  CHECK(std::abs(fp.value(0, 1)) <= 1e-9);

  // singletons are not detectable pairs
  CHECK_THROWS_AS(dare_fixed_point(net2, 1), PreconditionError);
  CHECK_THROWS_WITH_AS(dare_fixed_point(net2, 2),
                       doctest::Contains("not detectable"),
                       PreconditionError);
}

TEST_CASE("dare_fixed_point needs a stabilizable pair") {
  Eigen::MatrixXd a(1, 1), c(1, 1), r(1, 1);
  a << 2.0;
  c << 1.0;
  r << 1.0;
  const SensorNetwork no_noise(a, CovMatrix::Zero(1), CovMatrix::Identity(1),
                               {Sensor{c, CovMatrix(r)}});
  CHECK_THROWS_WITH_AS(dare_fixed_point(no_noise, 1),
                       doctest::Contains("stabilizable"), PreconditionError);
}

TEST_CASE("dare iteration residuals decrease and converge") {
  const SensorNetwork net = test::sys2d3();
  const StackedObsModel m = net.stacked(4);  // sensor 3 alone, coupled DARE
  const FixedPoint fp = dare_fixed_point(net, 4);
  CHECK(fp.residual <= 1e-12 * (1.0 + fp.value.spectral_norm()));

  // eventually monotone: once past the transient, step sizes shrink until
  // they sink into rounding noise near the fixed point
  const double noise_floor = 1e-9 * (1.0 + fp.value.spectral_norm());
  Eigen::MatrixXd x = net.Q().mat();
  std::vector<double> steps;
  for (int k = 0; k < 200; ++k) {
    const Eigen::MatrixXd next =
        kernel::riccati_apply(net.A(), net.Q().mat(), m.C, m.R.mat(), x);
    steps.push_back(SymMatrix(next - x).spectral_norm());
    x = next;
    if (steps.back() < noise_floor) break;
  }
  REQUIRE(steps.size() > 6);
  for (std::size_t k = 3; k + 1 < steps.size(); ++k) {
    CHECK(steps[k + 1] <= steps[k]);
  }
}

TEST_CASE("order preservation of every map") {
  RngStream rng(23, 0, 402);
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 4);
    const SensorNetwork net =
        test::random_network(dim, 1 + static_cast<int>(rng.next_u64() % 2),
                             rng);
    const CovMatrix x = test::random_psd(dim, rng);
    const Eigen::MatrixXd z = test::random_matrix(dim, dim, rng);
    const CovMatrix y(SymMatrix(x.mat() + z * z.transpose()));
    for (SubsetId i = 0; i < net.subset_count(); ++i) {
      const CovMatrix fx = rare_step(net, i, x);
      const CovMatrix fy = rare_step(net, i, y);
      CHECK(psd_order_leq(fx.sym(), fy.sym(), kPsdTol));
    }
  }
}

TEST_CASE("strong sublinearity with positive definite Q") {
  RngStream rng(29, 0, 403);
  for (int trial = 0; trial < 300; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 3);
    const SensorNetwork net =
        test::random_network(dim, 1 + static_cast<int>(rng.next_u64() % 2),
                             rng);
    const CovMatrix x = test::random_pd(dim, rng, 0.2);
    for (double lambda : {0.1, 0.5, 0.9}) {
      const CovMatrix lx(SymMatrix(lambda * x.mat()));
      for (SubsetId i = 0; i < net.subset_count(); ++i) {
        const CovMatrix f_lx = rare_step(net, i, lx);
        const CovMatrix f_x = rare_step(net, i, x);
        const double gap =
            SymMatrix(f_lx.mat() - lambda * f_x.mat()).min_eigenvalue();
        CHECK(gap > 0.0);
      }
    }
  }
}

TEST_CASE("floor bound: every map output dominates Q") {
  RngStream rng(31, 0, 404);
  for (int trial = 0; trial < 300; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 4);
    const SensorNetwork net = test::random_network(dim, 2, rng);
    const CovMatrix x = test::random_psd(dim, rng);
    for (SubsetId i = 0; i < net.subset_count(); ++i) {
      const CovMatrix out = rare_step(net, i, x);
      const double slack = kPsdTol * (1.0 + out.spectral_norm());
      CHECK(SymMatrix(out.mat() - net.Q().mat()).min_eigenvalue() >= -slack);
    }
  }

  // and therefore every trajectory point from t >= 1 does too
  const SensorNetwork net = test::sys2d();
  const Schedule s = Schedule::from_entries({{0, 0.4}, {1, 0.3}, {3, 0.3}});
  RngStream rng2(7, 0, 405);
  const RareTrajectory traj =
      rare_trajectory(net, s, CovMatrix::Zero(2), 200, rng2);
  for (const auto& [i, p] : traj.steps) {
    const double slack = kPsdTol * (1.0 + p.spectral_norm());
    CHECK(SymMatrix(p.mat() - net.Q().mat()).min_eigenvalue() >= -slack);
  }
}

TEST_CASE("sensor order inside a subset does not change the map") {
  // the same three physical sensors, listed in a different order, with the
  // subset mask remapped accordingly
  RngStream rng(37, 0, 406);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 2;
    const Eigen::MatrixXd a = test::random_matrix(dim, dim, rng);
    const CovMatrix q = test::random_pd(dim, rng, 0.4);
    const CovMatrix p0 = test::random_psd(dim, rng);
    std::vector<Sensor> sensors;
    for (int n = 0; n < 3; ++n) {
      sensors.push_back(Sensor{test::random_matrix(1, dim, rng),
                               test::random_pd(1, rng, 0.5)});
    }
    const SensorNetwork forward(a, q, p0, sensors);
    const SensorNetwork shuffled(
        a, q, p0, {sensors[2], sensors[0], sensors[1]});
    // original sensor k (1-based) sits at position perm[k] in `shuffled`
    const int perm[4] = {0, 2, 3, 1};
    const CovMatrix x = test::random_psd(dim, rng);
    for (SubsetId mask = 1; mask < 8; ++mask) {
      SubsetId remapped = 0;
      for (int s = 1; s <= 3; ++s) {
        if (mask & (SubsetId{1} << (s - 1))) {
          remapped |= SubsetId{1} << (perm[s] - 1);
        }
      }
      const CovMatrix lhs = riccati_step(forward, mask, x);
      const CovMatrix rhs = riccati_step(shuffled, remapped, x);
      CHECK(spectral_distance(lhs.sym(), rhs.sym()) <= 1e-12);
    }
  }
}

TEST_CASE("information form identity on positive definite input") {
  // f_i(X) = A (X^{-1} + C^T R^{-1} C)^{-1} A^T + Q for X > 0: an
  // independent algebraic route to the same value
  RngStream rng(41, 0, 407);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 3);
    const SensorNetwork net = test::random_network(dim, 2, rng);
    const CovMatrix x = test::random_pd(dim, rng, 0.3);
    for (SubsetId i = 1; i < net.subset_count(); ++i) {
      const StackedObsModel m = net.stacked(i);
      const Eigen::MatrixXd info =
          x.mat().inverse() +
          m.C.transpose() * m.R.mat().inverse() * m.C;
      const Eigen::MatrixXd direct =
          net.A() * info.inverse() * net.A().transpose() + net.Q().mat();
      const CovMatrix via_map = riccati_step(net, i, x);
      const double scale = 1.0 + via_map.spectral_norm();
      CHECK(spectral_distance(via_map.sym(), SymMatrix(direct)) <=
            1e-9 * scale);
    }
  }
}
