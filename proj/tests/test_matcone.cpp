#include "rare/matcone.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "testutil.hpp"

using namespace rare;

namespace {

SymMatrix diag2(double a, double b) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return SymMatrix(m);
}

}  // namespace

TEST_CASE("SymMatrix symmetrizes and validates") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 0.5, 0.3, 2.0;
  const SymMatrix s(m);
  CHECK(s(0, 1) == doctest::Approx(0.4));
  CHECK(s(0, 1) == s(1, 0));
  CHECK_THROWS_AS(SymMatrix(Eigen::MatrixXd::Zero(2, 3)), PreconditionError);
}

TEST_CASE("CovMatrix rejects indefinite input, clips boundary noise") {
  CHECK_THROWS_AS(CovMatrix(diag2(1.0, -1.0)), NumericError);

  // a tiny negative eigenvalue inside the slack band is clipped to zero
  ClipStats clips;
  const CovMatrix c(diag2(1.0, -1e-10), &clips);
  CHECK(clips.count == 1);
  CHECK(c.min_eigenvalue() >= 0.0);
}

TEST_CASE("psd_order_leq examples") {
  const SymMatrix zero = SymMatrix::Zero(2);
  const SymMatrix id = SymMatrix::Identity(2);
  CHECK(psd_order_leq(zero, id, 0.0));
  CHECK(psd_order_leq(id, id, 0.0));  // reflexive at zero slack

  // Y - X = diag(-1, 1): eigenvalues straight off the diagonal
  const SymMatrix x = diag2(2.0, 0.0);
  const SymMatrix y = diag2(1.0, 1.0);
  CHECK(SymMatrix(y.mat() - x.mat()).min_eigenvalue() ==
        doctest::Approx(-1.0));
  CHECK_FALSE(psd_order_leq(x, y, 1e-12));

  CHECK_THROWS_AS(psd_order_leq(zero, SymMatrix::Identity(3), 0.0),
                  PreconditionError);
  CHECK_THROWS_AS(psd_order_leq(zero, id, -1.0), PreconditionError);
}

TEST_CASE("strict_order_ll examples") {
  const SymMatrix zero = SymMatrix::Zero(2);
  CHECK(strict_order_ll(zero, SymMatrix::Identity(2), 0.5));
  CHECK_FALSE(strict_order_ll(zero, diag2(1.0, 0.0), 1e-6));  // singular gap
  CHECK(strict_order_ll(SymMatrix::Identity(2),
                        SymMatrix(3.0 * Eigen::MatrixXd::Identity(2, 2)),
                        1.5));
  CHECK_THROWS_AS(strict_order_ll(zero, SymMatrix::Identity(3), 0.1),
                  PreconditionError);
}

TEST_CASE("spectral_norm examples") {
  CHECK(spectral_norm(SymMatrix::Identity(3)) == doctest::Approx(1.0));
  CHECK(spectral_norm(diag2(2.0, -5.0)) == doctest::Approx(5.0));

  // [[2,1],[1,2]]: characteristic polynomial l^2 - 4l + 3, roots 1 and 3
  Eigen::MatrixXd m(2, 2);
  m << 2.0, 1.0, 1.0, 2.0;
  const double root_hi = (4.0 + std::sqrt(16.0 - 12.0)) / 2.0;
  CHECK(root_hi == doctest::Approx(3.0));
  CHECK(spectral_norm(SymMatrix(m)) == doctest::Approx(root_hi));
}

TEST_CASE("spectral_norm matches an independent eigendecomposition") {
  RngStream rng(7, 0, 100);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 6);
    const SymMatrix x(test::random_matrix(dim, dim, rng));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.mat());
    const double expect = std::max(std::abs(es.eigenvalues()(0)),
                                   std::abs(es.eigenvalues()(dim - 1)));
    CHECK(std::abs(spectral_norm(x) - expect) <= 1e-9);
    // no Rayleigh quotient of a unit vector can exceed it
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd v = test::random_matrix(dim, 1, rng);
      v.normalize();
      CHECK(std::abs(v.dot(x.mat() * v)) <= spectral_norm(x) + 1e-9);
    }
  }
}

TEST_CASE("chol_solve examples") {
  const CovMatrix id = CovMatrix::Identity(2);
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 2.0, 3.0, 4.0;
  CHECK((chol_solve(id, b) - b).norm() == doctest::Approx(0.0));

  Eigen::MatrixXd s1(1, 1), b1(1, 1);
  s1 << 4.0;
  b1 << 2.0;
  CHECK(chol_solve(CovMatrix(s1), b1)(0, 0) == doctest::Approx(0.5));

  const CovMatrix s(diag2(2.0, 8.0).mat());
  const Eigen::MatrixXd inv = chol_solve(s, Eigen::MatrixXd::Identity(2, 2));
  CHECK(inv(0, 0) == doctest::Approx(0.5));
  CHECK(inv(1, 1) == doctest::Approx(0.125));
  CHECK(inv(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("chol_solve rejects singular input naming the eigenvalue") {
  const CovMatrix s(diag2(1.0, 0.0).mat());
  CHECK_THROWS_WITH_AS(chol_solve(s, Eigen::MatrixXd::Identity(2, 2)),
                       doctest::Contains("min eigenvalue"), NumericError);
  CHECK_THROWS_AS(chol_solve(CovMatrix::Identity(2),
                             Eigen::MatrixXd::Identity(3, 3)),
                  PreconditionError);
}

TEST_CASE("chol_solve residual bound up to condition 1e6") {
  RngStream rng(11, 0, 101);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 2 + static_cast<int>(rng.next_u64() % 5);
    // orthogonal basis from a QR factorization
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(
        test::random_matrix(dim, dim, rng));
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd ev(dim);
    const double cond = std::pow(10.0, 1.0 + 5.0 * rng.uniform01());
    for (int i = 0; i < dim; ++i) {
      ev(i) = std::pow(cond, -rng.uniform01());
    }
    ev(0) = 1.0;
    ev(dim - 1) = 1.0 / cond;
    const CovMatrix s(SymMatrix(q * ev.asDiagonal() * q.transpose()));
    const Eigen::MatrixXd b = test::random_matrix(dim, 3, rng);
    const Eigen::MatrixXd z = chol_solve(s, b);
    CHECK((s.mat() * z - b).norm() <= 1e-10 * (1.0 + b.norm()));
  }
}

TEST_CASE("quantized_key rounding behaviour") {
  const SymMatrix zero = SymMatrix::Zero(3);
  const QuantizedKey k0 = quantized_key(zero, 1e-8);
  for (double c : k0.cells) CHECK(c == 0.0);

  // perturbations below delta/2 land on the same lattice point
  Eigen::MatrixXd e11 = Eigen::MatrixXd::Zero(2, 2);
  e11(0, 0) = 1.0;
  const SymMatrix x = diag2(1.0, 2.0);
  const SymMatrix x_eps(x.mat() + 4e-9 * e11);
  CHECK(quantized_key(x, 1e-8) == quantized_key(x_eps, 1e-8));

  const SymMatrix y = diag2(1.00000004, 2.0);
  CHECK(quantized_key(y, 1e-7) == quantized_key(diag2(1.0, 2.0), 1e-7));

  // well separated entries produce distinct keys
  const SymMatrix far(x.mat() + 5e-8 * e11);
  CHECK_FALSE(quantized_key(x, 1e-8) == quantized_key(far, 1e-8));

  CHECK_THROWS_AS(quantized_key(x, 0.0), PreconditionError);
}

TEST_CASE("cone order properties on random matrices") {
  RngStream rng(3, 0, 102);
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 6);
    const CovMatrix x = test::random_psd(dim, rng);
    const CovMatrix y = test::random_psd(dim, rng);
    CHECK(psd_order_leq(x.sym(), SymMatrix(x.mat() + y.mat()), kPsdTol));
  }
}

TEST_CASE("transitivity of the order on constructed chains") {
  RngStream rng(4, 0, 103);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 6);
    const CovMatrix x = test::random_psd(dim, rng);
    const SymMatrix y(x.mat() + test::random_psd(dim, rng).mat());
    const SymMatrix z(y.mat() + test::random_psd(dim, rng).mat());
    CHECK(psd_order_leq(x.sym(), y, kPsdTol));
    CHECK(psd_order_leq(y, z, kPsdTol));
    CHECK(psd_order_leq(x.sym(), z, kPsdTol));
  }
}
