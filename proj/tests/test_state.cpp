#include <catch2/catch_amalgamated.hpp>

#include "ptdyn/state.hpp"
#include "test_util.hpp"

using namespace ptdyn;

TEST_CASE("split and join reconstruct the state bit for bit", "[state]") {
  Eigen::MatrixXcd phi = test::random_complex(7, 3, 11);
  RealImagPair qp = split_state(phi);
  Eigen::MatrixXcd back = join_state(qp);
  REQUIRE(back.rows() == phi.rows());
  for (Eigen::Index j = 0; j < phi.cols(); ++j)
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      REQUIRE(back(i, j).real() == phi(i, j).real());
      REQUIRE(back(i, j).imag() == phi(i, j).imag());
    }
}

TEST_CASE("join rejects mismatched shapes", "[state]") {
  RealImagPair qp{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 3)};
  REQUIRE_THROWS_AS(join_state(qp), std::invalid_argument);
}

TEST_CASE("density of orthonormal orbitals is a Hermitian projector", "[state]") {
  Eigen::MatrixXcd phi = test::random_orthonormal(8, 3, 42);
  Eigen::MatrixXcd p = density_from_orbitals(phi);
  REQUIRE(hermiticity_defect(p) <= 1e-12);
  REQUIRE(idempotency_defect(p) <= 1e-10);
  REQUIRE(std::abs(p.trace().real() - 3.0) <= 1e-10);
  REQUIRE(std::abs(p.trace().imag()) <= 1e-12);
}

TEST_CASE("gauge distance vanishes under column-space rotations", "[state]") {
  Eigen::MatrixXcd phi = test::random_orthonormal(8, 3, 7);
  Eigen::MatrixXcd u = test::random_orthonormal(3, 3, 13);  // unitary 3x3
  Eigen::MatrixXcd rotated = phi * u;
  REQUIRE(gauge_distance(phi, rotated) <= 1e-12);
  REQUIRE(gauge_distance(phi, phi * Complex(0.0, 1.0)) <= 1e-12);
}

TEST_CASE("gauge distance separates different spans", "[state]") {
  Eigen::MatrixXcd a = test::random_orthonormal(8, 2, 3);
  Eigen::MatrixXcd b = test::random_orthonormal(8, 2, 4);
  REQUIRE(gauge_distance(a, b) > 1e-3);
}

TEST_CASE("state validation rejects bad input", "[state]") {
  Eigen::MatrixXcd a = test::random_orthonormal(4, 2, 5);
  Eigen::MatrixXcd b = test::random_orthonormal(5, 2, 6);
  REQUIRE_THROWS_AS(gauge_distance(a, b), std::invalid_argument);

  Eigen::MatrixXcd bad = a;
  bad(1, 1) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  REQUIRE_THROWS_AS(density_from_orbitals(bad), std::invalid_argument);
  REQUIRE_THROWS_AS(gauge_distance(a, bad), std::invalid_argument);
}

TEST_CASE("orthonormality defect measures Gram deviation", "[state]") {
  Eigen::MatrixXcd phi = test::random_orthonormal(6, 2, 21);
  REQUIRE(orthonormality_defect(phi) <= 1e-13);
  REQUIRE(orthonormality_defect((2.0 * phi).eval()) > 1.0);
}
