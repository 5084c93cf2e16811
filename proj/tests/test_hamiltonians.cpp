#include <catch2/catch_amalgamated.hpp>

#include "ptdyn/hamiltonians.hpp"
#include "test_util.hpp"

using namespace ptdyn;

TEST_CASE("toy model eigenvalues follow the avoided-crossing law", "[hamiltonians]") {
  ToyHamiltonian toy{0.5, 1.0};
  for (double t : {0.0, 0.3, 0.5, 0.77, 1.0}) {
    Eigen::MatrixXcd h = toy.matrix(t);
    REQUIRE(hermiticity_defect(h) == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    double r = std::hypot(t - 0.5, 1.0);
    REQUIRE(es.eigenvalues()(0) == Catch::Approx(-r).margin(1e-14));
    REQUIRE(es.eigenvalues()(1) == Catch::Approx(r).margin(1e-14));
    auto [lo, hi] = toy.eigenvalues(t);
    REQUIRE(lo == Catch::Approx(-r).margin(1e-15));
    REQUIRE(hi == Catch::Approx(r).margin(1e-15));
  }
  // at the crossing time the gap is 2 delta
  ToyHamiltonian narrow{0.5, 0.05};
  auto [lo, hi] = narrow.eigenvalues(0.5);
  REQUIRE(hi - lo == Catch::Approx(0.1).margin(1e-15));
}

TEST_CASE("toy apply matches dense assembly and exact derivative", "[hamiltonians]") {
  ToyHamiltonian toy{0.5, 0.7};
  Eigen::MatrixXcd x = test::random_complex(2, 3, 17);
  REQUIRE((toy.apply_linear(0.31, x) - toy.matrix(0.31) * x).norm() <= 1e-14);

  const double e = 1e-6;
  Eigen::MatrixXcd fd = (toy.matrix(0.4 + e) - toy.matrix(0.4 - e)) / (2 * e);
  REQUIRE((fd - toy.dmatrix(0.4)).norm() <= 1e-9);
}

TEST_CASE("well center follows the prescribed excursions", "[hamiltonians]") {
  NlseHamiltonian ham;
  REQUIRE(ham.center(0.1) == Catch::Approx(26.5 + std::exp(-4.0)).epsilon(1e-14));
  REQUIRE(ham.center(0.5) == Catch::Approx(26.0 + 1.5 * std::exp(-4.0)).epsilon(1e-14));
  // far from both excursions the center settles at 25
  REQUIRE(std::abs(ham.center(5.0) - 25.0) <= 1e-12);
}

TEST_CASE("potential is a unit-depth well at the moving center", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 2000, 2.5};
  const Eigen::VectorXd& v = ham.potential(0.3);
  REQUIRE(v.size() == 2000);
  REQUIRE(v.minCoeff() >= -1.0);
  REQUIRE(v.minCoeff() <= -0.999);  // grid point close to the center
  Eigen::Index imin = 0;
  v.minCoeff(&imin);
  REQUIRE(std::abs(ham.positions()[imin] - ham.center(0.3)) <= ham.hx());
  // the well decays to numerical zero at the domain edge
  REQUIRE(std::abs(v[0]) <= 1e-8);
}

TEST_CASE("plane wave diagonalizes the periodic stencil", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 200, 0.0, 0.0};  // free Laplacian
  const Eigen::Index d = ham.grid;
  Eigen::VectorXcd wave(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double x = ham.positions()[k];
    wave[k] = std::exp(Complex(0.0, 2.0 * M_PI * x / ham.length));
  }
  Eigen::VectorXcd hw = ham.apply_linear(0.0, wave);
  const double hx = ham.hx();
  const double symbol = (1.0 - std::cos(2.0 * M_PI * hx / ham.length)) / (hx * hx);
  REQUIRE((hw - symbol * wave).norm() <= 1e-12 * symbol * wave.norm());
}

TEST_CASE("stencil wraps around the boundary", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 16, 0.0, 0.0};
  Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(16);
  e0[0] = 1.0;
  Eigen::VectorXcd he0 = ham.apply_linear(0.0, e0);
  const double c = -0.5 / (ham.hx() * ham.hx());
  REQUIRE(he0[15] == Complex(c, 0.0));
  REQUIRE(he0[1] == Complex(c, 0.0));
  REQUIRE(he0[0] == Complex(-2.0 * c, 0.0));
  REQUIRE(he0.segment(2, 13).norm() == 0.0);
}

TEST_CASE("dense assembly agrees with the stencil on a smoke grid", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 64, 2.5};
  Eigen::MatrixXcd h = ham.matrix(0.2);
  REQUIRE(hermiticity_defect(h) == 0.0);
  Eigen::VectorXcd x = test::random_complex(64, 1, 23);
  REQUIRE((h * x - ham.apply_linear(0.2, x)).norm() <= 1e-12 * (h * x).norm());
}

TEST_CASE("cubic term adds g rho phi on top of the linear action", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 64, 2.5};
  Eigen::VectorXcd x = test::random_complex(64, 1, 29);
  Eigen::VectorXcd lin = ham.apply_linear(0.1, x);
  Eigen::VectorXcd full = apply_h(ham, 0.1, x);
  Eigen::VectorXcd expected = lin.array() + 2.5 * x.cwiseAbs2().array() * x.array();
  REQUIRE((full - expected).norm() <= 1e-14 * expected.norm());

  // gauge covariance of the full action under a global phase
  Complex phase = std::exp(Complex(0.0, 0.83));
  REQUIRE((apply_h(ham, 0.1, (phase * x).eval()) - phase * full).norm() <= 1e-12);
}

TEST_CASE("toy initial state is the analytic ground eigenvector", "[hamiltonians]") {
  ToyHamiltonian toy{0.5, 1.0};
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::MatrixXcd phi = initial_state(prob);
  REQUIRE(phi.cols() == 1);
  REQUIRE(std::abs(phi.col(0).norm() - 1.0) <= 1e-14);

  // (delta, t0 - r) direction, largest component rotated real positive
  const double r = std::hypot(0.5, 1.0);
  Eigen::Vector2cd v;
  v << Complex(1.0, 0.0), Complex((0.5 - r) / 1.0, 0.0);
  v /= v.norm();
  REQUIRE((phi.col(0) - v).norm() <= 1e-12);

  Eigen::MatrixXcd h0 = toy.matrix(0.0);
  REQUIRE((h0 * phi.col(0) + r * phi.col(0)).norm() <= 1e-12);
}

TEST_CASE("frozen Hamiltonian ignores time", "[hamiltonians]") {
  ToyHamiltonian toy{0.5, 1.0};
  DenseHamiltonian frozen = frozen_hamiltonian(toy.matrix(0.5));
  REQUIRE((frozen.matrix(0.0) - frozen.matrix(0.9)).norm() == 0.0);
  REQUIRE(frozen.dim() == 2);
}

TEST_CASE("self-consistent ground state satisfies the eigenresidual bound", "[hamiltonians]") {
  NlseHamiltonian ham{50.0, 250, 2.5};  // coarse smoke grid
  Eigen::VectorXcd phi = nlse_ground_state(ham, 1e-10);
  REQUIRE(std::abs(phi.norm() - 1.0) <= 1e-13);

  Eigen::VectorXcd hphi = ham.apply_linear(0.0, phi);
  hphi.array() += ham.g * phi.cwiseAbs2().array() * phi.array();
  const double mu = phi.dot(hphi).real();
  REQUIRE((hphi - mu * phi).norm() <= 1e-10);

  // localized in the well: mean position within a grid cell of the center
  Eigen::VectorXd rho = phi.cwiseAbs2();
  double xmean = (ham.positions().array() * rho.array()).sum() / rho.sum();
  REQUIRE(std::abs(xmean - ham.center(0.0)) <= 0.5);
}
