#pragma once

// Problem definitions: Hamiltonians, their parameters, and initial states.
//
// A Hamiltonian type provides
//   dim()                 state dimension d
//   nonlinearity()        coupling g of the local cubic term (0 for linear)
//   apply_linear(t, x)    action of the linear part H0(t) on a d x N state
//   matrix(t)             dense assembly of H0(t), used by oracles and
//                         eigendecompositions (costly for large grids)
// The propagation kernels are templated on this shape, so model problems
// defined elsewhere (for instance in tests) plug in without registration.

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ptdyn/state.hpp"

namespace ptdyn {

// Two-level avoided crossing: H(t) = [[t - t0, delta], [delta, -(t - t0)]].
// The instantaneous eigenvalues are -+ sqrt((t - t0)^2 + delta^2).
struct ToyHamiltonian {
  double t0 = 0.5;
  double delta = 1.0;

  Eigen::Index dim() const { return 2; }
  double nonlinearity() const { return 0.0; }

  Eigen::MatrixXcd matrix(double t) const {
    Eigen::MatrixXcd h(2, 2);
    h << Complex(t - t0, 0), Complex(delta, 0), Complex(delta, 0), Complex(-(t - t0), 0);
    return h;
  }

  // dH/dt, exact.
  Eigen::MatrixXcd dmatrix(double) const {
    Eigen::MatrixXcd dh(2, 2);
    dh << Complex(1, 0), Complex(0, 0), Complex(0, 0), Complex(-1, 0);
    return dh;
  }

  std::pair<double, double> eigenvalues(double t) const {
    double r = std::hypot(t - t0, delta);
    return {-r, r};
  }

  template <class Derived>
  typename Derived::PlainObject apply_linear(double t, const Eigen::MatrixBase<Derived>& x) const {
    typename Derived::PlainObject out(x.rows(), x.cols());
    const double s = t - t0;
    out.row(0) = s * x.row(0) + delta * x.row(1);
    out.row(1) = delta * x.row(0) - s * x.row(1);
    return out;
  }
};

// Cubic Schroedinger problem on a periodic grid of d points spanning [0, L):
// H0(t) = -(1/2) Lap + V(x, t) with the three-point Laplacian stencil and a
// Gaussian well V(x, t) = -well_depth * exp(-0.1 (x - R(t))^2) whose center
// R(t) makes two excursions. The cubic term g |phi|^2 phi acts through
// apply_h below; states are l2-normalized coefficient vectors.
struct NlseHamiltonian {
  double length = 50.0;
  Eigen::Index grid = 2000;
  double g = 2.5;
  double well_depth = 1.0;

  NlseHamiltonian() = default;
  NlseHamiltonian(double length_in, Eigen::Index grid_in, double g_in, double depth_in = 1.0)
      : length(length_in), grid(grid_in), g(g_in), well_depth(depth_in) {}

  double hx() const { return length / static_cast<double>(grid); }
  Eigen::Index dim() const { return grid; }
  double nonlinearity() const { return g; }

  double center(double t) const {
    return 25.0 + 1.5 * std::exp(-25.0 * (t - 0.1) * (t - 0.1)) +
           std::exp(-25.0 * (t - 0.5) * (t - 0.5));
  }

  const Eigen::VectorXd& positions() const {
    if (xs_.size() != grid) {
      xs_ = Eigen::VectorXd::LinSpaced(grid, 0.0, hx() * static_cast<double>(grid - 1));
    }
    return xs_;
  }

  const Eigen::VectorXd& potential(double t) const {
    if (v_time_ != t || v_.size() != grid) {
      const double r = center(t);
      v_ = (-0.1 * (positions().array() - r).square()).exp() * (-well_depth);
      vc_ = v_.cast<Complex>();
      v_time_ = t;
    }
    return v_;
  }

  template <class Derived>
  typename Derived::PlainObject apply_linear(double t, const Eigen::MatrixBase<Derived>& x) const {
    if (x.rows() != grid) throw std::invalid_argument("NlseHamiltonian: state has wrong grid size");
    potential(t);
    typename Derived::PlainObject out(x.rows(), x.cols());
    const Eigen::Index d = grid;
    const double c = -0.5 / (hx() * hx());
    out.middleRows(1, d - 2) =
        c * (x.topRows(d - 2) + x.bottomRows(d - 2) - 2.0 * x.middleRows(1, d - 2));
    out.row(0) = c * (x.row(d - 1) + x.row(1) - 2.0 * x.row(0));
    out.row(d - 1) = c * (x.row(d - 2) + x.row(0) - 2.0 * x.row(d - 1));
    out += vc_.asDiagonal() * x;
    return out;
  }

  Eigen::MatrixXcd matrix(double t) const {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(grid, grid);
    const double c = -0.5 / (hx() * hx());
    const Eigen::VectorXd& v = potential(t);
    for (Eigen::Index k = 0; k < grid; ++k) {
      h(k, k) = -2.0 * c + v[k];
      h(k, (k + 1) % grid) += c;
      h(k, (k + grid - 1) % grid) += c;
    }
    return h;
  }

  // Factorized direct solve of (I + z H0(t)) x = b. The implicit steppers
  // precondition their Anderson residuals with this, which removes the grid
  // Laplacian's stiffness from the fixed-point map; only the cubic term and
  // the gauge shifts remain for the mixing to contract.
  struct ShiftedSolve {
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<Complex>>> lu;
    template <class Derived>
    typename Derived::PlainObject operator()(const Eigen::MatrixBase<Derived>& b) const {
      typename Derived::PlainObject out(b.rows(), b.cols());
      for (Eigen::Index j = 0; j < b.cols(); ++j) out.col(j) = lu->solve(b.col(j).eval());
      return out;
    }
  };

  ShiftedSolve shifted_solver(double t, Complex z) const {
    const Eigen::VectorXd& v = potential(t);
    const double c = -0.5 / (hx() * hx());
    std::vector<Eigen::Triplet<Complex>> entries;
    entries.reserve(static_cast<size_t>(3 * grid));
    for (Eigen::Index k = 0; k < grid; ++k) {
      entries.emplace_back(k, k, 1.0 + z * (-2.0 * c + v[k]));
      entries.emplace_back(k, (k + 1) % grid, z * c);
      entries.emplace_back(k, (k + grid - 1) % grid, z * c);
    }
    Eigen::SparseMatrix<Complex> a(grid, grid);
    a.setFromTriplets(entries.begin(), entries.end());
    auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<Complex>>>();
    lu->compute(a);
    if (lu->info() != Eigen::Success)
      throw std::runtime_error("NlseHamiltonian: shifted-solve factorization failed");
    return {std::move(lu)};
  }

 private:
  mutable Eigen::VectorXd xs_;
  mutable Eigen::VectorXd v_;
  mutable Eigen::VectorXcd vc_;
  mutable double v_time_ = std::numeric_limits<double>::quiet_NaN();
};

// Arbitrary dense linear Hamiltonian t -> H(t), for frozen-coefficient or
// synthetic problems. H(t) must be Hermitian.
struct DenseHamiltonian {
  std::function<Eigen::MatrixXcd(double)> matrix_fn;
  Eigen::Index n = 0;

  Eigen::Index dim() const { return n; }
  double nonlinearity() const { return 0.0; }
  Eigen::MatrixXcd matrix(double t) const { return matrix_fn(t); }

  template <class Derived>
  typename Derived::PlainObject apply_linear(double t, const Eigen::MatrixBase<Derived>& x) const {
    return matrix_fn(t) * x;
  }
};

inline DenseHamiltonian frozen_hamiltonian(const Eigen::MatrixXcd& h) {
  return DenseHamiltonian{[h](double) { return h; }, h.rows()};
}

// Row-wise density diag(P) = sum_j |phi_j|^2, the quantity the cubic term
// couples to.
template <class Derived>
Eigen::VectorXd density_diagonal(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseAbs2().rowwise().sum();
}

// Full Hamiltonian action H(t, P) x = H0(t) x + g diag(P) x.
template <class Ham, class Derived>
typename Derived::PlainObject apply_h(const Ham& ham, double t, const Eigen::MatrixBase<Derived>& x) {
  typename Derived::PlainObject out = ham.apply_linear(t, x);
  if (ham.nonlinearity() != 0.0) {
    Eigen::VectorXd rho = density_diagonal(x);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.col(j).array() += ham.nonlinearity() * rho.array() * x.col(j).array();
  }
  return out;
}

template <class Ham>
struct Problem {
  Ham hamiltonian;
  double epsilon = 0.01;
  double final_time = 1.0;
  int orbitals = 1;
};

using AnyHamiltonian = std::variant<ToyHamiltonian, NlseHamiltonian, DenseHamiltonian>;
using AnyProblem = Problem<AnyHamiltonian>;

template <class F>
auto with_concrete(const AnyProblem& p, F&& f) {
  return std::visit(
      [&](const auto& ham) {
        using H = std::decay_t<decltype(ham)>;
        return f(Problem<H>{ham, p.epsilon, p.final_time, p.orbitals});
      },
      p.hamiltonian);
}

// Deterministic phase: rotate each column so its largest-magnitude entry is
// real and positive.
inline void fix_phase(Eigen::Ref<Eigen::MatrixXcd> phi) {
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    Eigen::Index imax = 0;
    phi.col(j).cwiseAbs().maxCoeff(&imax);
    Complex z = phi(imax, j);
    if (std::abs(z) > 0) phi.col(j) *= std::conj(z) / std::abs(z);
  }
}

// Lowest n eigenvectors of the dense linear Hamiltonian at time t, phases
// fixed as above.
template <class Ham>
Eigen::MatrixXcd lowest_orbitals(const Ham& ham, double t, Eigen::Index n) {
  Eigen::MatrixXcd h = ham.matrix(t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("lowest_orbitals: eigensolve failed");
  Eigen::MatrixXcd phi = es.eigenvectors().leftCols(n);
  fix_phase(phi);
  return phi;
}

// Self-consistent ground state of H0(0) + g |phi|^2 by a normalized gradient
// flow, iterated until the eigenresidual ||H phi - mu phi|| drops below tol.
inline Eigen::VectorXcd nlse_ground_state(const NlseHamiltonian& ham, double tol = 1e-10,
                                          long max_iter = 5'000'000) {
  const Eigen::Index d = ham.dim();
  const Eigen::VectorXd& xs = ham.positions();
  const double r0 = ham.center(0.0);

  Eigen::VectorXcd phi =
      (-0.2236 * (xs.array() - r0).square()).exp().matrix().cast<Complex>();
  phi /= phi.norm();

  const double lap_top = 2.0 / (ham.hx() * ham.hx());
  double dt = 1.5 / (lap_top + ham.well_depth + std::abs(ham.g));

  Eigen::VectorXcd hphi(d), res(d);
  for (long it = 0; it < max_iter; ++it) {
    hphi = ham.apply_linear(0.0, phi);
    if (ham.g != 0.0) hphi.array() += ham.g * phi.cwiseAbs2().array() * phi.array();
    const double mu = phi.dot(hphi).real();
    res = hphi - mu * phi;
    if (res.norm() <= tol) {
      fix_phase(phi);
      return phi;
    }
    phi -= dt * res;
    phi /= phi.norm();
  }
  throw std::runtime_error("nlse_ground_state: gradient flow did not reach tolerance");
}

// Default initial state: the lowest N instantaneous orbitals at t = 0; for
// the cubic problem, the self-consistent ground state.
template <class Ham>
Eigen::MatrixXcd initial_state(const Problem<Ham>& p) {
  if constexpr (std::is_same_v<Ham, NlseHamiltonian>) {
    if (p.orbitals != 1)
      throw std::invalid_argument("initial_state: cubic problem is single-orbital");
    return nlse_ground_state(p.hamiltonian);
  } else {
    return lowest_orbitals(p.hamiltonian, 0.0, p.orbitals);
  }
}

inline Eigen::MatrixXcd initial_state(const AnyProblem& p) {
  return with_concrete(p, [](const auto& cp) { return initial_state(cp); });
}

}  // namespace ptdyn
