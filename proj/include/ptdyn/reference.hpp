#pragma once

// Oracles that are independent of the production propagators: instantaneous
// spectra with phase-continuous eigenvectors, tracked spectral projectors and
// their derivatives, the adiabatic evolution
//   dphi_A/dt = [Qdot, Q] phi_A,
// the parallel-transport evolution operator T(t) obeying dT/dt = [Pdot, P] T
// along a co-integrated density, and a small-system von Neumann propagator.
//
// Everything here is oracle-scale: dense eigensolves and matrix flows, meant
// for cross-checking the fast paths, not for production sweeps.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ptdyn/dynamics.hpp"
#include "ptdyn/hamiltonians.hpp"
#include "ptdyn/integrators.hpp"
#include "ptdyn/state.hpp"

namespace ptdyn {

struct Spectrum {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXcd eigenvectors; // column j pairs with eigenvalues[j]
  double gap = std::numeric_limits<double>::infinity();  // lambda_2 - lambda_1
};

inline Spectrum eig_hermitian(const Eigen::MatrixXcd& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("eig_hermitian: matrix must be square");
  require_finite(h, "eig_hermitian");
  const double scale = std::max(1.0, h.norm());
  if ((h - h.adjoint()).norm() > 1e-10 * scale)
    throw std::invalid_argument("eig_hermitian: matrix is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (h + h.adjoint()));
  if (es.info() != Eigen::Success) throw std::runtime_error("eig_hermitian: eigensolve failed");

  Spectrum s;
  s.eigenvalues = es.eigenvalues();
  s.eigenvectors = es.eigenvectors();
  if (h.rows() > 1) s.gap = s.eigenvalues(1) - s.eigenvalues(0);
  return s;
}

// Distance between the tracked lowest-`rank` block and the rest.
inline double tracked_gap(const Spectrum& s, Eigen::Index rank) {
  if (rank < 1 || rank > s.eigenvalues.size())
    throw std::invalid_argument("tracked_gap: rank out of range");
  if (rank == s.eigenvalues.size()) return std::numeric_limits<double>::infinity();
  return s.eigenvalues(rank) - s.eigenvalues(rank - 1);
}

// Rotates each column of s by a unit phase so that its overlap with the same
// column of `previous` is real and positive. Columns with (numerically) zero
// overlap are left alone.
inline void align_phases(Spectrum& s, const Eigen::MatrixXcd& previous) {
  if (previous.rows() != s.eigenvectors.rows() || previous.cols() != s.eigenvectors.cols())
    throw std::invalid_argument("align_phases: shape mismatch");
  for (Eigen::Index j = 0; j < s.eigenvectors.cols(); ++j) {
    const Complex z = previous.col(j).dot(s.eigenvectors.col(j));
    const double a = std::abs(z);
    if (a > 1e-14) s.eigenvectors.col(j) *= std::conj(z) / a;
  }
}

// Instantaneous spectra along a time grid, phase-aligned left to right.
template <class Ham>
std::vector<Spectrum> spectrum_path(const Ham& ham, const std::vector<double>& times) {
  std::vector<Spectrum> out;
  out.reserve(times.size());
  for (double t : times) {
    Spectrum s = eig_hermitian(ham.matrix(t));
    if (!out.empty()) align_phases(s, out.back().eigenvectors);
    out.push_back(std::move(s));
  }
  return out;
}

template <class Ham>
Eigen::MatrixXcd tracked_projector(const Ham& ham, double t, Eigen::Index rank) {
  Spectrum s = eig_hermitian(ham.matrix(t));
  if (tracked_gap(s, rank) < 1e-6)
    throw std::runtime_error("tracked_projector: spectral gap closed");
  auto v = s.eigenvectors.leftCols(rank);
  return v * v.adjoint();
}

// Central-difference derivative of the tracked projector. The projector is
// gauge-free, so no phase alignment is needed between the two eigensolves.
template <class Ham>
Eigen::MatrixXcd q_dot(const Problem<Ham>& p, double t, double dt = 1e-6) {
  if (!(dt > 0)) throw std::invalid_argument("q_dot: dt must be positive");
  if (tracked_gap(eig_hermitian(p.hamiltonian.matrix(t)), p.orbitals) < 1e-6)
    throw std::runtime_error("q_dot: spectral gap closed");
  Eigen::MatrixXcd qp = tracked_projector(p.hamiltonian, t + dt, p.orbitals);
  Eigen::MatrixXcd qm = tracked_projector(p.hamiltonian, t - dt, p.orbitals);
  return (qp - qm) / (2.0 * dt);
}

// Adiabatic evolution of the lowest-`orbitals` frame. The flow is O(1) and
// free of epsilon, so plain RK4 at h_ref is accurate; the generator [Qdot, Q]
// is skew-Hermitian, which keeps the frame orthonormal up to the RK4 error.
template <class Ham>
Trajectory<Eigen::MatrixXcd> adiabatic_reference(const Problem<Ham>& p, double h_ref,
                                                 long stride = 1) {
  const TimeGrid grid = time_grid(p.final_time, h_ref);
  auto f = [&](double t, const Eigen::MatrixXcd& x) -> Eigen::MatrixXcd {
    Eigen::MatrixXcd qd = q_dot(p, t);
    Eigen::MatrixXcd q = tracked_projector(p.hamiltonian, t, p.orbitals);
    return qd * q * x - q * qd * x;
  };
  Eigen::MatrixXcd phi = lowest_orbitals(p.hamiltonian, 0.0, p.orbitals);

  Trajectory<Eigen::MatrixXcd> out;
  out.times.push_back(0.0);
  out.states.push_back(phi);
  for (long k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    phi = rk4_step(f, t, phi, grid.time(k + 1) - t);
    if ((k + 1) % stride == 0 || k + 1 == grid.n_steps) {
      out.times.push_back(grid.time(k + 1));
      out.states.push_back(phi);
    }
  }
  return out;
}

// Parallel-transport evolution operator T(t) with T(0) = I, co-integrated
// with the density P(t) of the exact flow: the pair
//   dP/dt = -(i/eps) [H, P],      dT/dt = [dP/dt, P] T
// is advanced by RK4 on the stacked matrix [P | T]. Throws if T drifts off
// the unitary group by more than 1e-6, the sign that h_ref is too large.
template <class Ham>
Trajectory<Eigen::MatrixXcd> pt_transport_operator(const Problem<Ham>& p, double h_ref,
                                                   long stride = 1) {
  const Eigen::Index d = p.hamiltonian.dim();
  if (d > 64) throw std::invalid_argument("pt_transport_operator: oracle is for small systems");

  auto f = [&](double t, const Eigen::MatrixXcd& y) -> Eigen::MatrixXcd {
    Eigen::MatrixXcd out(d, 2 * d);
    auto pm = y.leftCols(d);
    auto tm = y.rightCols(d);
    Eigen::MatrixXcd pdot = rhs_von_neumann(p.hamiltonian, p.epsilon, t, pm);
    out.leftCols(d) = pdot;
    out.rightCols(d) = pdot * pm * tm - pm * pdot * tm;
    return out;
  };

  Eigen::MatrixXcd y(d, 2 * d);
  y.leftCols(d) = density_from_orbitals(initial_state(p));
  y.rightCols(d) = Eigen::MatrixXcd::Identity(d, d);

  const TimeGrid grid = time_grid(p.final_time, h_ref);
  Trajectory<Eigen::MatrixXcd> out;
  auto store = [&](double t) {
    Eigen::MatrixXcd tr = y.rightCols(d);
    const double defect = (tr.adjoint() * tr - Eigen::MatrixXcd::Identity(d, d)).norm();
    if (!(defect <= 1e-6))  // catches NaN as well
      throw std::runtime_error("pt_transport_operator: unitarity lost, reduce h_ref");
    out.times.push_back(t);
    out.states.push_back(std::move(tr));
  };
  store(0.0);
  for (long k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    y = rk4_step(f, t, y, grid.time(k + 1) - t);
    if ((k + 1) % stride == 0 || k + 1 == grid.n_steps) store(grid.time(k + 1));
  }
  return out;
}

// Small-system von Neumann run started from the problem's own initial frame.
template <class Ham>
Trajectory<Eigen::MatrixXcd> von_neumann_propagate(const Problem<Ham>& p,
                                                   const IntegratorConfig& integ,
                                                   long stride = 1) {
  if (p.hamiltonian.dim() > 64)
    throw std::invalid_argument("von_neumann_propagate: oracle is for small systems");
  Eigen::MatrixXcd p0 = density_from_orbitals(initial_state(p));
  return propagate(p, DynamicsKind::VonNeumann, integ, p0, stride);
}

// |<e_level, phi>|^2 against a phase-continuous spectrum; levels are 0-based.
inline double occupation(const Eigen::VectorXcd& phi, const Spectrum& s, Eigen::Index level) {
  if (level < 0 || level >= s.eigenvectors.cols())
    throw std::invalid_argument("occupation: level out of range");
  if (phi.size() != s.eigenvectors.rows())
    throw std::invalid_argument("occupation: state dimension mismatch");
  return std::norm(s.eigenvectors.col(level).dot(phi));
}

}  // namespace ptdyn
