#pragma once

// Complex orbital states and the density matrices they generate.
//
// States are bare Eigen matrices: a d x N complex matrix holds N orbitals as
// columns, a d x d complex matrix holds a density. Keeping the types unwrapped
// lets the propagation kernels run on fixed-size matrices for small model
// problems and on dynamic ones for grid problems, with no glue in between.

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ptdyn {

using Complex = std::complex<double>;
using OrbitalSet = Eigen::MatrixXcd;     // d x N, orthonormal columns
using DensityMatrix = Eigen::MatrixXcd;  // d x d, Hermitian rank-N projector

// q + i p decomposition of a complex state; join_state reconstructs bit for bit.
struct RealImagPair {
  Eigen::MatrixXd q;
  Eigen::MatrixXd p;
};

template <class Derived>
RealImagPair split_state(const Eigen::MatrixBase<Derived>& phi) {
  return RealImagPair{phi.real(), phi.imag()};
}

inline Eigen::MatrixXcd join_state(const RealImagPair& qp) {
  if (qp.q.rows() != qp.p.rows() || qp.q.cols() != qp.p.cols())
    throw std::invalid_argument("join_state: q and p shapes differ");
  Eigen::MatrixXcd phi(qp.q.rows(), qp.q.cols());
  phi.real() = qp.q;
  phi.imag() = qp.p;
  return phi;
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* where) {
  if (!m.allFinite())
    throw std::invalid_argument(std::string(where) + ": non-finite entries");
}

// P = Phi Phi*. Hermitian by construction; a projector when the columns are
// orthonormal.
template <class Derived>
Eigen::MatrixXcd density_from_orbitals(const Eigen::MatrixBase<Derived>& phi) {
  require_finite(phi, "density_from_orbitals");
  return phi * phi.adjoint();
}

// Gauge-invariant distance ||P_a - P_b||_F between the densities of two
// orbital sets.
template <class DA, class DB>
double gauge_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("gauge_distance: shape mismatch");
  require_finite(a, "gauge_distance");
  require_finite(b, "gauge_distance");
  return (a * a.adjoint() - b * b.adjoint()).norm();
}

inline double hermiticity_defect(const Eigen::MatrixXcd& p) { return (p - p.adjoint()).norm(); }

inline double idempotency_defect(const Eigen::MatrixXcd& p) { return (p * p - p).norm(); }

// ||Phi* Phi - I||_F; zero exactly when the columns are orthonormal.
template <class Derived>
double orthonormality_defect(const Eigen::MatrixBase<Derived>& phi) {
  Eigen::MatrixXcd g = phi.adjoint() * phi;
  g -= Eigen::MatrixXcd::Identity(g.rows(), g.cols());
  return g.norm();
}

// Thin-QR orthonormal basis for the column span of m.
inline Eigen::MatrixXcd orthonormal_columns(const Eigen::MatrixXcd& m) {
  require_finite(m, "orthonormal_columns");
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(m.rows(), m.cols());
}

}  // namespace ptdyn
