#pragma once

// Right-hand sides of the propagated equations.
//
// All four formulations are driven through one shape,
//
//   i eps d/dt u = A(t, u),
//
// where A is the effective Hamiltonian action of the chosen dynamics applied
// to u itself. The integrators only ever see rhs(t, u) = -i/eps * A(t, u).
//
// Kinds:
//   Schrodinger               A = H(t, P) u
//   ParallelTransport         A = H u - u (u* H u)
//   ParallelTransportHam      A = H0 u S + cubic terms, S = 2I - Re(u* u);
//                             agrees with ParallelTransport on u* u = I
//   VonNeumann                A = [H, P], u is the d x d density itself
//
// The transport kinds keep the Gram matrix u* u tangentially constant; the
// Hamiltonian variant stays meaningful (and Hermitian) off the unit sphere,
// which is what the implicit midpoint stage evaluations need.

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

#include "ptdyn/hamiltonians.hpp"
#include "ptdyn/state.hpp"

namespace ptdyn {

enum class DynamicsKind { Schrodinger, ParallelTransport, ParallelTransportHam, VonNeumann };

inline const char* to_string(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::Schrodinger: return "schrodinger";
    case DynamicsKind::ParallelTransport: return "pt";
    case DynamicsKind::ParallelTransportHam: return "pt-ham";
    case DynamicsKind::VonNeumann: return "von-neumann";
  }
  return "?";
}

namespace detail {

template <class Ham, class Derived>
typename Derived::PlainObject effective_schrodinger(const Ham& ham, double t,
                                                    const Eigen::MatrixBase<Derived>& x) {
  return apply_h(ham, t, x);
}

template <class Ham, class Derived>
typename Derived::PlainObject effective_pt(const Ham& ham, double t,
                                           const Eigen::MatrixBase<Derived>& x) {
  typename Derived::PlainObject hx = apply_h(ham, t, x);
  auto m = (x.adjoint() * hx).eval();  // N x N, Hermitian for Hermitian H
  hx.noalias() -= x * m;
  return hx;
}

template <class Ham, class Derived>
typename Derived::PlainObject effective_pt_ham(const Ham& ham, double t,
                                               const Eigen::MatrixBase<Derived>& x) {
  const double g = ham.nonlinearity();
  if (g == 0.0) {
    using SmallMat =
        Eigen::Matrix<Complex, Derived::ColsAtCompileTime, Derived::ColsAtCompileTime>;
    typename Derived::PlainObject hx = ham.apply_linear(t, x);
    SmallMat gram = x.adjoint() * x;
    SmallMat s = -0.5 * (gram + gram.conjugate());  // -Re(u* u), kept complex
    s.diagonal().array() += 2.0;
    SmallMat m = x.adjoint() * hx;
    SmallMat gr = 0.5 * (m + m.conjugate());
    typename Derived::PlainObject out = hx * s;
    out.noalias() -= x * gr;
    return out;
  }
  if (x.cols() != 1)
    throw std::invalid_argument("effective_pt_ham: cubic dynamics is single-orbital");
  typename Derived::PlainObject h0x = ham.apply_linear(t, x);
  Eigen::VectorXd rho = density_diagonal(x);
  const double s = 2.0 - x.squaredNorm();
  const double e0 = (x.col(0).dot(h0x.col(0))).real();
  const double e1 = rho.squaredNorm();  // sum |phi_k|^4
  typename Derived::PlainObject out = h0x;
  out.col(0).array() += 2.0 * g * rho.array() * x.col(0).array();
  out *= s;
  out -= (e0 + g * e1) * x;
  out.col(0).array() -= g * rho.array() * x.col(0).array();
  return out;
}

template <class Ham>
Eigen::MatrixXcd effective_von_neumann(const Ham& ham, double t, const Eigen::MatrixXcd& p) {
  if (p.rows() != p.cols()) throw std::invalid_argument("von Neumann state must be square");
  Eigen::MatrixXcd h = ham.matrix(t);
  if (ham.nonlinearity() != 0.0) {
    Eigen::VectorXd rho = ham.nonlinearity() * p.diagonal().real();
    h.diagonal() += rho.cast<Complex>();
  }
  Eigen::MatrixXcd out = h * p;
  out.noalias() -= p * h;
  return out;
}

}  // namespace detail

// A(t, u) with i eps du/dt = A; independent of eps.
template <class Ham, class Derived>
typename Derived::PlainObject effective_h_apply(const Ham& ham, double t,
                                                const Eigen::MatrixBase<Derived>& x,
                                                DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::Schrodinger: return detail::effective_schrodinger(ham, t, x);
    case DynamicsKind::ParallelTransport: return detail::effective_pt(ham, t, x);
    case DynamicsKind::ParallelTransportHam: return detail::effective_pt_ham(ham, t, x);
    case DynamicsKind::VonNeumann: return detail::effective_von_neumann(ham, t, x);
  }
  throw std::logic_error("effective_h_apply: unknown kind");
}

template <class Ham, class Derived>
typename Derived::PlainObject rhs_schrodinger(const Ham& ham, double eps, double t,
                                              const Eigen::MatrixBase<Derived>& x) {
  return Complex(0.0, -1.0 / eps) * detail::effective_schrodinger(ham, t, x);
}

template <class Ham, class Derived>
typename Derived::PlainObject rhs_pt(const Ham& ham, double eps, double t,
                                     const Eigen::MatrixBase<Derived>& x) {
  return Complex(0.0, -1.0 / eps) * detail::effective_pt(ham, t, x);
}

template <class Ham, class Derived>
typename Derived::PlainObject rhs_pt_hamiltonian(const Ham& ham, double eps, double t,
                                                 const Eigen::MatrixBase<Derived>& x) {
  return Complex(0.0, -1.0 / eps) * detail::effective_pt_ham(ham, t, x);
}

template <class Ham>
Eigen::MatrixXcd rhs_von_neumann(const Ham& ham, double eps, double t, const Eigen::MatrixXcd& p) {
  return Complex(0.0, -1.0 / eps) * detail::effective_von_neumann(ham, t, p);
}

// Callable bundling a problem and a dynamics kind; what propagate() consumes.
template <class Ham, class State>
struct Rhs {
  Ham ham;
  double eps;
  DynamicsKind kind;
  State operator()(double t, const State& x) const {
    return Complex(0.0, -1.0 / eps) * effective_h_apply(ham, t, x, kind);
  }
};

template <class State, class Ham>
Rhs<Ham, State> make_rhs(const Problem<Ham>& p, DynamicsKind kind) {
  return Rhs<Ham, State>{p.hamiltonian, p.epsilon, kind};
}

// Dense d x d effective operator for single-orbital states; the action above
// equals this matrix applied to x. Oracle-scale only (assembles ham.matrix).
template <class Ham>
Eigen::MatrixXcd effective_h_matrix(const Ham& ham, double t, const Eigen::VectorXcd& x,
                                    DynamicsKind kind) {
  const Eigen::Index d = ham.dim();
  const double g = ham.nonlinearity();
  Eigen::MatrixXcd h0 = ham.matrix(t);
  Eigen::VectorXd rho = density_diagonal(x);
  Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(d, d);
  switch (kind) {
    case DynamicsKind::Schrodinger:
      return h0 + (g * rho).asDiagonal().toDenseMatrix().cast<Complex>();
    case DynamicsKind::ParallelTransport: {
      Eigen::MatrixXcd h = h0 + (g * rho).asDiagonal().toDenseMatrix().cast<Complex>();
      const double ray = x.dot(h * x).real();
      return h - ray * id;
    }
    case DynamicsKind::ParallelTransportHam: {
      const double s = 2.0 - x.squaredNorm();
      const double e0 = x.dot(h0 * x).real();
      const double e1 = rho.squaredNorm();
      Eigen::MatrixXcd h = h0 + (2.0 * g * rho).asDiagonal().toDenseMatrix().cast<Complex>();
      return h * s - (e0 + g * e1) * id -
             (g * rho).asDiagonal().toDenseMatrix().cast<Complex>();
    }
    case DynamicsKind::VonNeumann:
      throw std::invalid_argument("effective_h_matrix: von Neumann acts on densities");
  }
  throw std::logic_error("effective_h_matrix: unknown kind");
}

}  // namespace ptdyn
