#pragma once

// Anderson mixing for fixed-point problems x = F(x).
//
// Iterates in the flattened real coordinates of the complex state. With
// residual r_k = F(x_k) - x_k and difference histories
//   dX = [x_{k-j+1} - x_{k-j}],  dR = [r_{k-j+1} - r_{k-j}],
// the update is
//   x_{k+1} = x_k + beta r_k - (dX + beta dR) gamma,
//   gamma = argmin || r_k - dR gamma ||_2,
// solved through ridge-regularized normal equations. mixing_dim counts stored
// iterates, so mixing_dim - 1 difference columns are kept and mixing_dim = 1
// degenerates to plain damped mixing, as does the warm-up while fewer than
// two iterates exist. On an ill-conditioned least-squares solve the oldest
// column is dropped and the solve retried.

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "ptdyn/state.hpp"

namespace ptdyn {

struct AndersonConfig {
  double step_length = 1.0;  // beta in (0, 1]
  int mixing_dim = 20;       // stored iterates m >= 1
  double tol = 1e-8;         // residual 2-norm target
  int max_iter = 200;        // F evaluations before giving up
};

struct SolveReport {
  int iterations = 0;  // F evaluations spent
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

inline void validate(const AndersonConfig& cfg) {
  if (!(cfg.step_length > 0.0) || cfg.step_length > 1.0)
    throw std::invalid_argument("anderson: step_length must be in (0, 1]");
  if (cfg.mixing_dim < 1) throw std::invalid_argument("anderson: mixing_dim must be >= 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("anderson: tol must be positive");
  if (cfg.max_iter < 1) throw std::invalid_argument("anderson: max_iter must be >= 1");
}

namespace detail {

template <class State>
Eigen::Map<const Eigen::VectorXd> flat(const State& s) {
  static_assert(std::is_same_v<typename State::Scalar, Complex>);
  return {reinterpret_cast<const double*>(s.data()), 2 * s.size()};
}

template <class State>
Eigen::Map<Eigen::VectorXd> flat_mut(State& s) {
  return {reinterpret_cast<double*>(s.data()), 2 * s.size()};
}

}  // namespace detail

// Anderson mixing on the fixed point of f, warm-started at x0. The optional
// preconditioner is applied to the residual before it enters the mixing
// history and the update; convergence is still judged on the raw residual.
// Stiff grid problems hand in the shifted inverse of their linear part here,
// which tames the otherwise expansive stage map.
template <class State, class Map, class Pre = std::nullptr_t>
std::pair<State, SolveReport> anderson_solve(Map&& f, const State& x0, const AndersonConfig& cfg,
                                             Pre&& pre = nullptr) {
  constexpr bool preconditioned = !std::is_same_v<std::decay_t<Pre>, std::nullptr_t>;
  validate(cfg);
  require_finite(x0, "anderson_solve");

  const double beta = cfg.step_length;
  const Eigen::Index n = 2 * x0.size();
  const int hist_cap = cfg.mixing_dim - 1;

  State x = x0;
  Eigen::MatrixXd dx_hist(n, std::max(hist_cap, 1));
  Eigen::MatrixXd dr_hist(n, std::max(hist_cap, 1));
  int cols = 0;

  Eigen::VectorXd xf = detail::flat(x);
  Eigen::VectorXd r(n), xf_prev(n), r_prev(n);
  bool have_prev = false;

  SolveReport report;
  for (int k = 0; k < cfg.max_iter; ++k) {
    State fx = f(x);
    ++report.iterations;
    Eigen::Map<const Eigen::VectorXd> fxf = detail::flat(fx);
    if (!fxf.allFinite()) {
      report.final_residual = std::numeric_limits<double>::infinity();
      return {x, report};
    }
    r = fxf - xf;
    report.final_residual = r.norm();
    if (report.final_residual <= cfg.tol) {
      report.converged = true;
      return {x, report};
    }
    if constexpr (preconditioned) {
      State rs = x;
      detail::flat_mut(rs) = r;
      State pz = pre(rs);
      r = detail::flat(pz);
      if (!r.allFinite()) {
        report.final_residual = std::numeric_limits<double>::infinity();
        return {x, report};
      }
    }

    if (have_prev && hist_cap > 0) {
      if (cols == hist_cap) {
        dx_hist.leftCols(cols - 1) = dx_hist.rightCols(cols - 1).eval();
        dr_hist.leftCols(cols - 1) = dr_hist.rightCols(cols - 1).eval();
        --cols;
      }
      dx_hist.col(cols) = xf - xf_prev;
      dr_hist.col(cols) = r - r_prev;
      ++cols;
    }
    xf_prev = xf;
    r_prev = r;
    have_prev = true;

    Eigen::VectorXd gamma;
    while (cols > 0) {
      auto dr = dr_hist.leftCols(cols);
      Eigen::MatrixXd gram = dr.transpose() * dr;
      const double ridge = 1e-12 * std::max(gram.diagonal().maxCoeff(), 1e-300);
      gram.diagonal().array() += ridge;
      gamma = gram.ldlt().solve(dr.transpose() * r);
      if (gamma.allFinite()) break;
      dx_hist.leftCols(cols - 1) = dx_hist.rightCols(cols - 1).eval();
      dr_hist.leftCols(cols - 1) = dr_hist.rightCols(cols - 1).eval();
      --cols;
    }

    xf += beta * r;
    if (cols > 0)
      xf.noalias() -= (dx_hist.leftCols(cols) + beta * dr_hist.leftCols(cols)) * gamma;
    detail::flat_mut(x) = xf;
  }
  // out of budget: hand back the last iterate whose residual was measured
  detail::flat_mut(x) = xf_prev;
  return {x, report};
}

}  // namespace ptdyn
