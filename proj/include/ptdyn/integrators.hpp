#pragma once

// Time steppers and the propagation driver.
//
// rk4_step is the classical explicit scheme. gl2_step is the one-stage Gauss
// collocation method (implicit midpoint)
//   y_{n+1} = y_n + h f(t_n + h/2, (y_n + y_{n+1}) / 2),
// cn_step the trapezoidal rule
//   y_{n+1} = y_n + h/2 (f(t_n, y_n) + f(t_{n+1}, y_{n+1})).
// Both implicit stages are solved by Anderson mixing warm-started at y_n.
//
// The driver walks a uniform grid with the step count rounded from T/h and
// the last step shrunk or stretched to land on T exactly. A failed step
// (solver not converged, or a non-finite state) aborts the run and is
// reported on the trajectory; with retry_halve the failing step is first
// retried as two half steps, recursively up to max_halvings deep.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptdyn/anderson.hpp"
#include "ptdyn/dynamics.hpp"
#include "ptdyn/hamiltonians.hpp"

namespace ptdyn {

enum class Scheme { Rk4, Gl2, Cn };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Rk4: return "rk4";
    case Scheme::Gl2: return "gl2";
    case Scheme::Cn: return "cn";
  }
  return "?";
}

struct IntegratorConfig {
  Scheme scheme = Scheme::Gl2;
  double h = 1e-3;
  AndersonConfig solver{};
  bool retry_halve = false;
  int max_halvings = 8;
};

struct TimeGrid {
  double h = 0.0;
  long n_steps = 0;
  double final_time = 0.0;
  // t_k = k h except for the last node, which is pinned to final_time
  double time(long k) const {
    return k >= n_steps ? final_time : h * static_cast<double>(k);
  }
};

inline TimeGrid time_grid(double final_time, double h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("time_grid: h must be positive and finite");
  if (!(final_time > 0.0) || !std::isfinite(final_time))
    throw std::invalid_argument("time_grid: final time must be positive and finite");
  long n = std::llround(final_time / h);
  if (n < 1) n = 1;
  return {h, n, final_time};
}

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<SolveReport> reports;  // per completed step; empty for rk4
  std::map<std::string, std::vector<double>> observables;
  bool failed = false;
  std::string failure;

  long total_iterations() const {
    long s = 0;
    for (const auto& r : reports) s += r.iterations;
    return s;
  }
};

template <class Rhs, class State>
State rk4_step(Rhs&& f, double t, const State& y, double h) {
  State k1 = f(t, y);
  State k2 = f(t + 0.5 * h, (y + (0.5 * h) * k1).eval());
  State k3 = f(t + 0.5 * h, (y + (0.5 * h) * k2).eval());
  State k4 = f(t + h, (y + h * k3).eval());
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Residual preconditioner for one implicit stage, and its factory producing
// the stage's instance from (evaluation time, step size). Empty functions
// mean "solve unpreconditioned"; only grid Hamiltonians exposing a shifted
// solver install non-empty ones.
template <class State>
using Preconditioner = std::function<State(const State&)>;
template <class State>
using PreconditionerFactory = std::function<Preconditioner<State>(double, double)>;

template <class Ham>
concept HasShiftedSolver = requires(const Ham& ham, double t, Complex z) {
  ham.shifted_solver(t, z);
};

// The residual Jacobian of both implicit stages is -(I + i h/(2eps) H), so
// the natural preconditioner is the inverse of the shifted linear part.
template <class State, class Ham>
PreconditionerFactory<State> make_shifted_preconditioner(const Problem<Ham>& p, DynamicsKind kind,
                                                         Scheme scheme) {
  if constexpr (HasShiftedSolver<Ham>) {
    if (kind != DynamicsKind::VonNeumann && scheme != Scheme::Rk4) {
      const Ham* ham = &p.hamiltonian;
      const double eps = p.epsilon;
      return [ham, eps](double t, double h) -> Preconditioner<State> {
        auto solve = ham->shifted_solver(t, Complex(0.0, h / (2.0 * eps)));
        return [solve](const State& r) -> State { return solve(r); };
      };
    }
  }
  return {};
}

template <class Rhs, class State>
std::pair<State, SolveReport> implicit_midpoint_step(Rhs&& f, double t, const State& y, double h,
                                                     const AndersonConfig& solver,
                                                     const Preconditioner<State>& pre = {}) {
  const double tm = t + 0.5 * h;
  auto stage = [&](const State& x) -> State {
    return y + h * f(tm, (0.5 * (y + x)).eval());
  };
  return pre ? anderson_solve(stage, y, solver, pre) : anderson_solve(stage, y, solver);
}

template <class Rhs, class State>
std::pair<State, SolveReport> trapezoid_step(Rhs&& f, double t, const State& y, double h,
                                             const AndersonConfig& solver,
                                             const Preconditioner<State>& pre = {}) {
  State fn = f(t, y);
  auto stage = [&](const State& x) -> State {
    return y + (0.5 * h) * (fn + f(t + h, x));
  };
  return pre ? anderson_solve(stage, y, solver, pre) : anderson_solve(stage, y, solver);
}

// Problem-level wrappers with the dynamics kind spelled out.
template <class Ham, class State>
State rk4_step(const Problem<Ham>& p, DynamicsKind kind, double t, const State& phi, double h) {
  return rk4_step(make_rhs<State>(p, kind), t, phi, h);
}

template <class Ham, class State>
std::pair<State, SolveReport> gl2_step(const Problem<Ham>& p, DynamicsKind kind, double t,
                                       const State& phi, double h, const AndersonConfig& solver) {
  const auto prefac = make_shifted_preconditioner<State>(p, kind, Scheme::Gl2);
  return implicit_midpoint_step(make_rhs<State>(p, kind), t, phi, h, solver,
                                prefac ? prefac(t + 0.5 * h, h) : Preconditioner<State>{});
}

template <class Ham, class State>
std::pair<State, SolveReport> cn_step(const Problem<Ham>& p, DynamicsKind kind, double t,
                                      const State& phi, double h, const AndersonConfig& solver) {
  const auto prefac = make_shifted_preconditioner<State>(p, kind, Scheme::Cn);
  return trapezoid_step(make_rhs<State>(p, kind), t, phi, h, solver,
                        prefac ? prefac(t + h, h) : Preconditioner<State>{});
}

namespace detail {

template <class Rhs, class State>
bool advance(Rhs&& f, const IntegratorConfig& cfg, double t, double h, State& y, SolveReport& rep,
             int depth, const PreconditionerFactory<State>& prefac) {
  bool ok = false;
  if (cfg.scheme == Scheme::Rk4) {
    State next = rk4_step(f, t, y, h);
    if (next.allFinite()) {
      y = std::move(next);
      ok = true;
    }
  } else {
    Preconditioner<State> pre;
    if (prefac) pre = prefac(cfg.scheme == Scheme::Gl2 ? t + 0.5 * h : t + h, h);
    auto [next, r] = cfg.scheme == Scheme::Gl2 ? implicit_midpoint_step(f, t, y, h, cfg.solver, pre)
                                               : trapezoid_step(f, t, y, h, cfg.solver, pre);
    rep.iterations += r.iterations;
    rep.final_residual = r.final_residual;
    if (r.converged && next.allFinite()) {
      y = std::move(next);
      ok = true;
    }
  }
  if (ok) return true;
  if (cfg.retry_halve && depth < cfg.max_halvings) {
    State saved = y;
    if (advance(f, cfg, t, 0.5 * h, y, rep, depth + 1, prefac) &&
        advance(f, cfg, t + 0.5 * h, 0.5 * h, y, rep, depth + 1, prefac))
      return true;
    y = saved;
  }
  return false;
}

}  // namespace detail

// Streams (step index, time, state, step report) into obs, starting with the
// initial state at index 0. Returns false and fills *failure on abort.
template <class Rhs, class State, class Observer>
bool propagate_observed(Rhs&& f, const TimeGrid& grid, const IntegratorConfig& cfg, State y,
                        Observer&& obs, std::string* failure = nullptr,
                        const PreconditionerFactory<State>& prefac = {}) {
  obs(0L, grid.time(0), y, SolveReport{});
  for (long k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const double h = grid.time(k + 1) - t;
    SolveReport rep;
    if (!detail::advance(f, cfg, t, h, y, rep, 0, prefac)) {
      if (failure) {
        *failure = std::string(to_string(cfg.scheme)) + " step failed at t = " + std::to_string(t);
        if (cfg.scheme != Scheme::Rk4)
          *failure += ", solver residual " + std::to_string(rep.final_residual) + " after " +
                      std::to_string(rep.iterations) + " iterations";
        else
          *failure += ", non-finite state";
      }
      return false;
    }
    rep.converged = true;
    obs(k + 1, grid.time(k + 1), y, rep);
  }
  return true;
}

// Stored-trajectory driver. Keeps every stride-th node plus the final one;
// on failure the stored prefix is kept and the trajectory is marked failed.
template <class Ham, class State>
Trajectory<State> propagate(const Problem<Ham>& prob, DynamicsKind kind,
                            const IntegratorConfig& cfg, const State& phi0, long stride = 1) {
  require_finite(phi0, "propagate");
  validate(cfg.solver);
  if (stride < 1) throw std::invalid_argument("propagate: stride must be >= 1");
  if (kind == DynamicsKind::VonNeumann) {
    if (phi0.rows() != phi0.cols()) throw std::invalid_argument("propagate: density must be square");
  } else if (phi0.cols() != prob.orbitals) {
    throw std::invalid_argument("propagate: initial state has wrong orbital count");
  }

  const TimeGrid grid = time_grid(prob.final_time, cfg.h);
  auto f = make_rhs<State>(prob, kind);
  const PreconditionerFactory<State> prefac = make_shifted_preconditioner<State>(prob, kind, cfg.scheme);

  Trajectory<State> out;
  out.times.reserve(static_cast<size_t>(grid.n_steps / stride) + 2);
  if (cfg.scheme != Scheme::Rk4) out.reports.reserve(static_cast<size_t>(grid.n_steps));
  bool ok = propagate_observed(
      f, grid, cfg, phi0,
      [&](long k, double t, const State& y, const SolveReport& rep) {
        if (k > 0 && cfg.scheme != Scheme::Rk4) out.reports.push_back(rep);
        if (k % stride == 0 || k == grid.n_steps) {
          out.times.push_back(t);
          out.states.push_back(y);
        }
      },
      &out.failure, prefac);
  out.failed = !ok;
  return out;
}

}  // namespace ptdyn
