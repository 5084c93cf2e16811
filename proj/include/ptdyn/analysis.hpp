#pragma once

// Error metrics against fine references, log-log fits, turning-point
// detection, physical observables, cost accounting, and the sweep driver
// that produces convergence studies.
//
// The error of a run with step h is
//   e(h) = max over n of || u_n - u_ref(t_n) ||_2
// with u compared in its own representation (psi, phi, or a density). To
// make the comparison exact rather than time-tolerant, sweep steps are
// snapped to integer multiples of a comparison grid cmp_dt and the
// reference is propagated at cmp_dt / ref_subdiv, stored on the comparison
// grid; matching nodes are then pure index arithmetic.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ptdyn/dynamics.hpp"
#include "ptdyn/hamiltonians.hpp"
#include "ptdyn/integrators.hpp"
#include "ptdyn/state.hpp"

namespace ptdyn {

template <class State>
double error_metric(const Trajectory<State>& traj, const Trajectory<State>& ref) {
  if (traj.times.empty() || ref.times.empty())
    throw std::invalid_argument("error_metric: empty trajectory");
  size_t matched = 0;
  double worst = 0.0;
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    auto it = std::lower_bound(ref.times.begin(), ref.times.end(), t - tol);
    if (it == ref.times.end() || std::abs(*it - t) > tol) continue;
    const size_t j = static_cast<size_t>(it - ref.times.begin());
    worst = std::max(worst, (traj.states[i] - ref.states[j]).norm());
    ++matched;
  }
  if (matched == 0) throw std::invalid_argument("error_metric: no common sample times");
  return worst;
}

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline FitResult loglog_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("loglog_fit: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("loglog_fit: need at least two points");
  const size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw std::invalid_argument("loglog_fit: points must be positive and finite");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  FitResult f;
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw std::invalid_argument("loglog_fit: degenerate abscissae");
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  const double sst = syy - sy * sy / n;
  double sse = 0;
  for (size_t i = 0; i < n; ++i) {
    const double r = std::log(ys[i]) - (f.intercept + f.slope * std::log(xs[i]));
    sse += r * r;
  }
  f.r2 = sst > 0 ? 1.0 - sse / sst : 1.0;
  return f;
}

inline double slope_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  return loglog_fit(xs, ys).slope;
}

struct ConvergenceStudy {
  std::string method;
  double eps = 0.0;
  std::vector<double> h_values;   // strictly decreasing
  std::vector<double> errors;     // +inf marks a run with no valid error
  std::vector<long> iterations;   // total solver iterations per run (0 for explicit)
  std::vector<char> diverged;     // failed, non-finite, or above the divergence level
  std::vector<double> walls;      // wall-clock seconds per run
};

struct TurningPoint {
  double h = std::numeric_limits<double>::quiet_NaN();
  bool found = false;
};

namespace detail {

// two-point slope between adjacent samples i and i+1 of a descending sweep
inline double pair_slope(const std::vector<double>& hs, const std::vector<double>& es, size_t i) {
  return std::log(es[i] / es[i + 1]) / std::log(hs[i] / hs[i + 1]);
}

inline TurningPoint scan_onset(const std::vector<double>& hs, const std::vector<double>& es,
                               double h1, double h2) {
  for (size_t i = 0; i + 1 < hs.size(); ++i) {
    if (hs[i] > h2 || hs[i + 1] < h1) continue;
    if (!(es[i + 1] > 0.0) || !std::isfinite(es[i + 1]) || !(es[i] > 0.0)) continue;
    if (pair_slope(hs, es, i) > 1.0) return {hs[i], true};
  }
  return {};
}

}  // namespace detail

// Largest h in [h1, h2] at which the curve enters its principal descent.
// Among maximal runs of consecutive pairs whose log-log slope exceeds 1,
// the run with the largest total log-error drop wins and its coarse end is
// returned. An isolated noisy pair at the saturation level carries almost
// no drop, so it cannot shadow the real onset; on a clean power law the
// whole range is one run and the largest sampled h comes back.
inline TurningPoint turning_point(const std::vector<double>& hs, const std::vector<double>& es,
                                  double h1, double h2) {
  if (hs.size() != es.size()) throw std::invalid_argument("turning_point: length mismatch");
  if (!(h1 < h2)) throw std::invalid_argument("turning_point: need h1 < h2");
  size_t in_range = 0;
  for (double h : hs) in_range += (h >= h1 && h <= h2);
  if (in_range < 6) throw std::invalid_argument("turning_point: need at least 6 samples in range");
  auto qualifies = [&](size_t i) {
    if (hs[i] > h2 || hs[i + 1] < h1) return false;
    if (!(es[i] > 0.0) || !(es[i + 1] > 0.0) || !std::isfinite(es[i + 1])) return false;
    return detail::pair_slope(hs, es, i) > 1.0;
  };
  TurningPoint best;
  double best_drop = 0.0;
  for (size_t i = 0; i + 1 < hs.size();) {
    if (!qualifies(i)) {
      ++i;
      continue;
    }
    const size_t start = i;
    double drop = 0.0;
    while (i + 1 < hs.size() && qualifies(i)) {
      drop += std::log(es[i] / es[i + 1]);
      ++i;
    }
    if (drop > best_drop) {
      best_drop = drop;
      best = {hs[start], true};
    }
  }
  return best;
}

namespace detail {

// study rows flagged diverged carry no slope information; drop them
inline void usable_rows(const ConvergenceStudy& s, std::vector<double>& hs,
                        std::vector<double>& es) {
  for (size_t i = 0; i < s.h_values.size(); ++i) {
    if (s.diverged[i]) continue;
    hs.push_back(s.h_values[i]);
    es.push_back(s.errors[i]);
  }
}

}  // namespace detail

inline TurningPoint turning_point(const ConvergenceStudy& s, double h1, double h2) {
  std::vector<double> hs, es;
  detail::usable_rows(s, hs, es);
  return turning_point(hs, es, h1, h2);
}

// Two-stage detection for PT error curves: a first convergence onset on the
// coarse half of the sweep, a plateau where adjacent slopes fall below 0.3,
// and a second onset below the plateau.
struct PtTurningPoints {
  TurningPoint first;
  TurningPoint second;
  double plateau_level = std::numeric_limits<double>::quiet_NaN();
  bool plateau_found = false;
};

inline PtTurningPoints pt_turning_points(const std::vector<double>& hs,
                                         const std::vector<double>& es) {
  if (hs.size() != es.size() || hs.size() < 6)
    throw std::invalid_argument("pt_turning_points: need at least 6 samples");
  PtTurningPoints out;
  const double h_mid = std::sqrt(hs.front() * hs.back());
  out.first = detail::scan_onset(hs, es, h_mid, hs.front() * (1 + 1e-12));
  if (!out.first.found) return out;

  // plateau: the maximal run of low-slope pairs below the first onset
  size_t start = 0;
  while (start < hs.size() && hs[start] >= out.first.h) ++start;
  size_t best_lo = 0, best_hi = 0;  // node index range [lo, hi]
  size_t lo = 0;
  bool open = false;
  for (size_t i = start; i + 1 < hs.size(); ++i) {
    const bool flat = std::isfinite(es[i]) && std::isfinite(es[i + 1]) && es[i] > 0 &&
                      es[i + 1] > 0 && std::abs(detail::pair_slope(hs, es, i)) < 0.3;
    if (flat && !open) {
      lo = i;
      open = true;
    }
    if (!flat && open) {
      if (i - lo > best_hi - best_lo) {
        best_lo = lo;
        best_hi = i;
      }
      open = false;
    }
  }
  if (open && hs.size() - 1 - lo > best_hi - best_lo) {
    best_lo = lo;
    best_hi = hs.size() - 1;
  }
  if (best_hi == best_lo) return out;

  out.plateau_found = true;
  double acc = 0;
  for (size_t i = best_lo; i <= best_hi; ++i) acc += std::log(es[i]);
  out.plateau_level = std::exp(acc / double(best_hi - best_lo + 1));

  if (best_hi + 1 < hs.size())
    out.second = detail::scan_onset(hs, es, 0.0, hs[best_hi] * (1 + 1e-12));
  return out;
}

inline PtTurningPoints pt_turning_points(const ConvergenceStudy& s) {
  std::vector<double> hs, es;
  detail::usable_rows(s, hs, es);
  return pt_turning_points(hs, es);
}

// ---------------------------------------------------------------------------
// Observables

struct ObservableSeries {
  std::vector<double> times;
  std::vector<double> norms;
  std::vector<double> energies;
  std::vector<double> centers;  // filled only for problems with a spatial grid
};

namespace detail {

template <class Ham, class State>
double energy_of(const Ham& ham, double eps, double t, const State& u, DynamicsKind kind) {
  const double g = ham.nonlinearity();
  if (kind == DynamicsKind::VonNeumann) {
    // Tr(H0 P) plus the mean-field half for the diagonal nonlinearity
    Eigen::MatrixXcd hp = ham.apply_linear(t, u);
    double e = hp.trace().real();
    if (g != 0.0) e += 0.5 * g * u.diagonal().real().array().square().sum();
    return e / (2.0 * eps);
  }

  Eigen::MatrixXcd h0u = ham.apply_linear(t, u);
  const Eigen::MatrixXcd uh0u = u.adjoint() * h0u;
  const double quad = uh0u.trace().real();
  if (kind == DynamicsKind::Schrodinger || kind == DynamicsKind::ParallelTransport) {
    double e = quad;
    if (g != 0.0) e += 0.5 * g * density_diagonal(u).array().square().sum();
    return e / (2.0 * eps);
  }

  // ParallelTransportHam: the modified functional with the (2 - |u|^2) factor
  if (g == 0.0) {
    Eigen::MatrixXd a = uh0u.real();
    Eigen::MatrixXd gram = (u.adjoint() * u).real();
    Eigen::MatrixXd two_minus = -gram;
    two_minus.diagonal().array() += 2.0;
    return (a * two_minus).trace() / (2.0 * eps);
  }
  const double quartic = density_diagonal(u).array().square().sum();
  const double sphere = 2.0 - u.squaredNorm();
  return ((quad + g * quartic) * sphere) / (2.0 * eps) - g * quartic / (4.0 * eps);
}

}  // namespace detail

template <class Ham, class State>
ObservableSeries observables(const Trajectory<State>& traj, const Problem<Ham>& p,
                             DynamicsKind kind) {
  ObservableSeries out;
  out.times = traj.times;
  out.norms.reserve(traj.states.size());
  out.energies.reserve(traj.states.size());
  const bool spatial = std::is_same_v<Ham, NlseHamiltonian>;
  if (spatial) out.centers.reserve(traj.states.size());

  for (size_t k = 0; k < traj.states.size(); ++k) {
    const State& u = traj.states[k];
    out.norms.push_back(u.norm());
    out.energies.push_back(detail::energy_of(p.hamiltonian, p.epsilon, traj.times[k], u, kind));
    if constexpr (std::is_same_v<Ham, NlseHamiltonian>) {
      Eigen::VectorXd rho = kind == DynamicsKind::VonNeumann
                                ? Eigen::VectorXd(u.diagonal().real())
                                : density_diagonal(u);
      out.centers.push_back(p.hamiltonian.positions().dot(rho) / rho.sum());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cost accounting

struct CostRow {
  std::string method;
  double eps = 0.0;
  double h = 0.0;
  double error = 0.0;
  long iterations = 0;
  bool diverged = false;
};

inline std::vector<CostRow> cost_report(const std::vector<ConvergenceStudy>& studies) {
  std::vector<CostRow> rows;
  for (const auto& s : studies)
    for (size_t i = 0; i < s.h_values.size(); ++i)
      rows.push_back({s.method, s.eps, s.h_values[i], s.errors[i], s.iterations[i],
                      s.diverged[i] != 0});
  return rows;
}

// ---------------------------------------------------------------------------
// Sweep driver

struct StudyConfig {
  std::vector<double> h_values;   // snapped to multiples of cmp_dt, deduplicated
  double cmp_dt = 1e-4;           // comparison grid spacing
  long ref_subdiv = 10;           // reference runs at cmp_dt / ref_subdiv
  Scheme ref_scheme = Scheme::Rk4;
  AndersonConfig solver{};        // solver for the sweep runs
  AndersonConfig ref_solver{1.0, 20, 1e-12, 400};
  double diverged_above = 1e3;
  std::string label;
  int jobs = 1;
};

namespace detail {

inline std::vector<long> snapped_multiples(const std::vector<double>& hs, double cmp_dt,
                                           double final_time) {
  const long n_cmp = std::llround(final_time / cmp_dt);
  std::vector<long> ks;
  for (double h : hs) {
    long k = std::llround(h / cmp_dt);
    k = std::clamp(k, 1L, n_cmp);
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  }
  std::sort(ks.rbegin(), ks.rend());
  return ks;
}

}  // namespace detail

// Runs the h sweep of one (problem, dynamics, scheme) triple against a fine
// self-reference of the same dynamics kind. Runs stream their error against
// the stored reference; states are never accumulated.
template <class Ham, class State>
ConvergenceStudy convergence_study(const Problem<Ham>& prob, DynamicsKind kind, Scheme scheme,
                                   const State& u0, const StudyConfig& cfg) {
  if (cfg.h_values.empty()) throw std::invalid_argument("convergence_study: empty h sweep");
  if (!(cfg.cmp_dt > 0) || cfg.ref_subdiv < 1)
    throw std::invalid_argument("convergence_study: bad comparison grid");

  const std::vector<long> ks = detail::snapped_multiples(cfg.h_values, cfg.cmp_dt, prob.final_time);
  const long n_cmp = std::llround(prob.final_time / cfg.cmp_dt);

  IntegratorConfig ref_integ;
  ref_integ.scheme = cfg.ref_scheme;
  ref_integ.h = cfg.cmp_dt / static_cast<double>(cfg.ref_subdiv);
  ref_integ.solver = cfg.ref_solver;
  Trajectory<State> ref = propagate(prob, kind, ref_integ, u0, cfg.ref_subdiv);
  if (ref.failed) throw std::runtime_error("convergence_study: reference run failed: " + ref.failure);
  if (static_cast<long>(ref.states.size()) != n_cmp + 1)
    throw std::logic_error("convergence_study: reference grid mismatch");

  ConvergenceStudy out;
  out.method = cfg.label.empty() ? std::string(to_string(scheme)) : cfg.label;
  out.eps = prob.epsilon;
  out.h_values.resize(ks.size());
  out.errors.assign(ks.size(), 0.0);
  out.iterations.assign(ks.size(), 0);
  out.diverged.assign(ks.size(), 0);
  out.walls.assign(ks.size(), 0.0);

  auto run_one = [&](size_t i) {
    const auto tick = std::chrono::steady_clock::now();
    const long k = ks[i];
    const double h = cfg.cmp_dt * static_cast<double>(k);
    out.h_values[i] = h;
    Problem<Ham> local = prob;  // own hamiltonian copy: caches are not shared
    IntegratorConfig integ;
    integ.scheme = scheme;
    integ.h = h;
    integ.solver = cfg.solver;
    auto f = make_rhs<State>(local, kind);
    const PreconditionerFactory<State> prefac = make_shifted_preconditioner<State>(local, kind, scheme);
    const TimeGrid grid = time_grid(local.final_time, h);

    double err = 0.0;
    long iters = 0;
    std::string failure;
    bool ok = propagate_observed(
        f, grid, integ, State(u0),
        [&](long n, double, const State& y, const SolveReport& rep) {
          iters += rep.iterations;
          const long m = n == grid.n_steps ? n_cmp : n * k;
          err = std::max(err, (y - ref.states[static_cast<size_t>(m)]).norm());
        },
        &failure, prefac);
    if (!ok || !std::isfinite(err)) {
      out.errors[i] = std::numeric_limits<double>::infinity();
      out.diverged[i] = 1;
    } else {
      out.errors[i] = err;
      out.diverged[i] = err > cfg.diverged_above;
    }
    out.iterations[i] = iters;
    out.walls[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < ks.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (size_t i = static_cast<size_t>(w); i < ks.size(); i += static_cast<size_t>(jobs))
          run_one(i);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace ptdyn
