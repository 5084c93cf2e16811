#pragma once

// Config-driven experiment runner. A run is described by one JSON file; every
// command materializes all defaults, echoes the full effective config as a
// CSV comment preamble, and writes floating point with 17 significant digits,
// so a result file can be reproduced bit-exactly from its own header.
//
// Commands: propagate (one trajectory), converge (error vs h), scaling
// (slopes across epsilon), turning-point (convergence onset detection).
// Exit codes: 0 success, 1 numerical failure, 2 usage error.

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptdyn/analysis.hpp"
#include "ptdyn/dynamics.hpp"
#include "ptdyn/hamiltonians.hpp"
#include "ptdyn/integrators.hpp"

namespace ptdyn {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Method table

struct Method {
  const char* name;
  DynamicsKind kind;
  Scheme scheme;
};

inline constexpr std::array<Method, 6> kMethods{{
    {"s-rk4", DynamicsKind::Schrodinger, Scheme::Rk4},
    {"pt-rk4", DynamicsKind::ParallelTransport, Scheme::Rk4},
    {"s-gl2", DynamicsKind::Schrodinger, Scheme::Gl2},
    {"pt-gl2", DynamicsKind::ParallelTransport, Scheme::Gl2},
    {"pt-ham-gl2", DynamicsKind::ParallelTransportHam, Scheme::Gl2},
    {"pt-cn", DynamicsKind::ParallelTransport, Scheme::Cn},
}};

inline std::string method_names() {
  std::string out;
  for (const Method& m : kMethods) {
    if (!out.empty()) out += ", ";
    out += m.name;
  }
  return out;
}

inline const Method& find_method(const std::string& name) {
  for (const Method& m : kMethods)
    if (name == m.name) return m;
  throw UsageError("unknown method '" + name + "' (valid: " + method_names() + ")");
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "rk4") return Scheme::Rk4;
  if (name == "gl2") return Scheme::Gl2;
  if (name == "cn") return Scheme::Cn;
  throw UsageError("unknown scheme '" + name + "' (valid: rk4, gl2, cn)");
}

// ---------------------------------------------------------------------------
// Run configuration

struct ReferenceSettings {
  std::string scheme;
  double cmp_dt = 0.0;
  long subdiv = 0;
  double tol = 1e-12;
  int max_iter = 400;
};

struct RunConfig {
  // problem
  std::string problem_kind;  // "toy" | "nlse"
  double t0 = 0.5;
  double delta = 1.0;
  bool frozen = false;     // freeze the toy matrix at a fixed time
  double freeze_at = 0.5;
  double length = 50.0;
  long grid = 2000;
  double g = 2.5;
  double depth = 1.0;
  double epsilon = 0.01;
  double final_time = 1.0;
  int orbitals = 1;
  // run
  std::vector<std::string> methods;
  double h = 0.0;
  std::vector<double> h_sweep;
  std::vector<double> eps_sweep;
  std::string scaling_mode = "fixed-h";
  double fixed_h = 1e-4;
  AndersonConfig anderson{};
  ReferenceSettings reference{};
  std::string output = "out.csv";
  long stride = 1;
  unsigned long seed = 0;
  bool retry_halve = false;
  bool observables_only = false;
  bool timings = false;
  int jobs = 1;
  double diverged_above = 1e3;
};

namespace cli_detail {

using nlohmann::json;

inline void check_keys(const json& obj, const char* where,
                       std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) throw UsageError(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

inline double jnum(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw UsageError(std::string("'") + key + "' must be a number");
  return obj[key].get<double>();
}

inline long jint(const json& obj, const char* key, long fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) throw UsageError(std::string("'") + key + "' must be an integer");
  return obj[key].get<long>();
}

inline bool jbool(const json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) throw UsageError(std::string("'") + key + "' must be a boolean");
  return obj[key].get<bool>();
}

inline std::string jstr(const json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw UsageError(std::string("'") + key + "' must be a string");
  return obj[key].get<std::string>();
}

inline std::vector<double> jnum_list(const json& obj, const char* key) {
  std::vector<double> out;
  if (!obj.contains(key)) return out;
  if (!obj[key].is_array()) throw UsageError(std::string("'") + key + "' must be an array");
  for (const auto& v : obj[key]) {
    if (!v.is_number()) throw UsageError(std::string("'") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace cli_detail

inline RunConfig parse_run_config(const nlohmann::json& j, const std::string& command) {
  using namespace cli_detail;
  if (!j.is_object()) throw UsageError("config root must be an object");
  check_keys(j, "config",
             {"problem", "methods", "h", "h_sweep", "eps_sweep", "scaling", "anderson",
              "reference", "output", "stride", "seed", "retry_halve", "observables_only",
              "timings", "jobs", "diverged_above"});

  RunConfig cfg;
  if (!j.contains("problem") || !j["problem"].is_object())
    throw UsageError("config needs a 'problem' object");
  const json& pj = j["problem"];
  cfg.problem_kind = jstr(pj, "kind", "");
  if (cfg.problem_kind == "toy") {
    check_keys(pj, "problem",
               {"kind", "t0", "delta", "freeze_at", "epsilon", "final_time", "orbitals"});
    cfg.t0 = jnum(pj, "t0", cfg.t0);
    cfg.delta = jnum(pj, "delta", cfg.delta);
    if (pj.contains("freeze_at")) {
      cfg.frozen = true;
      cfg.freeze_at = jnum(pj, "freeze_at", cfg.t0);
    }
  } else if (cfg.problem_kind == "nlse") {
    check_keys(pj, "problem",
               {"kind", "length", "grid", "g", "depth", "epsilon", "final_time", "orbitals"});
    cfg.length = jnum(pj, "length", cfg.length);
    cfg.grid = jint(pj, "grid", cfg.grid);
    cfg.g = jnum(pj, "g", cfg.g);
    cfg.depth = jnum(pj, "depth", cfg.depth);
    if (cfg.grid < 2) throw UsageError("'grid' must be at least 2");
  } else {
    throw UsageError("problem kind must be 'toy' or 'nlse'");
  }
  cfg.epsilon = jnum(pj, "epsilon", cfg.epsilon);
  cfg.final_time = jnum(pj, "final_time", cfg.final_time);
  cfg.orbitals = static_cast<int>(jint(pj, "orbitals", cfg.orbitals));
  if (!(cfg.epsilon > 0) || !(cfg.final_time > 0) || cfg.orbitals < 1)
    throw UsageError("epsilon, final_time, orbitals must be positive");

  if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty())
    throw UsageError("config needs a nonempty 'methods' array");
  for (const auto& m : j["methods"]) {
    if (!m.is_string()) throw UsageError("'methods' must hold strings");
    find_method(m.get<std::string>());  // validates, lists valid names on failure
    cfg.methods.push_back(m.get<std::string>());
  }

  cfg.h = jnum(j, "h", cfg.h);
  cfg.h_sweep = jnum_list(j, "h_sweep");
  cfg.eps_sweep = jnum_list(j, "eps_sweep");
  if (cfg.eps_sweep.empty()) cfg.eps_sweep = {cfg.epsilon};
  for (double e : cfg.eps_sweep)
    if (!(e > 0)) throw UsageError("'eps_sweep' values must be positive");
  for (double h : cfg.h_sweep)
    if (!(h > 0)) throw UsageError("'h_sweep' values must be positive");

  if (j.contains("scaling")) {
    const json& sj = j["scaling"];
    if (!sj.is_object()) throw UsageError("'scaling' must be an object");
    check_keys(sj, "scaling", {"mode", "fixed_h"});
    cfg.scaling_mode = jstr(sj, "mode", cfg.scaling_mode);
    cfg.fixed_h = jnum(sj, "fixed_h", cfg.fixed_h);
  }
  if (cfg.scaling_mode != "fixed-h" && cfg.scaling_mode != "turning")
    throw UsageError("scaling mode must be 'fixed-h' or 'turning'");

  if (j.contains("anderson")) {
    const json& aj = j["anderson"];
    if (!aj.is_object()) throw UsageError("'anderson' must be an object");
    check_keys(aj, "anderson", {"step_length", "mixing_dim", "tol", "max_iter"});
    cfg.anderson.step_length = jnum(aj, "step_length", cfg.anderson.step_length);
    cfg.anderson.mixing_dim = static_cast<int>(jint(aj, "mixing_dim", cfg.anderson.mixing_dim));
    cfg.anderson.tol = jnum(aj, "tol", cfg.anderson.tol);
    cfg.anderson.max_iter = static_cast<int>(jint(aj, "max_iter", cfg.anderson.max_iter));
  }
  try {
    validate(cfg.anderson);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const bool toy = cfg.problem_kind == "toy";
  cfg.reference.scheme = toy ? "rk4" : "gl2";
  cfg.reference.cmp_dt = toy ? 1e-4 : 5e-4;
  cfg.reference.subdiv = toy ? 10 : 50;
  if (j.contains("reference")) {
    const json& rj = j["reference"];
    if (!rj.is_object()) throw UsageError("'reference' must be an object");
    check_keys(rj, "reference", {"scheme", "cmp_dt", "subdiv", "tol", "max_iter"});
    cfg.reference.scheme = jstr(rj, "scheme", cfg.reference.scheme);
    cfg.reference.cmp_dt = jnum(rj, "cmp_dt", cfg.reference.cmp_dt);
    cfg.reference.subdiv = jint(rj, "subdiv", cfg.reference.subdiv);
    cfg.reference.tol = jnum(rj, "tol", cfg.reference.tol);
    cfg.reference.max_iter = static_cast<int>(jint(rj, "max_iter", cfg.reference.max_iter));
  }
  parse_scheme(cfg.reference.scheme);
  if (!(cfg.reference.cmp_dt > 0) || cfg.reference.subdiv < 1)
    throw UsageError("reference cmp_dt must be positive and subdiv at least 1");

  cfg.output = jstr(j, "output", cfg.output);
  cfg.stride = jint(j, "stride", cfg.stride);
  cfg.seed = static_cast<unsigned long>(jint(j, "seed", static_cast<long>(cfg.seed)));
  cfg.retry_halve = jbool(j, "retry_halve", cfg.retry_halve);
  cfg.observables_only = jbool(j, "observables_only", cfg.observables_only);
  cfg.timings = jbool(j, "timings", cfg.timings);
  cfg.jobs = static_cast<int>(jint(j, "jobs", cfg.jobs));
  cfg.diverged_above = jnum(j, "diverged_above", cfg.diverged_above);
  if (cfg.stride < 1 || cfg.jobs < 1) throw UsageError("stride and jobs must be at least 1");

  // per-command requirements
  if (command == "propagate") {
    if (cfg.methods.size() != 1) throw UsageError("propagate takes exactly one method");
    if (!(cfg.h > 0)) throw UsageError("propagate needs a positive 'h'");
  } else if (command == "converge" || command == "turning-point") {
    if (cfg.h_sweep.empty()) throw UsageError(command + " needs a nonempty 'h_sweep'");
  } else if (command == "scaling") {
    if (cfg.eps_sweep.size() < 2) throw UsageError("scaling needs an 'eps_sweep' with >= 2 values");
    if (cfg.scaling_mode == "turning" && cfg.h_sweep.empty())
      throw UsageError("turning-mode scaling needs a nonempty 'h_sweep'");
    if (cfg.scaling_mode == "fixed-h" && !(cfg.fixed_h > 0))
      throw UsageError("fixed-h scaling needs a positive 'fixed_h'");
  } else {
    throw UsageError("unknown command '" + command + "'");
  }
  return cfg;
}

inline nlohmann::json effective_json(const RunConfig& cfg) {
  nlohmann::json j;
  nlohmann::json pj;
  pj["kind"] = cfg.problem_kind;
  if (cfg.problem_kind == "toy") {
    pj["t0"] = cfg.t0;
    pj["delta"] = cfg.delta;
    if (cfg.frozen) pj["freeze_at"] = cfg.freeze_at;
  } else {
    pj["length"] = cfg.length;
    pj["grid"] = cfg.grid;
    pj["g"] = cfg.g;
    pj["depth"] = cfg.depth;
  }
  pj["epsilon"] = cfg.epsilon;
  pj["final_time"] = cfg.final_time;
  pj["orbitals"] = cfg.orbitals;
  j["problem"] = pj;
  j["methods"] = cfg.methods;
  j["h"] = cfg.h;
  j["h_sweep"] = cfg.h_sweep;
  j["eps_sweep"] = cfg.eps_sweep;
  j["scaling"] = {{"mode", cfg.scaling_mode}, {"fixed_h", cfg.fixed_h}};
  j["anderson"] = {{"step_length", cfg.anderson.step_length},
                   {"mixing_dim", cfg.anderson.mixing_dim},
                   {"tol", cfg.anderson.tol},
                   {"max_iter", cfg.anderson.max_iter}};
  j["reference"] = {{"scheme", cfg.reference.scheme},
                    {"cmp_dt", cfg.reference.cmp_dt},
                    {"subdiv", cfg.reference.subdiv},
                    {"tol", cfg.reference.tol},
                    {"max_iter", cfg.reference.max_iter}};
  j["output"] = cfg.output;
  j["stride"] = cfg.stride;
  j["seed"] = cfg.seed;
  j["retry_halve"] = cfg.retry_halve;
  j["observables_only"] = cfg.observables_only;
  j["timings"] = cfg.timings;
  j["jobs"] = cfg.jobs;
  j["diverged_above"] = cfg.diverged_above;
  return j;
}

// ---------------------------------------------------------------------------
// CSV plumbing

inline std::string fmt17(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string preamble(const std::string& command, const RunConfig& cfg) {
  return "# ptdyn " + command + "\n# config = " + effective_json(cfg).dump() + "\n";
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

template <class F>
auto with_problem(const RunConfig& cfg, F&& f) {
  if (cfg.problem_kind == "toy") {
    ToyHamiltonian toy{cfg.t0, cfg.delta};
    if (cfg.frozen) {
      Problem<DenseHamiltonian> p{frozen_hamiltonian(toy.matrix(cfg.freeze_at)), cfg.epsilon,
                                  cfg.final_time, cfg.orbitals};
      return f(p);
    }
    Problem<ToyHamiltonian> p{toy, cfg.epsilon, cfg.final_time, cfg.orbitals};
    return f(p);
  }
  NlseHamiltonian nl(cfg.length, cfg.grid, cfg.g, cfg.depth);
  Problem<NlseHamiltonian> p{nl, cfg.epsilon, cfg.final_time, cfg.orbitals};
  return f(p);
}

inline StudyConfig make_study_config(const RunConfig& cfg, const std::string& label,
                                     const std::vector<double>& hs) {
  StudyConfig sc;
  sc.h_values = hs;
  sc.cmp_dt = cfg.reference.cmp_dt;
  sc.ref_subdiv = cfg.reference.subdiv;
  sc.ref_scheme = parse_scheme(cfg.reference.scheme);
  sc.solver = cfg.anderson;
  sc.ref_solver = AndersonConfig{1.0, 20, cfg.reference.tol, cfg.reference.max_iter};
  sc.diverged_above = cfg.diverged_above;
  sc.label = label;
  sc.jobs = cfg.jobs;
  return sc;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_propagate(const RunConfig& cfg) {
  const Method& m = find_method(cfg.methods.front());
  return with_problem(cfg, [&](const auto& p) {
    Eigen::MatrixXcd phi0 = initial_state(p);
    IntegratorConfig integ;
    integ.scheme = m.scheme;
    integ.h = cfg.h;
    integ.solver = cfg.anderson;
    integ.retry_halve = cfg.retry_halve;
    Trajectory<Eigen::MatrixXcd> traj = propagate(p, m.kind, integ, phi0, cfg.stride);
    ObservableSeries obs = observables(traj, p, m.kind);
    const bool spatial = !obs.centers.empty();

    std::string out = preamble("propagate", cfg);
    std::ostringstream hdr;
    hdr << "t";
    const Eigen::Index entries = phi0.size();
    if (!cfg.observables_only) {
      for (Eigen::Index i = 0; i < entries; ++i) hdr << ", re(phi_" << i << ")";
      for (Eigen::Index i = 0; i < entries; ++i) hdr << ", im(phi_" << i << ")";
    }
    hdr << ", norm, energy";
    if (spatial) hdr << ", x_center";
    hdr << ", anderson_iters\n";
    out += hdr.str();

    const TimeGrid grid = time_grid(cfg.final_time, cfg.h);
    long prev_step = 0;
    for (size_t row = 0; row < traj.times.size(); ++row) {
      const long step =
          row + 1 == traj.times.size() && !traj.failed && traj.times[row] == grid.final_time
              ? grid.n_steps
              : std::min<long>(static_cast<long>(row) * cfg.stride, grid.n_steps);
      std::string line = fmt17(traj.times[row]);
      if (!cfg.observables_only) {
        const Eigen::MatrixXcd& u = traj.states[row];
        for (Eigen::Index i = 0; i < entries; ++i) line += ", " + fmt17(u(i).real());
        for (Eigen::Index i = 0; i < entries; ++i) line += ", " + fmt17(u(i).imag());
      }
      line += ", " + fmt17(obs.norms[row]) + ", " + fmt17(obs.energies[row]);
      if (spatial) line += ", " + fmt17(obs.centers[row]);
      long iters = 0;
      for (long s = prev_step; s < step && s < static_cast<long>(traj.reports.size()); ++s)
        iters += traj.reports[static_cast<size_t>(s)].iterations;
      prev_step = step;
      line += ", " + std::to_string(iters) + "\n";
      out += line;
    }
    if (traj.failed) {
      out += "# error: " + traj.failure + "\n";
      write_file(cfg.output, out);
      return 1;
    }
    write_file(cfg.output, out);
    return 0;
  });
}

inline int cmd_converge(const RunConfig& cfg) {
  std::string out = preamble("converge", cfg);
  out += "method, eps, h, error, diverged, total_anderson_iters, wall_seconds\n";
  int rc = 0;
  try {
    with_problem(cfg, [&](auto p) {
      const Eigen::MatrixXcd u0 = initial_state(p);
      for (const std::string& name : cfg.methods) {
        const Method& m = find_method(name);
        for (double eps : cfg.eps_sweep) {
          p.epsilon = eps;
          ConvergenceStudy s = convergence_study(p, m.kind, m.scheme, u0,
                                                 make_study_config(cfg, name, cfg.h_sweep));
          for (size_t i = 0; i < s.h_values.size(); ++i) {
            out += s.method + ", " + fmt17(s.eps) + ", " + fmt17(s.h_values[i]) + ", " +
                   fmt17(s.errors[i]) + ", " + std::to_string(int(s.diverged[i])) + ", " +
                   std::to_string(s.iterations[i]) + ", " +
                   fmt17(cfg.timings ? s.walls[i] : 0.0) + "\n";
          }
        }
      }
    });
  } catch (const std::exception& e) {
    out += std::string("# error: ") + e.what() + "\n";
    rc = 1;
  }
  write_file(cfg.output, out);
  return rc;
}

namespace cli_detail {

struct DetectedPoints {
  // stage -> (eps, value) samples, stages in fixed report order
  std::vector<std::pair<double, double>> onset, plateau, second;
};

inline PtTurningPoints detect(const ConvergenceStudy& s, bool two_stage) {
  PtTurningPoints tp;
  if (two_stage) {
    tp = pt_turning_points(s);
  } else {
    std::vector<double> hs, es;
    detail::usable_rows(s, hs, es);
    if (hs.size() < 6) throw std::invalid_argument("turning point: too few usable rows");
    tp.first = detail::scan_onset(hs, es, 0.0, hs.front() * (1 + 1e-12));
  }
  return tp;
}

}  // namespace cli_detail

inline int cmd_turning_point(const RunConfig& cfg) {
  std::string out = preamble("turning-point", cfg);
  out += "method, eps, onset_h, plateau_level, second_onset_h\n";
  int rc = 0;
  try {
    with_problem(cfg, [&](auto p) {
      const Eigen::MatrixXcd u0 = initial_state(p);
      for (const std::string& name : cfg.methods) {
        const Method& m = find_method(name);
        const bool two_stage = m.kind != DynamicsKind::Schrodinger;
        for (double eps : cfg.eps_sweep) {
          p.epsilon = eps;
          ConvergenceStudy s = convergence_study(p, m.kind, m.scheme, u0,
                                                 make_study_config(cfg, name, cfg.h_sweep));
          PtTurningPoints tp;
          try {
            tp = cli_detail::detect(s, two_stage);
          } catch (const std::invalid_argument&) {
            tp = {};  // too few usable rows: report an empty detection
          }
          const double nan = std::numeric_limits<double>::quiet_NaN();
          out += name + ", " + fmt17(eps) + ", " + fmt17(tp.first.found ? tp.first.h : nan) +
                 ", " + fmt17(tp.plateau_found ? tp.plateau_level : nan) + ", " +
                 fmt17(tp.second.found ? tp.second.h : nan) + "\n";
        }
      }
    });
  } catch (const std::exception& e) {
    out += std::string("# error: ") + e.what() + "\n";
    rc = 1;
  }
  write_file(cfg.output, out);
  return rc;
}

inline int cmd_scaling(const RunConfig& cfg) {
  std::string out = preamble("scaling", cfg);
  out += "method, fixed_h_or_stage, slope, r2\n";
  std::string raw;
  int rc = 0;
  try {
    with_problem(cfg, [&](auto p) {
      const Eigen::MatrixXcd u0 = initial_state(p);
      for (const std::string& name : cfg.methods) {
        const Method& m = find_method(name);
        auto emit = [&](const std::string& stage,
                        const std::vector<std::pair<double, double>>& pts) {
          std::vector<double> xs, ys;
          for (const auto& [e, v] : pts) {
            xs.push_back(e);
            ys.push_back(v);
            raw += "# point, " + name + ", " + stage + ", " + fmt17(e) + ", " + fmt17(v) + "\n";
          }
          FitResult f;
          bool fitted = false;
          if (xs.size() >= 2) {
            try {
              f = loglog_fit(xs, ys);
              fitted = true;
            } catch (const std::invalid_argument&) {
            }
          }
          const double nan = std::numeric_limits<double>::quiet_NaN();
          out += name + ", " + stage + ", " + fmt17(fitted ? f.slope : nan) + ", " +
                 fmt17(fitted ? f.r2 : nan) + "\n";
        };

        if (cfg.scaling_mode == "fixed-h") {
          std::vector<std::pair<double, double>> pts;
          for (double eps : cfg.eps_sweep) {
            p.epsilon = eps;
            ConvergenceStudy s = convergence_study(p, m.kind, m.scheme, u0,
                                                   make_study_config(cfg, name, {cfg.fixed_h}));
            if (!s.diverged[0] && std::isfinite(s.errors[0]) && s.errors[0] > 0)
              pts.emplace_back(eps, s.errors[0]);
          }
          emit(fmt17(cfg.fixed_h), pts);
        } else {
          const bool two_stage = m.kind != DynamicsKind::Schrodinger;
          cli_detail::DetectedPoints pts;
          for (double eps : cfg.eps_sweep) {
            p.epsilon = eps;
            ConvergenceStudy s = convergence_study(p, m.kind, m.scheme, u0,
                                                   make_study_config(cfg, name, cfg.h_sweep));
            PtTurningPoints tp;
            try {
              tp = cli_detail::detect(s, two_stage);
            } catch (const std::invalid_argument&) {
              continue;
            }
            if (tp.first.found) pts.onset.emplace_back(eps, tp.first.h);
            if (tp.plateau_found) pts.plateau.emplace_back(eps, tp.plateau_level);
            if (tp.second.found) pts.second.emplace_back(eps, tp.second.h);
          }
          emit("onset", pts.onset);
          if (two_stage) {
            emit("plateau", pts.plateau);
            emit("second-onset", pts.second);
          }
        }
      }
    });
  } catch (const std::exception& e) {
    out += std::string("# error: ") + e.what() + "\n";
    rc = 1;
  }
  out += raw;
  write_file(cfg.output, out);
  return rc;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run_command(const std::string& command, const RunConfig& cfg) {
  if (command == "propagate") return cmd_propagate(cfg);
  if (command == "converge") return cmd_converge(cfg);
  if (command == "scaling") return cmd_scaling(cfg);
  if (command == "turning-point") return cmd_turning_point(cfg);
  throw UsageError("unknown command '" + command + "'");
}

struct CliOverrides {
  std::string out;
  int jobs = 0;
  bool retry_halve = false;
  bool observables_only = false;
};

inline RunConfig load_run_config(const std::string& path, const std::string& command,
                                 const CliOverrides& ov) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config parse error: " + std::string(e.what()));
  }
  RunConfig cfg = parse_run_config(j, command);
  if (!ov.out.empty()) cfg.output = ov.out;
  if (ov.jobs > 0) cfg.jobs = ov.jobs;
  if (ov.retry_halve) cfg.retry_halve = true;
  if (ov.observables_only) cfg.observables_only = true;
  return cfg;
}

}  // namespace ptdyn
