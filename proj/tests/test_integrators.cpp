#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <limits>

#include "ptdyn/anderson.hpp"
#include "ptdyn/dynamics.hpp"
#include "ptdyn/hamiltonians.hpp"
#include "ptdyn/integrators.hpp"
#include "ptdyn/state.hpp"
#include "test_util.hpp"

using namespace ptdyn;

namespace {

AndersonConfig tight_solver(double tol = 1e-12) {
  AndersonConfig cfg;
  cfg.tol = tol;
  return cfg;
}

IntegratorConfig make_integ(Scheme s, double h, double tol = 1e-12) {
  IntegratorConfig cfg;
  cfg.scheme = s;
  cfg.h = h;
  cfg.solver = tight_solver(tol);
  return cfg;
}

double max_norm_drift(const Trajectory<Eigen::VectorXcd>& tr) {
  double d = 0.0;
  for (const auto& s : tr.states) d = std::max(d, std::abs(s.norm() - 1.0));
  return d;
}

}  // namespace

TEST_CASE("time grid rounds the step count and lands on the final time", "[integrators]") {
  auto g = time_grid(1.0, 0.3);
  REQUIRE(g.n_steps == 3);
  REQUIRE(g.time(0) == 0.0);
  REQUIRE(g.time(2) == Catch::Approx(0.6).margin(1e-15));
  REQUIRE(g.time(3) == 1.0);

  g = time_grid(1.0, 0.4);  // T/h = 2.5 rounds away from zero
  REQUIRE(g.n_steps == 3);
  REQUIRE(g.time(3) == 1.0);

  g = time_grid(1.0, 2.0);  // h > T still gives one full step
  REQUIRE(g.n_steps == 1);
  REQUIRE(g.time(1) == 1.0);

  g = time_grid(1.0, 1e-3);
  REQUIRE(g.n_steps == 1000);
  REQUIRE(g.time(1000) == 1.0);

  REQUIRE_THROWS_AS(time_grid(1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(time_grid(-1.0, 0.1), std::invalid_argument);
}

TEST_CASE("rk4 on a scalar problem reproduces the quartic Taylor amplification", "[integrators]") {
  const double eps = 0.01, lambda = 0.7, h = 1e-3;
  DenseHamiltonian ham{[lambda](double) {
                         Eigen::MatrixXcd m(1, 1);
                         m(0, 0) = lambda;
                         return m;
                       },
                       1};
  Problem<DenseHamiltonian> prob{ham, eps, 1.0, 1};
  Eigen::VectorXcd u0(1);
  u0 << Complex(0.8, -0.3);

  Eigen::VectorXcd u1 = rk4_step(prob, DynamicsKind::Schrodinger, 0.0, u0, h);
  const Complex z = Complex(0.0, -lambda * h / eps);
  const Complex r = 1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
  REQUIRE(std::abs(u1(0) - r * u0(0)) < 1e-14);
}

TEST_CASE("gl2 step matches the Cayley transform of the midpoint matrix", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);
  const double t = 0.13, h = 1e-3;

  auto [phi1, rep] = gl2_step(prob, DynamicsKind::Schrodinger, t, phi0, h, tight_solver(1e-13));
  REQUIRE(rep.converged);

  Eigen::Matrix2cd a = Complex(0, -1.0 / prob.epsilon) * toy.matrix(t + 0.5 * h);
  Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  Eigen::Vector2cd cayley =
      (id - 0.5 * h * a).partialPivLu().solve((id + 0.5 * h * a) * phi0);
  REQUIRE((phi1 - cayley).norm() < 1e-11);
  REQUIRE(std::abs(phi1.norm() - 1.0) < 1e-12);
}

TEST_CASE("cn and gl2 agree for a frozen linear generator", "[integrators]") {
  ToyHamiltonian toy;
  DenseHamiltonian frozen = frozen_hamiltonian(toy.matrix(0.3));
  Problem<DenseHamiltonian> prob{frozen, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = lowest_orbitals(frozen, 0.0, 1);

  auto g = gl2_step(prob, DynamicsKind::Schrodinger, 0.0, phi0, 2e-3, tight_solver(1e-13));
  auto c = cn_step(prob, DynamicsKind::Schrodinger, 0.0, phi0, 2e-3, tight_solver(1e-13));
  REQUIRE(g.second.converged);
  REQUIRE(c.second.converged);
  REQUIRE((g.first - c.first).norm() < 1e-11);
}

TEST_CASE("gl2 conserves the norm where cn only tracks it", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);

  SECTION("parallel transport, h = 1e-3") {
    auto tg = propagate(prob, DynamicsKind::ParallelTransport, make_integ(Scheme::Gl2, 1e-3), phi0);
    auto tc = propagate(prob, DynamicsKind::ParallelTransport, make_integ(Scheme::Cn, 1e-3), phi0);
    REQUIRE_FALSE(tg.failed);
    REQUIRE_FALSE(tc.failed);
    const double dg = max_norm_drift(tg), dc = max_norm_drift(tc);
    REQUIRE(dg < 1e-13);
    REQUIRE(dc > 1e-9);
    REQUIRE(dc < 1e-5);
  }
  SECTION("schrodinger, h = 5e-3") {
    auto tg = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Gl2, 5e-3), phi0);
    auto tc = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Cn, 5e-3), phi0);
    REQUIRE(max_norm_drift(tg) < 1e-10);
    REQUIRE(max_norm_drift(tc) > 1e-4);
  }
}

TEST_CASE("gl2 steps are time reversible", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);

  auto fwd = gl2_step(prob, DynamicsKind::ParallelTransport, 0.2, phi0, 1e-2, tight_solver(1e-13));
  auto bwd =
      gl2_step(prob, DynamicsKind::ParallelTransport, 0.21, fwd.first, -1e-2, tight_solver(1e-13));
  REQUIRE(fwd.second.converged);
  REQUIRE(bwd.second.converged);
  REQUIRE((bwd.first - phi0).norm() < 1e-12);
}

TEST_CASE("rk4 and gl2 show their classical convergence orders", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.1, 0.5, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);

  auto ref = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Rk4, 1e-5), phi0, 50000);
  REQUIRE_FALSE(ref.failed);
  const Eigen::VectorXcd uT = ref.states.back();

  auto err_at = [&](Scheme s, double h) {
    auto tr = propagate(prob, DynamicsKind::Schrodinger, make_integ(s, h), phi0, 1 << 30);
    REQUIRE_FALSE(tr.failed);
    return (tr.states.back() - uT).norm();
  };
  auto slope = [&](Scheme s) {
    return std::log(err_at(s, 8e-3) / err_at(s, 1e-3)) / std::log(8.0);
  };

  REQUIRE_THAT(slope(Scheme::Rk4), Catch::Matchers::WithinAbs(4.0, 0.2));
  REQUIRE_THAT(slope(Scheme::Gl2), Catch::Matchers::WithinAbs(2.0, 0.2));
  REQUIRE_THAT(slope(Scheme::Cn), Catch::Matchers::WithinAbs(2.0, 0.2));
}

TEST_CASE("trajectory storage honours stride and pins the endpoints", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);

  auto tr = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Gl2, 0.1), phi0, 3);
  REQUIRE_FALSE(tr.failed);
  REQUIRE(tr.times.size() == 5);  // k = 0, 3, 6, 9, 10
  REQUIRE(tr.times.front() == 0.0);
  REQUIRE(tr.times.back() == 1.0);
  REQUIRE(tr.times[1] == Catch::Approx(0.3).margin(1e-15));
  REQUIRE(tr.states.size() == tr.times.size());
  REQUIRE(tr.reports.size() == 10);
  REQUIRE(tr.total_iterations() > 10);

  auto trk = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Rk4, 0.002), phi0);
  REQUIRE(trk.reports.empty());
  REQUIRE(trk.times.size() == 501);
}

TEST_CASE("propagate validates its inputs", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);

  REQUIRE_THROWS_AS(
      propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Gl2, 1e-3), phi0, 0),
      std::invalid_argument);
  Eigen::MatrixXcd two = Eigen::MatrixXcd::Identity(2, 2);
  REQUIRE_THROWS_AS(propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Gl2, 1e-3), two),
                    std::invalid_argument);
  Eigen::MatrixXcd rect = Eigen::MatrixXcd::Zero(2, 1);
  REQUIRE_THROWS_AS(propagate(prob, DynamicsKind::VonNeumann, make_integ(Scheme::Gl2, 1e-3), rect),
                    std::invalid_argument);
}

TEST_CASE("von neumann propagation tracks the orbital density", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);
  Eigen::MatrixXcd p0 = density_from_orbitals(phi0);

  auto cfg = make_integ(Scheme::Gl2, 1e-3);
  auto tpt = propagate(prob, DynamicsKind::ParallelTransport, cfg, phi0, 100);
  auto tvn = propagate(prob, DynamicsKind::VonNeumann, cfg, p0, 100);
  REQUIRE_FALSE(tpt.failed);
  REQUIRE_FALSE(tvn.failed);
  REQUIRE(tpt.times == tvn.times);

  const double fr0 = p0.norm();
  for (size_t k = 0; k < tvn.states.size(); ++k) {
    const Eigen::MatrixXcd& p = tvn.states[k];
    REQUIRE(std::abs(p.trace().real() - 1.0) < 1e-12);
    REQUIRE(std::abs(p.norm() - fr0) < 1e-12);
    REQUIRE((density_from_orbitals(tpt.states[k]) - p).norm() < 1e-6);
  }
}

TEST_CASE("rk4 beyond its stability step runs into garbage or aborts", "[integrators]") {
  ToyHamiltonian toy;
  Eigen::VectorXcd phi0 = lowest_orbitals(toy, 0.0, 1);

  SECTION("finite blow-up is left to the error metric") {
    Problem<ToyHamiltonian> prob{toy, 0.002, 1.0, 1};
    auto tr = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Rk4, 0.01), phi0, 100);
    REQUIRE_FALSE(tr.failed);
    REQUIRE(tr.states.back().norm() > 1e6);
  }
  SECTION("overflow aborts with the prefix preserved") {
    Problem<ToyHamiltonian> prob{toy, 0.002, 5.0, 1};
    auto tr = propagate(prob, DynamicsKind::Schrodinger, make_integ(Scheme::Rk4, 0.05), phi0);
    REQUIRE(tr.failed);
    REQUIRE_THAT(tr.failure, Catch::Matchers::ContainsSubstring("rk4"));
    REQUIRE_THAT(tr.failure, Catch::Matchers::ContainsSubstring("non-finite"));
    REQUIRE(tr.times.size() == tr.states.size());
    REQUIRE(tr.times.size() > 10);
    REQUIRE(tr.times.back() < 5.0);
    for (const auto& s : tr.states) REQUIRE(s.allFinite());
  }
}

namespace {

// toy rhs poisoned inside a narrow time window, to force a step retry
struct PoisonedRhs {
  Rhs<ToyHamiltonian, Eigen::VectorXcd> inner;
  double bad_center;
  double bad_radius;

  Eigen::VectorXcd operator()(double t, const Eigen::VectorXcd& x) const {
    if (std::abs(t - bad_center) < bad_radius)
      return Eigen::VectorXcd::Constant(x.rows(), Complex(std::numeric_limits<double>::quiet_NaN(), 0.0));
    return inner(t, x);
  }
};

}  // namespace

TEST_CASE("retry_halve splits a failing step and aggregates its report", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);
  // the h = 0.2 step from t = 0.4 evaluates the stage exactly at t = 0.5
  PoisonedRhs rhs{Rhs<ToyHamiltonian, Eigen::VectorXcd>{toy, 0.01, DynamicsKind::ParallelTransport},
                  0.5, 1e-4};
  const TimeGrid grid = time_grid(1.0, 0.2);

  auto run = [&](bool retry) {
    IntegratorConfig cfg = make_integ(Scheme::Gl2, 0.2, 1e-12);
    cfg.retry_halve = retry;
    Trajectory<Eigen::VectorXcd> out;
    bool ok = propagate_observed(
        rhs, grid, cfg, phi0,
        [&](long k, double t, const Eigen::VectorXcd& y, const SolveReport& rep) {
          out.times.push_back(t);
          out.states.push_back(y);
          if (k > 0) out.reports.push_back(rep);
        },
        &out.failure);
    out.failed = !ok;
    return out;
  };

  auto plain = run(false);
  REQUIRE(plain.failed);
  REQUIRE(plain.times.back() == Catch::Approx(0.4).margin(1e-15));

  auto healed = run(true);
  REQUIRE_FALSE(healed.failed);
  REQUIRE(healed.times.back() == 1.0);
  REQUIRE(std::abs(healed.states.back().norm() - 1.0) < 1e-10);
  // the poisoned probe plus the two half steps cost more than a clean step
  REQUIRE(healed.reports[2].iterations > healed.reports[0].iterations);

  // an everywhere-poisoned rhs must still terminate under retry_halve
  PoisonedRhs always{rhs.inner, 0.0, 1e9};
  IntegratorConfig cfg = make_integ(Scheme::Gl2, 0.2, 1e-12);
  cfg.retry_halve = true;
  cfg.max_halvings = 3;
  std::string why;
  bool ok = propagate_observed(always, grid, cfg, phi0,
                               [](long, double, const Eigen::VectorXcd&, const SolveReport&) {},
                               &why);
  REQUIRE_FALSE(ok);
  REQUIRE_FALSE(why.empty());
}

TEST_CASE("step wrappers match the generic steppers", "[integrators]") {
  ToyHamiltonian toy;
  Problem<ToyHamiltonian> prob{toy, 0.01, 1.0, 1};
  Eigen::VectorXcd phi0 = initial_state(prob);
  auto f = make_rhs<Eigen::VectorXcd>(prob, DynamicsKind::ParallelTransportHam);

  Eigen::VectorXcd a = rk4_step(prob, DynamicsKind::ParallelTransportHam, 0.1, phi0, 1e-3);
  Eigen::VectorXcd b = rk4_step(f, 0.1, phi0, 1e-3);
  REQUIRE(a == b);

  auto ga = gl2_step(prob, DynamicsKind::ParallelTransportHam, 0.1, phi0, 1e-3, tight_solver());
  auto gb = implicit_midpoint_step(f, 0.1, phi0, 1e-3, tight_solver());
  REQUIRE(ga.first == gb.first);
  REQUIRE(ga.second.iterations == gb.second.iterations);
}
