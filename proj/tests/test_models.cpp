#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>

#include <boost/numeric/odeint.hpp>

#include "doctest.h"
#include "sysid/models.hpp"
#include "sysid/integrators.hpp"

using namespace sysid;

namespace {

VectorXd grid_of(std::initializer_list<double> t) {
  VectorXd v(static_cast<Index>(t.size()));
  Index i = 0;
  for (double x : t) v(i++) = x;
  return v;
}

VectorXd uniform_times(Index n, double dt) {
  VectorXd t(n);
  for (Index k = 0; k < n; ++k) t(k) = dt * static_cast<double>(k + 1);
  return t;
}

}  // namespace

TEST_CASE("linear pendulum uses the exact propagator") {
  const auto spec = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  const auto traj = simulate_truth(spec, grid_of({0.1}));
  MatrixXd a(2, 2);
  a << 0, 1, -9.81, 0;
  const VectorXd expect = (a * 0.1).exp() * spec.x0;
  CHECK((traj.states[0] - expect).norm() < 1e-14);
}

TEST_CASE("zero-length grid returns x0") {
  for (auto id : {SystemId::LinearPendulum, SystemId::VanDerPol, SystemId::Lorenz63}) {
    const auto spec = TruthSystemSpec::defaults(id);
    const auto traj = simulate_truth(spec, grid_of({0.0}));
    CHECK(traj.states[0] == spec.x0);
  }
}

TEST_CASE("linear pendulum semigroup property") {
  const auto spec = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  const auto traj = simulate_truth(spec, uniform_times(30, 0.1));
  MatrixXd a(2, 2);
  a << 0, 1, -9.81, 0;
  const MatrixXd step = (a * 0.1).exp();
  VectorXd x = spec.x0;
  for (Index k = 0; k < 30; ++k) {
    x = step * x;
    CHECK((traj.states[static_cast<std::size_t>(k)] - x).norm() <= 1e-12 * x.norm());
  }
}

TEST_CASE("lorenz endpoint agrees with an adaptive integrator") {
  const auto spec = TruthSystemSpec::defaults(SystemId::Lorenz63);
  const auto traj = simulate_truth(spec, grid_of({10.0}));
  using State = std::array<double, 3>;
  auto f = [](const State& x, State& dx, double) {
    dx[0] = 10.0 * (x[1] - x[0]);
    dx[1] = x[0] * (28.0 - x[2]) - x[1];
    dx[2] = x[0] * x[1] - 8.0 / 3.0 * x[2];
  };
  State x{spec.x0(0), spec.x0(1), spec.x0(2)};
  namespace ode = boost::numeric::odeint;
  ode::integrate_adaptive(ode::make_controlled(1e-13, 1e-13, ode::runge_kutta_dopri5<State>()), f, x, 0.0, 10.0, 1e-4);
  const VectorXd fine = (VectorXd(3) << x[0], x[1], x[2]).finished();
  CHECK((traj.states[0] - fine).norm() <= 1e-4 * fine.norm());
}

TEST_CASE("nonlinear pendulum energy drift is small") {
  const auto spec = TruthSystemSpec::defaults(SystemId::NonlinearPendulum);
  const auto traj = simulate_truth(spec, grid_of({10.0}));
  auto energy = [](const VectorXd& x) { return 0.5 * x(1) * x(1) - 9.81 * std::cos(x(0)); };
  const double e0 = energy(spec.x0);
  CHECK(std::abs(energy(traj.states[0]) - e0) < 1e-6 * std::abs(e0));
}

TEST_CASE("simulate_truth rejects bad grids") {
  const auto spec = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  CHECK_THROWS_AS(simulate_truth(spec, grid_of({0.2, 0.1})), std::invalid_argument);
  CHECK_THROWS_AS(system_from_string("Duffing"), std::invalid_argument);
}

TEST_CASE("observe without noise reproduces the states") {
  const auto spec = TruthSystemSpec::defaults(SystemId::VanDerPol);
  const auto traj = simulate_truth(spec, uniform_times(10, 0.1));
  const auto obs = observe(traj, spec, 0.0, 1, 1);
  REQUIRE(obs.size() == 10);
  for (Index k = 0; k < 10; ++k) CHECK(*obs.observations[static_cast<std::size_t>(k)] == traj.states[static_cast<std::size_t>(k)]);
  const auto thinned = observe(traj, spec, 0.0, 1, 3);
  CHECK(thinned.size() == 4);
  CHECK(thinned.times(1) == doctest::Approx(traj.times(3)));
}

TEST_CASE("moment observations of a constant field") {
  Grid1D g{201, -40.0, 40.0};
  VectorXd state = VectorXd::Constant(2 * g.n_points, 0.5);
  const VectorXd y = concentration_moments(g, state);
  CHECK(y(0) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(y(1) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("observation noise has the requested variance") {
  auto spec = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  const auto traj = simulate_truth(spec, uniform_times(5000, 0.01));
  const auto obs = observe(traj, spec, 0.1, 99, 1);
  double s = 0.0, s2 = 0.0;
  Index c = 0;
  for (Index k = 0; k < obs.size(); ++k) {
    const VectorXd r = *obs.observations[static_cast<std::size_t>(k)] - traj.states[static_cast<std::size_t>(k)];
    for (Index j = 0; j < r.size(); ++j, ++c) {
      s += r(j);
      s2 += r(j) * r(j);
    }
  }
  const double var = s2 / c - (s / c) * (s / c);
  CHECK(std::abs(var - 0.01) < 0.05 * 0.01);
}

TEST_CASE("cubic monomial library in graded lexicographic order") {
  const auto lib = DictionaryLibrary::monomials(2, 3);
  REQUIRE(lib.n_terms() == 10);
  const std::vector<std::string> expect = {"1", "x1", "x2", "x1^2", "x1*x2", "x2^2", "x1^3", "x1^2*x2", "x1*x2^2", "x2^3"};
  CHECK(lib.labels() == expect);
  const VectorXd at0 = dictionary_eval(lib, VectorXd::Zero(2));
  CHECK(at0(0) == 1.0);
  CHECK(at0.tail(9).isZero());
  const VectorXd at23 = dictionary_eval(lib, (VectorXd(2) << 2, 3).finished());
  CHECK(at23(7) == 12.0);
  CHECK_THROWS(dictionary_eval(lib, VectorXd::Zero(3)));
  DictionaryLibrary dup{1, {{1}, {1}}};
  CHECK_THROWS(dup.validate());
}

TEST_CASE("model families") {
  ModelConfig cfg;
  cfg.state_dim = 2;
  cfg.dt = 0.1;
  cfg.process = CovarianceSpec::isotropic(2);
  cfg.measurement = CovarianceSpec::isotropic(2);

  SUBCASE("linear matrix is row-major") {
    const auto model = make_model(ModelFamily::LinearMatrix, cfg);
    const auto theta = model.parameters((VectorXd(6) << 0, 1, -9.81, 0, 0.1, 0.2).finished());
    const VectorXd next = model.propagate((VectorXd(2) << 1, 0).finished(), theta);
    CHECK(next(0) == 0.0);
    CHECK(next(1) == -9.81);
    CHECK(model.is_linear());
    CHECK(model.process_covariance(theta)(1, 1) == 0.1);
    CHECK(model.measurement_covariance(theta)(0, 0) == 0.2);
  }
  SUBCASE("euler dictionary with zero coefficients is the identity") {
    cfg.library = DictionaryLibrary::monomials(2, 3);
    const auto model = make_model(ModelFamily::EulerDictionary, cfg);
    CHECK(model.n_params() == 22);
    const auto theta = model.parameters(VectorXd::Zero(22));
    const VectorXd x = (VectorXd(2) << 0.3, -1.7).finished();
    CHECK(model.propagate(x, theta) == x);
  }
  SUBCASE("known ODE matches the truth integration") {
    ModelConfig lc = cfg;
    lc.state_dim = 3;
    lc.process = CovarianceSpec::isotropic(3);
    lc.measurement = CovarianceSpec::isotropic(3);
    lc.known = known_vector_field(SystemId::Lorenz63);
    lc.substeps = 10;
    const auto model = make_model(ModelFamily::KnownODE, lc);
    const auto spec = TruthSystemSpec::defaults(SystemId::Lorenz63);
    const auto theta = model.parameters((VectorXd(5) << 10, 28, 8.0 / 3.0, 1, 1).finished());
    const VectorXd step = model.propagate(spec.x0, theta);
    const auto traj = simulate_truth(spec, grid_of({0.1}));
    CHECK((step - traj.states[0]).norm() <= 1e-6 * traj.states[0].norm());
  }
  SUBCASE("inconsistent blocks are rejected") {
    cfg.measurement = CovarianceSpec::isotropic(3);
    CHECK_THROWS(make_model(ModelFamily::LinearMatrix, cfg));
  }
}

TEST_CASE("reaction-diffusion: constant state without reaction stays constant") {
  Grid1D g{41, -40.0, 40.0};
  const VectorXd state = VectorXd::Constant(82, 0.7);
  // Reaction terms vanish when 0.1 - u + theta3 u^2 v = 0 and 0.9 - u^2 v = 0; use the diffusion part only.
  const VectorXd rhs = reaction_diffusion_rhs(g, state, 1.0, 10.0, 0.0);
  const VectorXd base = reaction_diffusion_rhs(g, state, 0.0, 0.0, 0.0);
  CHECK((rhs - base).norm() < 1e-12);
}

TEST_CASE("parameter partition must tile") {
  Partition p = Partition::contiguous(2, 0, 1, 1);
  CHECK(p.is_valid());
  p.process = {0, 1};
  CHECK_FALSE(p.is_valid());
  CHECK_THROWS(ParameterVector(VectorXd::Zero(4), p));
  const ParameterVector ok(VectorXd::Ones(4), Partition::contiguous(2, 0, 1, 1));
  CHECK(ok.variances_feasible());
  CHECK_FALSE(ok.with_values((VectorXd(4) << 1, 1, -1, 1).finished()).variances_feasible());
}
