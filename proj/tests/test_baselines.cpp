#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "sysid/baselines.hpp"
#include "sysid/filters.hpp"

using namespace sysid;

namespace {

MatrixXd pendulum_step(double dt) {
  MatrixXd a(2, 2);
  a << 0, 1, -9.81, 0;
  return (a * dt).exp();
}

ObservationSet from_columns(const MatrixXd& cols, double dt) {
  ObservationSet obs;
  obs.times.resize(cols.cols());
  for (Index k = 0; k < cols.cols(); ++k) {
    obs.times(k) = dt * static_cast<double>(k + 1);
    obs.observations.emplace_back(cols.col(k));
  }
  return obs;
}

ObservationSet pendulum_obs(Index n, double dt, double sigma, std::uint64_t seed) {
  const auto spec = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  VectorXd t(n);
  for (Index k = 0; k < n; ++k) t(k) = dt * static_cast<double>(k + 1);
  return observe(simulate_truth(spec, t), spec, sigma, seed, 1);
}

}  // namespace

TEST_CASE("dmd") {
  SUBCASE("noiseless pendulum recovers the propagator") {
    const auto fit = dmd_fit(snapshot_pair(pendulum_obs(40, 0.1, 0.0, 0)));
    CHECK((fit.a - pendulum_step(0.1)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fit.rank == 2);
  }
  SUBCASE("identity data") {
    CounterRng rng(1);
    const MatrixXd y = oracle::random_matrix(rng, 3, 10, 1.0);
    const auto fit = dmd_fit({y, y});
    CHECK(fit.a.isApprox(MatrixXd::Identity(3, 3), 1e-12));
  }
  SUBCASE("rank-one minimum-norm solution") {
    const auto fit = dmd_fit({(MatrixXd(2, 1) << 1, 0).finished(), (MatrixXd(2, 1) << 0, 1).finished()});
    CHECK(fit.a.isApprox((MatrixXd(2, 2) << 0, 0, 1, 0).finished()));
    CHECK(fit.rank == 1);
  }
  SUBCASE("residual orthogonality") {
    const auto pair = snapshot_pair(pendulum_obs(40, 0.1, 0.1, 5));
    const auto fit = dmd_fit(pair);
    CHECK(((pair.yp - fit.a * pair.y) * pair.y.transpose()).norm() < 1e-8 * pair.yp.norm());
  }
  SUBCASE("preconditions") {
    auto obs = pendulum_obs(1, 0.1, 0.0, 0);
    CHECK_THROWS_AS(snapshot_pair(obs), std::invalid_argument);
    obs = pendulum_obs(5, 0.1, 0.0, 0);
    obs.observations[2].reset();
    CHECK_THROWS_AS(snapshot_pair(obs), std::invalid_argument);
  }
}

TEST_CASE("dmd is the noiseless-observation likelihood maximizer") {
  ModelConfig cfg;
  cfg.state_dim = 2;
  cfg.process = CovarianceSpec::constant(MatrixXd::Identity(2, 2));
  cfg.measurement = CovarianceSpec::constant(MatrixXd::Identity(2, 2));
  const auto model = make_model(ModelFamily::LinearMatrix, cfg);
  const auto obs = pendulum_obs(30, 0.1, 0.05, 9);
  const auto f = [&](const VectorXd& th) { return noiseless_loglik(model, model.parameters(th), obs); };
  const VectorXd best = oracle::newton_maximize(f, VectorXd::Zero(4));
  const MatrixXd a = dmd_fit(snapshot_pair(obs)).a;
  const VectorXd flat = (VectorXd(4) << a(0, 0), a(0, 1), a(1, 0), a(1, 1)).finished();
  CHECK((best - flat).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("tdmd") {
  SUBCASE("noiseless data agrees with dmd") {
    const auto pair = snapshot_pair(pendulum_obs(40, 0.1, 0.0, 0));
    CHECK((tdmd_fit(pair).a - dmd_fit(pair).a).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("scalar closed form") {
    CounterRng rng(3);
    MatrixXd y(1, 50), yp(1, 50);
    for (Index k = 0; k < 50; ++k) {
      const double x = rng.normal();
      y(0, k) = x + 0.1 * rng.normal();
      yp(0, k) = 0.8 * x + 0.1 * rng.normal();
    }
    const double syy = y.squaredNorm(), spp = yp.squaredNorm(), syp = (y.array() * yp.array()).sum();
    const double expect = ((spp - syy) + std::sqrt((spp - syy) * (spp - syy) + 4 * syp * syp)) / (2 * syp);
    CHECK(std::abs(tdmd_fit({y, yp}).a(0, 0) - expect) < 1e-10);
  }
  SUBCASE("noise on both sides: TLS eigenvalue modulus is less biased") {
    const double true_mod = 0.97;
    MatrixXd rot(2, 2);
    rot << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
    const MatrixXd a = true_mod * rot;
    double ls_err = 0.0, tls_err = 0.0;
    for (std::uint64_t r = 0; r < 50; ++r) {
      CounterRng rng(100 + r);
      MatrixXd x(2, 61);
      x.col(0) << 1.0, 0.0;
      for (Index k = 1; k < 61; ++k) x.col(k) = a * x.col(k - 1);
      for (Index i = 0; i < x.size(); ++i) x.data()[i] += 0.05 * rng.normal();
      const SnapshotPair pair{x.leftCols(60), x.rightCols(60)};
      ls_err += std::abs(std::abs(eig_analysis(dmd_fit(pair).a, 1.0)[0].discrete) - true_mod);
      tls_err += std::abs(std::abs(eig_analysis(tdmd_fit(pair).a, 1.0)[0].discrete) - true_mod);
    }
    CHECK(tls_err < ls_err);
  }
  SUBCASE("too few snapshots") {
    CHECK_THROWS_AS(tdmd_fit({MatrixXd::Ones(2, 3), MatrixXd::Ones(2, 3)}), std::invalid_argument);
  }
}

TEST_CASE("sindy") {
  SUBCASE("van der pol support and coefficients") {
    auto spec = TruthSystemSpec::defaults(SystemId::VanDerPol);
    VectorXd t(2000);
    for (Index k = 0; k < 2000; ++k) t(k) = 0.01 * static_cast<double>(k + 1);
    const auto obs = observe(simulate_truth(spec, t), spec, 0.0, 0, 1);
    SindyConfig cfg;
    cfg.library = DictionaryLibrary::monomials(2, 3);
    cfg.threshold = 0.1;
    cfg.derivative = Derivative::Central;
    const auto fit = sindy_fit(obs, cfg);
    const MatrixXd& c = fit.coefficients;
    // Terms: 1 x1 x2 x1^2 x1x2 x2^2 x1^3 x1^2x2 x1x2^2 x2^3
    for (Index j = 0; j < 10; ++j) CHECK((c(j, 0) != 0.0) == (j == 2));
    for (Index j = 0; j < 10; ++j) CHECK((c(j, 1) != 0.0) == (j == 1 || j == 2 || j == 7));
    CHECK(c(2, 0) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(c(1, 1) == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(c(2, 1) == doctest::Approx(3.0).epsilon(0.05));
    CHECK(c(7, 1) == doctest::Approx(-3.0).epsilon(0.05));

    // Idempotent on its own support.
    SindyConfig again = cfg;
    again.library.terms.clear();
    std::vector<Index> keep = {1, 2, 7};
    for (Index j : keep) again.library.terms.push_back(cfg.library.terms[static_cast<std::size_t>(j)]);
    const auto refit = sindy_fit(obs, again);
    CHECK(refit.coefficients(1, 0) == c(2, 0));
    CHECK(refit.coefficients(2, 1) == c(7, 1));
  }
  SUBCASE("constant data gives zero coefficients") {
    const auto obs = from_columns(MatrixXd::Constant(2, 20, 0.5), 0.1);
    SindyConfig cfg;
    cfg.library = DictionaryLibrary::monomials(2, 1, false);
    CHECK(sindy_fit(obs, cfg).coefficients.isZero());
  }
  SUBCASE("zero threshold is plain least squares") {
    const auto obs = pendulum_obs(30, 0.1, 0.05, 2);
    SindyConfig cfg;
    cfg.library = DictionaryLibrary::monomials(2, 2);
    cfg.threshold = 0.0;
    cfg.max_sweeps = 1;
    const auto fit = sindy_fit(obs, cfg);
    const MatrixXd x = obs.present_matrix();
    MatrixXd feats(29, 6), deriv(29, 2);
    for (Index k = 0; k < 29; ++k) {
      feats.row(k) = dictionary_eval(cfg.library, x.col(k)).transpose();
      deriv.row(k) = ((x.col(k + 1) - x.col(k)) / 0.1).transpose();
    }
    const MatrixXd ls = feats.colPivHouseholderQr().solve(deriv);
    CHECK((fit.coefficients - ls).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("errors") {
    auto obs = pendulum_obs(5, 0.1, 0.0, 0);
    SindyConfig cfg;
    cfg.library = DictionaryLibrary::monomials(2, 3);
    CHECK_THROWS_AS(sindy_fit(obs, cfg), std::invalid_argument);
    obs.observations[1].reset();
    CHECK_THROWS_WITH_AS(sindy_fit(obs, cfg), doctest::Contains("dense data required"), std::invalid_argument);
  }
}

TEST_CASE("sindy objective") {
  const auto obs = from_columns((MatrixXd(1, 3) << 1.0, 2.0, 3.0).finished(), 0.5);
  DictionaryLibrary lib = DictionaryLibrary::monomials(1, 1);
  // Rates (2-1)/0.5 = 2 and (3-2)/0.5 = 2; theta = (0, 1): residuals 2-1 = 1 and 2-2 = 0.
  CHECK(sindy_objective((VectorXd(2) << 0.0, 1.0).finished(), obs, lib, 0.5, 0.0) == doctest::Approx(1.0));
  CHECK(sindy_objective((VectorXd(2) << 0.0, 1.0).finished(), obs, lib, 0.5, 2.0) == doctest::Approx(3.0));
}

TEST_CASE("eigenvalue analysis") {
  const auto id = eig_analysis(MatrixXd::Identity(3, 3), 0.1);
  for (const auto& e : id) {
    CHECK(e.discrete == std::complex<double>(1.0, 0.0));
    CHECK(std::abs(e.continuous) == 0.0);
  }
  const auto pend = eig_analysis(pendulum_step(0.1), 0.1);
  CHECK(pend[0].continuous.imag() == doctest::Approx(std::sqrt(9.81)).epsilon(1e-9));
  CHECK(pend[1].continuous.imag() == doctest::Approx(-std::sqrt(9.81)).epsilon(1e-9));
  CHECK(std::abs(pend[0].continuous.real()) < 1e-6);
  const auto flip = eig_analysis(-MatrixXd::Identity(1, 1), 0.5);
  CHECK(flip[0].continuous.imag() == doctest::Approx(std::numbers::pi / 0.5));
  CHECK_THROWS(eig_analysis(MatrixXd::Identity(2, 2), 0.0));
}
