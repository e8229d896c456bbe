#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "sysid/filters.hpp"

using namespace sysid;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

ObservationSet scalar_data(std::initializer_list<double> ys) {
  ObservationSet obs;
  obs.times.resize(static_cast<Index>(ys.size()));
  Index k = 0;
  for (double y : ys) {
    obs.times(k) = static_cast<double>(k + 1);
    obs.observations.emplace_back(VectorXd::Constant(1, y));
    ++k;
  }
  return obs;
}

StateSpaceModel scalar_linear_model() {
  ModelConfig cfg;
  cfg.state_dim = 1;
  cfg.process = CovarianceSpec::isotropic(1);
  cfg.measurement = CovarianceSpec::isotropic(1);
  return make_model(ModelFamily::LinearMatrix, cfg);
}

}  // namespace

TEST_CASE("kalman filter: perfect prediction") {
  const auto model = scalar_linear_model();
  const auto theta = model.parameters((VectorXd(3) << 1.0, 0.0, 1.0).finished());
  const auto data = scalar_data({0.7, 0.7, 0.7});
  FilterSettings s;
  s.nugget = 0.0;
  const auto res = kf_marginal_loglik(model, theta, data, Belief{VectorXd::Constant(1, 0.7), MatrixXd::Zero(1, 1)}, s);
  CHECK(res.log_lik == doctest::Approx(-1.5 * kLog2Pi).epsilon(1e-14));
  CHECK(res.beliefs.size() == 3);
  CHECK(res.evidences.size() == 3);
}

TEST_CASE("kalman filter matches the joint Gaussian") {
  const auto model = scalar_linear_model();
  const auto theta = model.parameters((VectorXd(3) << 0.5, 0.2, 0.3).finished());
  const auto data = scalar_data({0.4, -0.2, 1.1});
  const Belief init{VectorXd::Constant(1, 0.1), MatrixXd::Constant(1, 1, 0.5)};
  FilterSettings s;
  s.nugget = 0.0;
  const double kf = kf_marginal_loglik(model, theta, data, init, s).log_lik;
  const double joint = oracle::joint_gaussian_loglik(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Identity(1, 1),
                                                     MatrixXd::Constant(1, 1, 0.2), MatrixXd::Constant(1, 1, 0.3),
                                                     init.mean, init.cov,
                                                     {VectorXd::Constant(1, 0.4), VectorXd::Constant(1, -0.2),
                                                      VectorXd::Constant(1, 1.1)});
  CHECK(std::abs(kf - joint) <= 1e-10 * std::abs(joint));
}

TEST_CASE("kalman filter: random problems, factorization and permutation") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto p = oracle::random_linear_problem(seed, 3, 3, 4);
    FilterSettings s;
    s.nugget = 0.0;
    const auto res = kf_marginal_loglik(p.model, p.theta, p.data, p.init, s);
    const double joint = oracle::joint_gaussian_loglik(p.a, p.h, p.q, p.r, p.init.mean, p.init.cov, p.ys);
    CHECK(std::abs(res.log_lik - joint) <= 1e-10 * std::abs(joint));
    CHECK(std::abs(evidence_loglik(res, p.data) - res.log_lik) < 1e-10);
    for (const auto& b : res.beliefs) CHECK((b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("kalman filter: state permutation leaves the likelihood unchanged") {
  auto p = oracle::random_linear_problem(77, 3, 2, 4);
  const Index d = p.a.rows();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(d);
  perm.setIdentity();
  if (d > 1) perm.applyTranspositionOnTheRight(0, d - 1);
  const MatrixXd pm = perm;
  ModelConfig cfg;
  cfg.state_dim = d;
  cfg.observation = ObservationKind::Matrix;
  cfg.observation_matrix = p.h * pm.transpose();
  cfg.process = CovarianceSpec::constant(pm * p.q * pm.transpose());
  cfg.measurement = CovarianceSpec::constant(p.r);
  const MatrixXd ap = pm * p.a * pm.transpose();
  const auto model = make_linear_model(cfg, 0, [ap](const VectorXd&) { return ap; });
  const auto theta = model.parameters(VectorXd());
  const Belief init{pm * p.init.mean, pm * p.init.cov * pm.transpose()};
  const double a = kf_marginal_loglik(p.model, p.theta, p.data, p.init).log_lik;
  const double b = kf_marginal_loglik(model, theta, p.data, init).log_lik;
  CHECK(std::abs(a - b) < 1e-10);
}

TEST_CASE("kalman filter: missing observations only predict") {
  const auto model = scalar_linear_model();
  const auto theta = model.parameters((VectorXd(3) << 0.9, 0.1, 0.2).finished());
  auto data = scalar_data({0.4, 0.0, 1.1});
  data.observations[1].reset();
  const Belief init{VectorXd::Constant(1, 0.0), MatrixXd::Constant(1, 1, 1.0)};
  FilterSettings s;
  s.nugget = 0.0;
  const auto res = kf_marginal_loglik(model, theta, data, init, s);
  CHECK(res.evidences.size() == 2);
  CHECK(res.beliefs[1].mean(0) == doctest::Approx(0.9 * res.beliefs[0].mean(0)));
  // Oracle: the two-step transition between records 1 and 3.
  const double joint = oracle::joint_gaussian_loglik(MatrixXd::Constant(1, 1, 0.9), MatrixXd::Identity(1, 1),
                                                     MatrixXd::Constant(1, 1, 0.1), MatrixXd::Constant(1, 1, 0.2),
                                                     init.mean, init.cov,
                                                     {VectorXd::Constant(1, 0.4)});
  CHECK(std::isfinite(joint));
  CHECK(std::abs(evidence_loglik(res, data) - res.log_lik) < 1e-12);
}

TEST_CASE("kalman filter: degenerate covariance soft-fails") {
  const auto model = scalar_linear_model();
  const auto theta = model.parameters((VectorXd(3) << 1.0, 0.0, -5.0).finished());
  const auto res = kf_marginal_loglik(model, theta, scalar_data({1.0}), Belief{VectorXd::Zero(1), MatrixXd::Zero(1, 1)});
  CHECK(res.log_lik == kNegInf);
  const auto nan_theta = model.parameters((VectorXd(3) << kNaN, 0.1, 1.0).finished());
  CHECK(kf_marginal_loglik(model, nan_theta, scalar_data({1.0}), Belief{VectorXd::Zero(1), MatrixXd::Identity(1, 1)})
            .log_lik == kNegInf);
}

TEST_CASE("sigma points") {
  SUBCASE("one dimension, closed form") {
    const Belief b{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
    const auto s = ukf_sigma_points(b, 1e-3, 0.0, 1.0, 0.0);
    CHECK(s.lambda == doctest::Approx(1e-6 - 1.0));
    CHECK(s.points(0, 0) == 0.0);
    CHECK(s.points(0, 1) == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK(s.points(0, 2) == doctest::Approx(-1e-3).epsilon(1e-9));
    double cov = 0.0;
    for (Index i = 0; i < 3; ++i) cov += s.w_cov(i) * s.points(0, i) * s.points(0, i);
    CHECK(cov == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("weights, mean and mirror symmetry") {
    CounterRng rng(5);
    for (Index d = 1; d <= 4; ++d) {
      const Belief b{oracle::random_matrix(rng, d, 1, 2.0).col(0), oracle::random_spd(rng, d, 0.1)};
      const auto s = ukf_sigma_points(b, 1e-3, 0.0, 1.0);
      CHECK(s.count() == 2 * d + 1);
      CHECK(std::abs(s.w_mean.sum() - 1.0) < 1e-12 * std::abs(s.w_mean(0)));
      CHECK((weighted_mean(s.points, s.w_mean) - b.mean).norm() < 1e-12);
      for (Index i = 1; i <= d; ++i)
        CHECK((s.points.col(i) + s.points.col(i + d) - 2.0 * s.points.col(0)).norm() < 1e-12);
    }
  }
  SUBCASE("cholesky failure throws") {
    const Belief b{VectorXd::Zero(2), (MatrixXd(2, 2) << 1, 2, 2, 1).finished()};
    CHECK_THROWS_AS(ukf_sigma_points(b, 1e-3, 0.0, 1.0), std::domain_error);
  }
}

TEST_CASE("unscented filter is exact on linear models") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    auto p = oracle::random_linear_problem(seed, 4, 4, 5);
    const double kf = kf_marginal_loglik(p.model, p.theta, p.data, p.init).log_lik;
    const double ukf = ukf_marginal_loglik(p.model, p.theta, p.data, p.init).log_lik;
    CHECK(std::abs(kf - ukf) < 1e-8);
  }
}

TEST_CASE("unscented predict through a cubic map") {
  ModelConfig cfg;
  cfg.state_dim = 1;
  cfg.process = CovarianceSpec::isotropic(1);
  cfg.measurement = CovarianceSpec::isotropic(1);
  cfg.known = {[](const VectorXd& x, const VectorXd&) { return VectorXd(x.array().cube()); }, 0};
  auto model = make_model(ModelFamily::KnownODE, cfg);
  model.dynamics = [](const VectorXd& x, const VectorXd&) { return VectorXd(x.array().cube()); };
  const auto theta = model.parameters((VectorXd(2) << 0.0, 1.0).finished());
  auto data = scalar_data({0.0});
  data.observations[0].reset();
  const Belief init{VectorXd::Constant(1, 0.5), MatrixXd::Constant(1, 1, 0.04)};
  FilterSettings fs;
  fs.nugget = 0.0;
  const auto res = ukf_marginal_loglik(model, theta, data, init, fs);
  const auto s = ukf_sigma_points(init, fs.alpha, fs.kappa, fs.beta, 0.0);
  double hand = 0.0;
  for (Index i = 0; i < 3; ++i) hand += s.w_mean(i) * std::pow(s.points(0, i), 3);
  CHECK(res.beliefs[0].mean(0) == doctest::Approx(hand).epsilon(1e-10));
}

TEST_CASE("deterministic likelihood") {
  const auto model = scalar_linear_model();
  SUBCASE("noiseless data") {
    const auto theta = model.parameters((VectorXd(3) << 0.5, 0.0, 1.0).finished());
    const auto data = scalar_data({1.0, 0.5, 0.25});
    CHECK(det_loglik(model, theta, data, VectorXd::Constant(1, 2.0)) == doctest::Approx(-1.5 * kLog2Pi));
  }
  SUBCASE("single residual") {
    const double sigma2 = 0.3;
    const auto theta = model.parameters((VectorXd(3) << 1.0, 0.0, sigma2).finished());
    const double r = 0.4;
    const double v = det_loglik(model, theta, scalar_data({1.0 + r}), VectorXd::Constant(1, 1.0));
    CHECK(v == doctest::Approx(-r * r / (2 * sigma2) - 0.5 * std::log(2 * std::numbers::pi * sigma2)));
  }
  SUBCASE("limit of the kalman filter") {
    const auto theta = model.parameters((VectorXd(3) << 0.9, 0.0, 0.5).finished());
    const auto data = scalar_data({0.8, 0.9, 0.5, 0.7});
    const double det = det_loglik(model, theta, data, VectorXd::Constant(1, 1.0));
    const double kf = kf_marginal_loglik(model, theta, data, Belief{VectorXd::Constant(1, 1.0), MatrixXd::Constant(1, 1, 1e-14)}).log_lik;
    CHECK(std::abs(det - kf) < 1e-4);
  }
  SUBCASE("mahalanobis scale invariance") {
    const auto t1 = model.parameters((VectorXd(3) << 1.0, 0.0, 1.0).finished());
    const auto t4 = model.parameters((VectorXd(3) << 1.0, 0.0, 4.0).finished());
    const double q1 = det_loglik(model, t1, scalar_data({1.3}), VectorXd::Constant(1, 1.0)) + 0.5 * kLog2Pi;
    const double q4 = det_loglik(model, t4, scalar_data({1.6}), VectorXd::Constant(1, 1.0)) + 0.5 * kLog2Pi +
                      0.5 * std::log(4.0);
    CHECK(q1 == doctest::Approx(q4).epsilon(1e-14));
  }
  SUBCASE("blow-up") {
    const auto theta = model.parameters((VectorXd(3) << 1e200, 0.0, 1.0).finished());
    CHECK(det_loglik(model, theta, scalar_data({1, 1, 1}), VectorXd::Constant(1, 1e200)) == kNegInf);
  }
}

TEST_CASE("noiseless-observation likelihood") {
  const auto model = scalar_linear_model();
  SUBCASE("two points") {
    for (double th : {1.0, 2.0, 2.5}) {
      const auto theta = model.parameters((VectorXd(3) << th, 1.0, 0.0).finished());
      const double v = noiseless_loglik(model, theta, scalar_data({1.0, 2.0}));
      CHECK(v == doctest::Approx(-0.5 * (2 - th) * (2 - th) - 0.5 * kLog2Pi));
    }
  }
  SUBCASE("perfect predictions") {
    const auto theta = model.parameters((VectorXd(3) << 0.5, 1.0, 0.0).finished());
    CHECK(noiseless_loglik(model, theta, scalar_data({4, 2, 1, 0.5})) == doctest::Approx(-1.5 * kLog2Pi));
  }
  SUBCASE("non-invertible observation") {
    ModelConfig cfg;
    cfg.state_dim = 2;
    cfg.observation = ObservationKind::Matrix;
    cfg.observation_matrix = (MatrixXd(1, 2) << 1, 0).finished();
    cfg.process = CovarianceSpec::isotropic(2);
    cfg.measurement = CovarianceSpec::isotropic(1);
    const auto m2 = make_model(ModelFamily::LinearMatrix, cfg);
    CHECK_THROWS_AS(noiseless_loglik(m2, m2.parameters(VectorXd::Ones(6)), scalar_data({1, 2})), std::invalid_argument);
  }
}

TEST_CASE("anchor on the first observation") {
  ModelConfig cfg;
  cfg.state_dim = 1;
  cfg.process = CovarianceSpec::isotropic(1);
  cfg.measurement = CovarianceSpec::isotropic(1);
  const auto model = make_model(ModelFamily::LinearMatrix, cfg);
  const auto theta = model.parameters((VectorXd(3) << 1.0, 0.1, 0.3).finished());
  auto [init, rest] = anchor_on_first_observation(model, theta, scalar_data({2.0, 3.0, 4.0}));
  CHECK(init.mean(0) == 2.0);
  CHECK(init.cov(0, 0) == 0.3);
  CHECK(rest.size() == 2);
  CHECK(rest.times(0) == 2.0);
}
