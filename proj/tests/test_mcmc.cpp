#include <cmath>

#include "doctest.h"
#include "sysid/mcmc.hpp"
#include "sysid/rng.hpp"

using namespace sysid;

TEST_CASE("acceptance arithmetic") {
  CHECK(stage1_log_acceptance(0.0, std::log(2.0)) == 0.0);
  CHECK(stage1_log_acceptance(0.0, -std::log(2.0)) == doctest::Approx(-std::log(2.0)));
  CHECK(stage1_log_acceptance(0.0, kNegInf) == kNegInf);
  // Stage 2 with y2 = x is always accepted (reversal of the rejected move).
  const VectorXd x = VectorXd::Zero(1), y1 = VectorXd::Constant(1, 1.0);
  const MatrixXd l = MatrixXd::Identity(1, 1);
  CHECK(stage2_log_acceptance(x, 0.0, y1, -3.0, x, 0.0, l) == 0.0);
}

TEST_CASE("constant target accepts every stage-1 proposal") {
  DramConfig cfg;
  cfg.n_samples = 1000;
  cfg.seed = 4;
  const LogDensity f = [](const VectorXd&) { return 0.0; };
  const auto chain = dram_sample(f, VectorXd::Zero(2), MatrixXd::Identity(2, 2), cfg);
  const auto rep = chain_diagnostics(chain, 0);
  CHECK(rep.acceptance == 1.0);
  CHECK(rep.acceptance_stage1 == 1.0);
}

TEST_CASE("standard normal target") {
  DramConfig cfg;
  cfg.n_samples = 50000;
  cfg.seed = 11;
  const LogDensity f = [](const VectorXd& x) { return -0.5 * x.squaredNorm(); };
  const auto chain = dram_sample(f, VectorXd::Zero(1), MatrixXd::Identity(1, 1), cfg);
  const auto rep = chain_diagnostics(chain, chain.default_burn_in());
  CHECK(std::abs(rep.mean(0)) < 0.05);
  const MatrixXd kept = chain.post_burn_in(chain.default_burn_in());
  const double var = (kept.col(0).array() - rep.mean(0)).square().mean();
  CHECK(std::abs(var - 1.0) < 0.1);
  // Log posterior is consistent with the stored samples.
  for (Index i = 0; i < chain.size(); i += 997) CHECK(std::abs(chain.log_post(i) - f(chain.samples.row(i).transpose())) < 1e-10);
}

TEST_CASE("chain invariants") {
  DramConfig cfg;
  cfg.n_samples = 2000;
  cfg.n0 = 300;
  cfg.seed = 2;
  const LogDensity f = [](const VectorXd& x) { return -0.5 * (x(0) * x(0) / 4.0 + x(1) * x(1)); };
  const MatrixXd c0 = 0.5 * MatrixXd::Identity(2, 2);
  const auto chain = dram_sample(f, VectorXd::Zero(2), c0, cfg);
  REQUIRE(chain.adaptation_history.size() >= 2);
  CHECK(chain.adaptation_history[0].first == 0);
  CHECK(chain.adaptation_history[0].second == c0);
  CHECK(chain.adaptation_history[1].first == cfg.n0);
  VectorXd prev = VectorXd::Zero(2);
  for (Index i = 0; i < chain.size(); ++i) {
    const VectorXd row = chain.samples.row(i).transpose();
    if (!chain.accepted[static_cast<std::size_t>(i)]) CHECK(row == prev);
    CHECK((chain.accepted[static_cast<std::size_t>(i)] == (chain.stage[static_cast<std::size_t>(i)] != Stage::Reject)));
    prev = row;
  }
  const auto again = dram_sample(f, VectorXd::Zero(2), c0, cfg);
  CHECK(again.samples == chain.samples);
  CHECK(again.log_post == chain.log_post);
}

TEST_CASE("sampler rejects bad starts") {
  DramConfig cfg;
  cfg.n_samples = 500;
  const LogDensity f = [](const VectorXd& x) { return x(0) < 0 ? kNegInf : 0.0; };
  CHECK_THROWS_AS(dram_sample(f, VectorXd::Constant(1, -1.0), MatrixXd::Identity(1, 1), cfg), std::invalid_argument);
  CHECK_THROWS_AS(dram_sample(f, VectorXd::Constant(1, 1.0), -MatrixXd::Identity(1, 1), cfg), std::invalid_argument);
  cfg.n_samples = 100;
  CHECK_THROWS(dram_sample(f, VectorXd::Constant(1, 1.0), MatrixXd::Identity(1, 1), cfg));
}

TEST_CASE("discrete histogram against the target") {
  // Target on [0, 4): density proportional to 1 + x.
  const LogDensity f = [](const VectorXd& x) { return (x(0) < 0 || x(0) >= 4) ? kNegInf : std::log(1.0 + x(0)); };
  DramConfig cfg;
  cfg.n_samples = 100000;
  cfg.seed = 8;
  const auto chain = dram_sample(f, VectorXd::Constant(1, 2.0), MatrixXd::Identity(1, 1), cfg);
  std::vector<double> hist(4, 0.0);
  for (Index i = 0; i < chain.size(); ++i) hist[static_cast<std::size_t>(chain.samples(i, 0))] += 1.0 / static_cast<double>(chain.size());
  double tv = 0.0;
  for (int b = 0; b < 4; ++b) {
    const double mass = ((b + 1 + 0.5 * (b + 1) * (b + 1)) - (b + 0.5 * b * b)) / 12.0;
    tv += 0.5 * std::abs(hist[static_cast<std::size_t>(b)] - mass);
  }
  CHECK(tv < 0.05);
}

TEST_CASE("diagnostics") {
  SUBCASE("white noise ESS") {
    CounterRng rng(21);
    const VectorXd x = rng.normal_vector(20000);
    CHECK(std::abs(effective_sample_size(x) - 20000.0) < 2000.0);
  }
  SUBCASE("fully rejected chain") {
    DramConfig cfg;
    cfg.n_samples = 400;
    const LogDensity f = [](const VectorXd& x) { return x(0) == 1.5 ? 0.0 : kNegInf; };
    const auto chain = dram_sample(f, VectorXd::Constant(1, 1.5), MatrixXd::Identity(1, 1), cfg);
    const auto rep = chain_diagnostics(chain, 0);
    CHECK(rep.acceptance == 0.0);
    CHECK(rep.ess(0) == 1.0);
    CHECK(rep.q025(0) == 1.5);
    CHECK(rep.q975(0) == 1.5);
  }
  SUBCASE("quantiles") {
    CHECK(empirical_quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
    CHECK(empirical_quantile({1, 2}, 0.25) == 1.25);
  }
}
