#include "sysid/mcmc.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>

#include "sysid/rng.hpp"

namespace sysid {

void DramConfig::validate() const {
  if (n0 < 1) throw std::invalid_argument("dram: n0 must be >= 1");
  if (n_samples <= n0) throw std::invalid_argument("dram: n_samples must exceed n0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("dram: gamma must lie in (0, 1)");
  if (adapt_interval < 1) throw std::invalid_argument("dram: adapt_interval must be >= 1");
  if (sd && !(*sd > 0.0)) throw std::invalid_argument("dram: sd must be > 0");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw std::invalid_argument("dram: burn_in_fraction must lie in [0, 1)");
}

MatrixXd Chain::post_burn_in(Index burn_in) const {
  if (burn_in < 0 || burn_in >= size()) throw std::invalid_argument("chain: burn-in must be < chain length");
  return samples.bottomRows(size() - burn_in);
}

double stage1_log_acceptance(double log_post_current, double log_post_proposal) {
  if (log_post_proposal == kNegInf || std::isnan(log_post_proposal)) return kNegInf;
  return std::min(0.0, log_post_proposal - log_post_current);
}

namespace {

/// log(1 - exp(a)) for a <= 0.
double log1m_exp(double a) {
  if (a == kNegInf) return 0.0;
  if (a >= 0.0) return kNegInf;
  return a > -0.693 ? std::log(-std::expm1(a)) : std::log1p(-std::exp(a));
}

/// Unnormalized log N(to; from, L L^T).
double log_q(const VectorXd& from, const VectorXd& to, const MatrixXd& chol) {
  const VectorXd z = chol.triangularView<Eigen::Lower>().solve(to - from);
  return -0.5 * z.squaredNorm();
}

}  // namespace

double stage2_log_acceptance(const VectorXd& x, double lp_x, const VectorXd& y1, double lp_y1, const VectorXd& y2,
                             double lp_y2, const MatrixXd& chol1) {
  if (lp_y2 == kNegInf || std::isnan(lp_y2)) return kNegInf;
  const double num = lp_y2 + log_q(y2, y1, chol1) + log1m_exp(stage1_log_acceptance(lp_y2, lp_y1));
  const double den = lp_x + log_q(x, y1, chol1) + log1m_exp(stage1_log_acceptance(lp_x, lp_y1));
  if (num == kNegInf) return kNegInf;
  return std::min(0.0, num - den);
}

Chain dram_sample(const LogDensity& target, const VectorXd& theta0, const MatrixXd& proposal_cov,
                  const DramConfig& cfg) {
  cfg.validate();
  const Index p = theta0.size();
  if (proposal_cov.rows() != p || proposal_cov.cols() != p)
    throw std::invalid_argument("dram: proposal covariance has wrong shape");
  MatrixXd c0 = proposal_cov;
  symmetrize_with_nugget(c0, cfg.nugget);
  Eigen::LLT<MatrixXd> llt0(c0);
  if (llt0.info() != Eigen::Success) throw std::invalid_argument("dram: initial proposal covariance is not positive definite");
  double lp = target(theta0);
  if (!(lp > kNegInf)) throw std::invalid_argument("dram: initial point has zero posterior density");

  const Index n = cfg.n_samples;
  const double sd = cfg.scale(p);
  CounterRng rng(cfg.seed);

  Chain chain;
  chain.config = cfg;
  chain.samples.resize(n, p);
  chain.log_post.resize(n);
  chain.accepted.assign(static_cast<std::size_t>(n), false);
  chain.stage.assign(static_cast<std::size_t>(n), Stage::Reject);
  chain.proposal_cov_initial = proposal_cov;
  chain.adaptation_history.emplace_back(0, proposal_cov);

  MatrixXd chol = llt0.matrixL();
  MatrixXd cov = proposal_cov;
  VectorXd x = theta0;

  // Running mean and scatter of theta0 and the samples drawn so far.
  VectorXd mean = theta0;
  MatrixXd scatter = MatrixXd::Zero(p, p);
  Index count = 1;
  const Index snapshot_every = std::max<Index>(1, n / 20);

  for (Index i = 0; i < n; ++i) {
    if (i >= cfg.n0 && (i - cfg.n0) % cfg.adapt_interval == 0) {
      MatrixXd adapted = sd * scatter / static_cast<double>(count - 1);
      adapted.diagonal().array() += sd * cfg.nugget;
      adapted = (0.5 * (adapted + adapted.transpose())).eval();
      Eigen::LLT<MatrixXd> llt(adapted);
      if (llt.info() == Eigen::Success && adapted.allFinite()) {
        cov = adapted;
        chol = llt.matrixL();
      }
      if (i == cfg.n0 || (i - cfg.n0) % snapshot_every == 0) chain.adaptation_history.emplace_back(i, cov);
    }

    const VectorXd y1 = x + chol * rng.normal_vector(p);
    double lp1 = target(y1);
    if (std::isnan(lp1)) lp1 = kNegInf;
    const double a1 = stage1_log_acceptance(lp, lp1);
    if (std::log(rng.uniform_open0()) <= a1) {
      x = y1;
      lp = lp1;
      chain.accepted[static_cast<std::size_t>(i)] = true;
      chain.stage[static_cast<std::size_t>(i)] = Stage::One;
    } else if (cfg.delayed_rejection) {
      const VectorXd y2 = x + cfg.gamma * (chol * rng.normal_vector(p));
      double lp2 = target(y2);
      if (std::isnan(lp2)) lp2 = kNegInf;
      const double a2 = stage2_log_acceptance(x, lp, y1, lp1, y2, lp2, chol);
      if (std::log(rng.uniform_open0()) <= a2) {
        x = y2;
        lp = lp2;
        chain.accepted[static_cast<std::size_t>(i)] = true;
        chain.stage[static_cast<std::size_t>(i)] = Stage::Two;
      }
    }
    chain.samples.row(i) = x.transpose();
    chain.log_post(i) = lp;

    ++count;
    const VectorXd delta = x - mean;
    mean += delta / static_cast<double>(count);
    scatter += delta * (x - mean).transpose();
  }
  chain.proposal_cov_final = cov;
  return chain;
}

Chain dram_sample(const PosteriorHandle& handle, const VectorXd& theta0, const MatrixXd& proposal_cov,
                  const DramConfig& cfg) {
  return dram_sample(handle.target(), theta0, proposal_cov, cfg);
}

// ---------------------------------------------------------------------------
// Diagnostics

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double effective_sample_size(const VectorXd& series) {
  const Index n = series.size();
  if (n < 2) return static_cast<double>(n);
  const VectorXd centered = series.array() - series.mean();
  const double var0 = centered.squaredNorm() / static_cast<double>(n);
  if (!(var0 > 0.0)) return 1.0;

  // Autocovariance through a zero-padded FFT.
  Index len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(static_cast<std::size_t>(len), 0.0);
  for (Index i = 0; i < n; ++i) padded[static_cast<std::size_t>(i)] = centered(i);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& z : freq) z = std::complex<double>(std::norm(z), 0.0);
  std::vector<double> acov;
  fft.inv(acov, freq);
  auto rho = [&](Index t) { return acov[static_cast<std::size_t>(t)] / acov[0]; };

  // Initial positive sequence: sum pairs Gamma_k = rho(2k) + rho(2k+1) while positive.
  double tau = -1.0;
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    const double g = rho(2 * k) + rho(2 * k + 1);
    if (!(g > 0.0)) break;
    tau += 2.0 * g;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

ChainReport chain_diagnostics(const Chain& chain, Index burn_in) {
  const MatrixXd kept = chain.post_burn_in(burn_in);
  ChainReport r;
  r.burn_in = burn_in;
  r.n_used = kept.rows();
  Index moved = 0, s1 = 0, s2 = 0, attempts2 = 0;
  for (Index i = burn_in; i < chain.size(); ++i) {
    const auto st = chain.stage[static_cast<std::size_t>(i)];
    if (chain.accepted[static_cast<std::size_t>(i)]) ++moved;
    if (st == Stage::One) ++s1;
    if (st != Stage::One && chain.config.delayed_rejection) ++attempts2;
    if (st == Stage::Two) ++s2;
  }
  const double used = static_cast<double>(r.n_used);
  r.acceptance = static_cast<double>(moved) / used;
  r.acceptance_stage1 = static_cast<double>(s1) / used;
  r.acceptance_stage2 = attempts2 > 0 ? static_cast<double>(s2) / static_cast<double>(attempts2) : 0.0;

  const Index p = kept.cols();
  r.ess.resize(p);
  r.mean = kept.colwise().mean().transpose();
  r.q025.resize(p);
  r.q500.resize(p);
  r.q975.resize(p);
  for (Index j = 0; j < p; ++j) {
    const VectorXd col = kept.col(j);
    r.ess(j) = effective_sample_size(col);
    std::vector<double> v(col.data(), col.data() + col.size());
    r.q025(j) = empirical_quantile(v, 0.025);
    r.q500(j) = empirical_quantile(v, 0.5);
    r.q975(j) = empirical_quantile(v, 0.975);
  }
  return r;
}

}  // namespace sysid
