#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sysid/posterior.hpp"

namespace sysid {

/// Delayed-rejection adaptive Metropolis settings.
struct DramConfig {
  Index n_samples = 10000;
  Index n0 = 200;              ///< steps before adaptation starts
  double gamma = 0.01;         ///< stage-2 proposal scale; its covariance is gamma^2 C
  Index adapt_interval = 1;
  std::optional<double> sd;    ///< adaptation scale; 2.38^2 / p when unset
  double nugget = kNugget;
  std::uint64_t seed = 0;
  bool delayed_rejection = true;
  double burn_in_fraction = 0.2;

  double scale(Index p) const { return sd ? *sd : 2.38 * 2.38 / static_cast<double>(p); }
  void validate() const;
};

enum class Stage : std::int8_t { Reject = 0, One = 1, Two = 2 };

struct Chain {
  MatrixXd samples;  ///< n_samples x p; row i is the state after step i
  VectorXd log_post;
  std::vector<bool> accepted;
  std::vector<Stage> stage;
  MatrixXd proposal_cov_initial;
  MatrixXd proposal_cov_final;
  /// Proposal covariance snapshots (step index, covariance in force from that step).
  std::vector<std::pair<Index, MatrixXd>> adaptation_history;
  DramConfig config;

  Index size() const { return samples.rows(); }
  Index dim() const { return samples.cols(); }
  Index default_burn_in() const {
    return static_cast<Index>(config.burn_in_fraction * static_cast<double>(size()));
  }
  /// Rows [burn_in, size()).
  MatrixXd post_burn_in(Index burn_in) const;
};

/// log of the stage-1 acceptance probability min(1, pi(y) / pi(x)).
double stage1_log_acceptance(double log_post_current, double log_post_proposal);

/// log of the delayed-rejection stage-2 acceptance probability for the second
/// proposal y2 after y1 was rejected from x; `chol1` is the lower Cholesky
/// factor of the stage-1 proposal covariance.
double stage2_log_acceptance(const VectorXd& x, double lp_x, const VectorXd& y1, double lp_y1, const VectorXd& y2,
                             double lp_y2, const MatrixXd& chol1);

/// Samples the target with DRAM. Throws std::invalid_argument when theta0 has
/// zero density or the initial proposal covariance is not positive definite.
Chain dram_sample(const LogDensity& target, const VectorXd& theta0, const MatrixXd& proposal_cov, const DramConfig& cfg);
Chain dram_sample(const PosteriorHandle& handle, const VectorXd& theta0, const MatrixXd& proposal_cov,
                  const DramConfig& cfg);

struct ChainReport {
  Index burn_in = 0;
  Index n_used = 0;
  double acceptance = 0.0;         ///< fraction of steps that moved
  double acceptance_stage1 = 0.0;  ///< stage-1 accepts per step
  double acceptance_stage2 = 0.0;  ///< stage-2 accepts per stage-2 attempt
  VectorXd ess;
  VectorXd mean;
  VectorXd q025;
  VectorXd q500;
  VectorXd q975;
};

ChainReport chain_diagnostics(const Chain& chain, Index burn_in);

/// Effective sample size via Geyer's initial positive sequence; 1 for a
/// constant series.
double effective_sample_size(const VectorXd& series);

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace sysid
