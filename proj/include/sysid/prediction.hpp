#pragma once

#include <cstdint>
#include <vector>

#include "sysid/mcmc.hpp"
#include "sysid/models.hpp"

namespace sysid {

/// Deterministic rollouts of posterior draws.
struct PredictiveEnsemble {
  VectorXd t_grid;
  std::vector<MatrixXd> rollouts;       ///< one len(t_grid) x d matrix per draw
  std::vector<Index> source_sample_idx; ///< chain row behind each rollout
  std::vector<bool> valid;              ///< false when the rollout went non-finite

  Index size() const { return static_cast<Index>(rollouts.size()); }
  Index dim() const { return rollouts.empty() ? 0 : rollouts.front().cols(); }
  Index valid_count() const;
  Index invalid_count() const { return size() - valid_count(); }
};

/// States Psi^k(x0) at the grid times, where x0 sits at t0 and every grid time
/// must be t0 + k dt with k >= 0. Rows with non-finite values are left as they
/// came out of the model; a thrown BlowUpError fills the rest with NaN.
MatrixXd deterministic_rollout(const StateSpaceModel& model, const ParameterVector& theta, const VectorXd& x0,
                               double t0, const VectorXd& t_grid);

/// Same for x_{k+1} = A x_k.
MatrixXd linear_rollout(const MatrixXd& a, const VectorXd& x0, double t0, double dt, const VectorXd& t_grid);

/// Draws n_draws rows uniformly with replacement from chain rows [burn_in, end)
/// and rolls each forward without process noise.
PredictiveEnsemble posterior_predictive(const Chain& chain, Index burn_in, const StateSpaceModel& model,
                                        const VectorXd& x0, double t0, const VectorXd& t_grid, Index n_draws,
                                        std::uint64_t seed);
/// Uses the chain's default burn-in.
PredictiveEnsemble posterior_predictive(const Chain& chain, const StateSpaceModel& model, const VectorXd& x0,
                                        double t0, const VectorXd& t_grid, Index n_draws, std::uint64_t seed);

enum class ReduceRule { Mean, QuantileBand, Mode };

struct ReduceSpec {
  ReduceRule rule = ReduceRule::Mean;
  double lo = 0.025;
  double hi = 0.975;

  static ReduceSpec mean() { return {}; }
  static ReduceSpec band(double lo, double hi) { return {ReduceRule::QuantileBand, lo, hi}; }
  static ReduceSpec mode() { return {ReduceRule::Mode, 0.0, 0.0}; }
};

struct Reduction {
  VectorXd t_grid;
  MatrixXd estimate;  ///< len(t_grid) x d; the pointwise median for QuantileBand
  MatrixXd lo;        ///< empty unless QuantileBand
  MatrixXd hi;
  Index n_valid = 0;
  Index n_excluded = 0;
};

/// Pointwise reduction over the valid rollouts. Mode needs at least 30.
Reduction reduce(const PredictiveEnsemble& ensemble, const ReduceSpec& spec);

/// Highest point of a Gaussian kernel density estimate with Silverman's bandwidth.
double kde_mode(std::vector<double> values);

struct ThetaEstimates {
  VectorXd mean;
  VectorXd map;
  Index map_row = 0;  ///< chain row of the MAP sample
};

/// Column means and the highest-log-posterior row of chain rows [burn_in, end).
ThetaEstimates theta_estimators(const Chain& chain, Index burn_in);
ThetaEstimates theta_estimators(const Chain& chain);

/// Trajectory from a time vector and a len(times) x d matrix.
Trajectory to_trajectory(const VectorXd& times, const MatrixXd& rows);

/// Mean over observation times and states of (est - truth)^2. Both trajectories
/// must contain every observation time.
double mse_at_observations(const Trajectory& est, const Trajectory& truth, const VectorXd& obs_times);

}  // namespace sysid
