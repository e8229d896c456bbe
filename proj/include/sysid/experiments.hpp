#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sysid/baselines.hpp"
#include "sysid/mcmc.hpp"
#include "sysid/prediction.hpp"

namespace sysid {

// ---------------------------------------------------------------------------
// MAP + DRAM

/// Proposal covariance for DRAM at a MAP point. Uses the MAP's inverse negative
/// Hessian when it was usable. Otherwise each diagonal entry is -1 / f'' along
/// that coordinate (one-sided stencil when the central one leaves the support),
/// and 1e-2 where that curvature is not negative.
MatrixXd initial_proposal(const LogDensity& f, const MapResult& map, bool* repaired = nullptr);

struct BayesFitOptions {
  OptimizerConfig optimizer;
  DramConfig dram;
};

struct BayesFit {
  MapResult map;
  MatrixXd proposal;
  bool proposal_repaired = false;
  Chain chain;
  ChainReport report;
  ThetaEstimates estimates;
};

/// find_map from `init`, then DRAM from the MAP with initial_proposal.
BayesFit bayes_fit(const PosteriorHandle& handle, const VectorXd& init, const BayesFitOptions& opts);

/// Starting point for the linear model with isotropic variances: DMD dynamics
/// (row-major), process variance 1e-4 and measurement variance half the mean
/// squared DMD residual.
VectorXd linear_bayes_init(const ObservationSet& obs);

// ---------------------------------------------------------------------------
// Objective geometry

/// Composite trapezoid approximation of int_0^T (cos 2t - cos w t)^2 dt.
double ls_frequency_cost(double omega, double horizon, double quad_step = 1e-3);

enum class LandscapeObjective { NoProcessNoise, NoMeasurementNoise, LogPosterior };
std::string to_string(LandscapeObjective o);

/// Generator [[0, theta1], [theta2, 0]] with its exact step exp(A dt).
MatrixXd pendulum_generator(double theta1, double theta2);

struct LandscapeConfig {
  VectorXd theta1;  ///< grid rows
  VectorXd theta2;  ///< grid columns
  VectorXd x0 = (VectorXd(2) << 0.1, -0.5).finished();  ///< state at t = 0
  double dt = 0.1;
  double process_var = 1e-6;  ///< fixed Sigma = process_var * I for LogPosterior
  double meas_var = 1e-2;     ///< fixed Gamma = meas_var * I for LogPosterior

  static LandscapeConfig grid(double t1_lo, double t1_hi, Index n1, double t2_lo, double t2_hi, Index n2);
};

struct Landscape {
  LandscapeObjective objective = LandscapeObjective::LogPosterior;
  VectorXd theta1;
  VectorXd theta2;
  MatrixXd values;  ///< values(i, j) at (theta1(i), theta2(j)); costs or log posterior

  /// Grid point minimizing the cost (maximizing the log posterior).
  Eigen::Vector2d best() const;
};

/// Posterior handle behind the LogPosterior landscape: the linear model with
/// A = exp(generator(theta) dt), fixed Sigma and Gamma, flat prior, KF from x0.
PosteriorHandle landscape_posterior(const ObservationSet& data, const LandscapeConfig& cfg);

/// Evaluates an objective over the grid, row-major. Data times must be
/// multiples of dt. A blown-up rollout records +inf cost.
Landscape objective_landscape(LandscapeObjective objective, const ObservationSet& data, const LandscapeConfig& cfg);

// ---------------------------------------------------------------------------
// MSE-ratio sweeps

enum class Algorithm { BayesKF, BayesUKF, DMD, TDMD, SINDy };
std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);
bool is_bayes(Algorithm a);

struct SweepSpec {
  std::vector<double> noise_levels;
  std::vector<Index> n_values;
  Index realizations = 20;
  std::vector<Algorithm> algorithms = {Algorithm::BayesKF, Algorithm::DMD, Algorithm::TDMD};
  std::uint64_t base_seed = 0;
  /// The n records of a cell are spread evenly over (0, window], dt = window / n.
  double window = 4.0;
  /// Prediction horizon in seconds; unset means the data window.
  std::optional<double> horizon;
  bool drop_worst = true;

  TruthSystemSpec truth = TruthSystemSpec::defaults(SystemId::LinearPendulum);
  Index chain_length = 5000;
  Index n_draws = 1000;

  void validate() const;
};

struct SweepCell {
  double sigma = 0.0;
  Index n = 0;
  Algorithm algorithm = Algorithm::DMD;
  std::vector<double> mse;  ///< per realization; NaN where the fit failed
  Index used = 0;           ///< realizations in the mean
  double mean_mse = kNaN;   ///< NaN when no realization succeeded
  /// log10(mean MSE of the reference Bayes algorithm / this one's); NaN for
  /// the reference itself, for missing cells and for 0 / 0.
  double log10_ratio = kNaN;
};

struct SweepResult {
  SweepSpec spec;
  Algorithm reference = Algorithm::BayesKF;
  std::vector<SweepCell> cells;  ///< ordered by sigma, n, then spec.algorithms

  const SweepCell& cell(double sigma, Index n, Algorithm a) const;
};

/// Seed of one realization.
std::uint64_t realization_seed(std::uint64_t base, std::size_t sigma_index, std::size_t n_index, Index realization);

/// Prediction MSE of one algorithm on one dataset with record spacing dt,
/// predicting from the true initial state over `t_pred`; throws when the fit fails.
double algorithm_mse(Algorithm a, const SweepSpec& spec, double dt, const ObservationSet& data,
                     const Trajectory& truth, const VectorXd& t_pred, std::uint64_t seed);

SweepResult mse_ratio_sweep(const SweepSpec& spec);

// ---------------------------------------------------------------------------
// Flop counts

using Rational = boost::rational<long long>;

enum class FlopAlgorithm { KFPredict, KFUpdate, KFTotal, UKFPredict, UKFUpdate, UKFTotal, DMD, SparseRegression };
std::string to_string(FlopAlgorithm a);
FlopAlgorithm flop_algorithm_from_string(const std::string& name);
inline constexpr FlopAlgorithm kAllFlopAlgorithms[] = {
    FlopAlgorithm::KFPredict,  FlopAlgorithm::KFUpdate,  FlopAlgorithm::KFTotal, FlopAlgorithm::UKFPredict,
    FlopAlgorithm::UKFUpdate, FlopAlgorithm::UKFTotal, FlopAlgorithm::DMD,     FlopAlgorithm::SparseRegression};

/// d state, m observation, p parameter dims; n records; F, H costs of one
/// model and one observation-map evaluation.
struct FlopDims {
  long long d = 0, m = 0, p = 0, n = 0, F = 0, H = 0;
  void validate() const;
};

/// Exact flop polynomial. SparseRegression divides by m, so m must be > 0 there.
Rational flop_model(FlopAlgorithm a, const FlopDims& dims);
std::string to_string(const Rational& r);

// ---------------------------------------------------------------------------
// Timing

enum class FilterKind { KF, UKF };

struct ScalingRow {
  Index d = 0;
  Index n = 0;
  double median_seconds = 0.0;
};

struct ScalingFit {
  Index d = 0;
  std::optional<double> slope;  ///< log time vs log n; absent for one n
  std::optional<double> r2;
};

struct ScalingResult {
  FilterKind filter = FilterKind::KF;
  std::vector<ScalingRow> rows;
  std::vector<ScalingFit> fits;
};

/// Median-of-trials wall time of one marginal likelihood on random linear data.
ScalingResult scaling_probe(FilterKind filter, const std::vector<Index>& d_list, const std::vector<Index>& n_list,
                            int trials, std::uint64_t seed = 0);

}  // namespace sysid
