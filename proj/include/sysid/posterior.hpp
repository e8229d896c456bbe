#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sysid/filters.hpp"
#include "sysid/models.hpp"

namespace sysid {

enum class PriorKind { ImproperUniform, HalfNormal, Laplace, Normal };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& name);

/// One-parameter prior. `a` is the scale (HalfNormal), rate (Laplace) or mean
/// (Normal); `b` is the Normal standard deviation.
struct PriorTerm {
  PriorKind kind = PriorKind::ImproperUniform;
  double a = 0.0;
  double b = 0.0;

  static PriorTerm uniform() { return {}; }
  static PriorTerm half_normal(double scale) { return {PriorKind::HalfNormal, scale, 0.0}; }
  static PriorTerm laplace(double rate) { return {PriorKind::Laplace, rate, 0.0}; }
  static PriorTerm normal(double mean, double sd) { return {PriorKind::Normal, mean, sd}; }

  /// Normalized log density (0 for the improper uniform).
  double log_density(double x) const;
  void validate() const;
};

struct PriorSpec {
  std::vector<PriorTerm> terms;

  Index size() const { return static_cast<Index>(terms.size()); }
  void validate() const;

  static PriorSpec uniform(Index p) { return {std::vector<PriorTerm>(static_cast<std::size_t>(p))}; }
  /// Improper uniform on the dynamics and observation blocks and half-normal(scale)
  /// on both variance blocks.
  static PriorSpec standard(const Partition& partition, double variance_scale = 1.0);
};

double log_prior(const PriorSpec& prior, const VectorXd& theta);

/// As above, and -inf when a variance block entry is negative.
double log_prior(const PriorSpec& prior, const ParameterVector& theta);

enum class LikelihoodKind { KF, UKF, Deterministic, Noiseless };

std::string to_string(LikelihoodKind kind);
LikelihoodKind likelihood_kind_from_string(const std::string& name);

/// Where the filter starts.
struct InitialCondition {
  enum class Mode {
    /// Identity h: belief N(y_first, Gamma(theta)) at the first record, filtering the rest.
    /// Deterministic likelihood: x0 = y_first.
    AnchorFirstObservation,
    /// `belief` sits one step before the first record; Deterministic uses belief.mean as x0.
    Fixed
  };
  Mode mode = Mode::AnchorFirstObservation;
  Belief belief;

  static InitialCondition anchored() { return {}; }
  static InitialCondition fixed(Belief b) { return {Mode::Fixed, std::move(b)}; }
};

/// Unnormalized log posterior of a model given data. Immutable after
/// construction; log_posterior may be called concurrently.
class PosteriorHandle {
 public:
  /// Throws std::invalid_argument when the likelihood kind does not fit the
  /// model (KF needs a linear model, Noiseless an invertible h) or the prior
  /// size does not match the parameter count.
  PosteriorHandle(StateSpaceModel model, ObservationSet data, PriorSpec prior, LikelihoodKind kind,
                  FilterSettings settings = {}, InitialCondition init = {});

  double log_likelihood(const VectorXd& theta) const;
  double log_posterior(const VectorXd& theta) const;
  double log_prior(const VectorXd& theta) const;

  /// Number of likelihood evaluations performed so far.
  std::uint64_t likelihood_calls() const { return calls_->load(); }

  const StateSpaceModel& model() const { return model_; }
  const ObservationSet& data() const { return data_; }
  const PriorSpec& prior() const { return prior_; }
  LikelihoodKind kind() const { return kind_; }
  const FilterSettings& settings() const { return settings_; }
  const InitialCondition& initial_condition() const { return init_; }
  Index dim() const { return model_.n_params(); }

  ParameterVector parameters(const VectorXd& theta) const { return model_.parameters(theta); }
  /// Callable view of log_posterior.
  std::function<double(const VectorXd&)> target() const;

 private:
  StateSpaceModel model_;
  ObservationSet data_;
  ObservationSet filtered_;  ///< data after the anchor record, when anchored
  PriorSpec prior_;
  LikelihoodKind kind_;
  FilterSettings settings_;
  InitialCondition init_;
  std::shared_ptr<std::atomic<std::uint64_t>> calls_;
};

using LogDensity = std::function<double(const VectorXd&)>;

enum class OptimizerMethod { NelderMead, BFGS };

struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::NelderMead;
  Index max_evaluations = 2000;
  /// Nelder-Mead: simplex size tolerance. BFGS: gradient-norm tolerance.
  double tolerance = 1e-10;
  /// Initial simplex edge: initial_step * |theta_i|, or initial_step when theta_i = 0.
  double initial_step = 0.1;
  /// Nelder-Mead restarts from the best point while the budget lasts.
  int restarts = 3;
  /// Relative finite-difference step for the Hessian.
  double hessian_step = 1e-4;
};

enum class HessianStatus { Ok, Fallback };

struct MapResult {
  VectorXd theta;
  double log_post = kNegInf;
  MatrixXd neg_hessian_inv;
  HessianStatus hessian = HessianStatus::Ok;
  Index evaluations = 0;
  bool converged = false;
};

/// Central finite-difference Hessian of f at x with steps h_i = rel * |x_i| (rel when
/// x_i = 0). Returns an empty matrix when a stencil value is not finite.
MatrixXd finite_difference_hessian(const LogDensity& f, const VectorXd& x, double rel = 1e-4);

/// Inverse of the negative Hessian, symmetrized with a nugget; nullopt when it
/// is not positive definite.
std::optional<MatrixXd> inverse_negative_hessian(const MatrixXd& hessian, double nugget = kNugget);

/// Maximizes f from `init`. Never returns a point worse than `init`. Throws
/// std::invalid_argument when no evaluated point has a finite value.
MapResult find_map(const LogDensity& f, const VectorXd& init, const OptimizerConfig& cfg = {});
MapResult find_map(const PosteriorHandle& handle, const VectorXd& init, const OptimizerConfig& cfg = {});

}  // namespace sysid
