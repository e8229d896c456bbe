#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sysid/types.hpp"

namespace sysid {

enum class SystemId { LinearPendulum, NonlinearPendulum, VanDerPol, Lorenz63, ReactionDiffusion1D };

std::string to_string(SystemId id);
SystemId system_from_string(const std::string& name);

/// Uniform 1-D grid with n_points nodes spanning [x_min, x_max].
struct Grid1D {
  Index n_points = 0;
  double x_min = 0.0;
  double x_max = 0.0;

  double spacing() const { return (x_max - x_min) / static_cast<double>(n_points - 1); }
};

/// Thrown when an integration produces non-finite values.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(double time, const std::string& what) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Truth system description. Physical parameter names:
///   LinearPendulum, NonlinearPendulum: g, L
///   VanDerPol: mu
///   Lorenz63: sigma, rho, beta
///   ReactionDiffusion1D: theta1, theta2, theta3 (diffusion C1, diffusion C2, reaction gain)
struct TruthSystemSpec {
  SystemId system = SystemId::LinearPendulum;
  std::map<std::string, double> physical_params;
  VectorXd x0;
  std::optional<Grid1D> grid;
  /// Reaction-diffusion: seed for the U(0.4, 0.6) initial field when x0 is empty.
  std::uint64_t ic_seed = 0;
  /// Reaction-diffusion: use theta2 * C2_xx * C2 instead of theta2 * C2_xx.
  bool literal_c2_diffusion = false;

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
  /// x0, generating the reaction-diffusion random field when needed.
  VectorXd initial_state() const;
  Index state_dim() const;
  Index observation_dim() const;
  double param(const std::string& name) const;

  /// Settings used for the benchmark systems (reaction-diffusion on `grid_points` nodes).
  static TruthSystemSpec defaults(SystemId system, Index grid_points = 201);
};

struct Trajectory {
  VectorXd times;
  std::vector<VectorXd> states;

  Index size() const { return times.size(); }
  Index dim() const { return states.empty() ? 0 : states.front().size(); }
  void validate() const;
};

struct ObservationSet {
  VectorXd times;
  std::vector<std::optional<VectorXd>> observations;
  std::uint64_t noise_seed = 0;

  Index size() const { return times.size(); }
  Index dim() const;
  Index present_count() const;
  bool dense() const { return present_count() == size(); }
  void validate() const;
  /// Records [first, size()).
  ObservationSet tail(Index first) const;
  /// Present observations stacked as columns (m x present_count).
  MatrixXd present_matrix() const;
};

/// Polynomial feature library: each term is a multi-index of exponents.
struct DictionaryLibrary {
  Index d_in = 0;
  std::vector<std::vector<int>> terms;

  Index n_terms() const { return static_cast<Index>(terms.size()); }
  /// All monomials of total degree <= max_degree, graded lexicographic order
  /// (degree ascending; within a degree, x1 exponent descending, then x2, ...).
  static DictionaryLibrary monomials(Index d_in, int max_degree, bool include_constant = true);
  std::vector<std::string> labels() const;
  void validate() const;
};

/// Library features at x, in term order.
template <typename Derived>
Vec<typename Derived::Scalar> dictionary_eval(const DictionaryLibrary& lib, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() != lib.d_in) throw std::invalid_argument("dictionary_eval: state dimension does not match library");
  Vec<Scalar> out(lib.n_terms());
  for (Index t = 0; t < lib.n_terms(); ++t) {
    Scalar v(1);
    const auto& e = lib.terms[static_cast<std::size_t>(t)];
    for (Index j = 0; j < lib.d_in; ++j)
      for (int p = 0; p < e[static_cast<std::size_t>(j)]; ++p) v *= x(j);
    out(t) = v;
  }
  return out;
}

/// Continuous-time right-hand side f(x, theta).
using VectorField = std::function<VectorXd(const VectorXd&, const VectorXd&)>;

/// Parameterized vector fields of the benchmark systems, with parameters:
///   LinearPendulum: (theta1, theta2) in x1' = theta1 x2, x2' = theta2 x1
///   NonlinearPendulum: (g/L)
///   VanDerPol: (mu)
///   Lorenz63: (sigma, rho, beta)
///   ReactionDiffusion1D: (theta1, theta2, theta3); needs the grid.
struct KnownField {
  VectorField field;
  Index n_params = 0;
};
KnownField known_vector_field(SystemId system, const std::optional<Grid1D>& grid = std::nullopt,
                              bool literal_c2_diffusion = false);

/// x' = Xi(x) theta with one coefficient block of lib.n_terms() per state.
VectorField dictionary_vector_field(const DictionaryLibrary& lib);

/// Method-of-lines right-hand side of the reaction-diffusion system. The state
/// stacks C1 over the grid followed by C2. Neumann boundaries via ghost nodes.
VectorXd reaction_diffusion_rhs(const Grid1D& grid, const VectorXd& state, double theta1, double theta2,
                                double theta3, bool literal_c2_diffusion = false);

/// First two spatial moments of C1 (trapezoid rule).
VectorXd concentration_moments(const Grid1D& grid, const VectorXd& state);

/// Noiseless states at t_grid, starting from the initial state at t = 0.
Trajectory simulate_truth(const TruthSystemSpec& spec, const VectorXd& t_grid);

/// Applies the observation map, adds N(0, noise_std^2) noise and keeps records
/// 0, keep_every, 2 keep_every, ...
ObservationSet observe(const Trajectory& traj, const TruthSystemSpec& spec, double noise_std, std::uint64_t seed,
                       Index keep_every = 1);

/// The noiseless observation map of a truth system.
VectorXd truth_observation(const TruthSystemSpec& spec, const VectorXd& state);

// ---------------------------------------------------------------------------
// State-space models

enum class CovarianceForm { Isotropic, Diagonal, Fixed };

/// Covariance parameterization: theta * I, diag(theta), or a fixed matrix.
struct CovarianceSpec {
  CovarianceForm form = CovarianceForm::Isotropic;
  Index dim = 0;
  MatrixXd fixed;

  static CovarianceSpec isotropic(Index dim) { return {CovarianceForm::Isotropic, dim, {}}; }
  static CovarianceSpec diagonal(Index dim) { return {CovarianceForm::Diagonal, dim, {}}; }
  static CovarianceSpec constant(MatrixXd m) {
    const Index n = m.rows();
    return {CovarianceForm::Fixed, n, std::move(m)};
  }

  Index n_params() const;
  MatrixXd build(const Eigen::Ref<const VectorXd>& theta) const;
};

enum class ModelFamily { LinearMatrix, EulerDictionary, KnownODE, Custom };

struct StateSpaceModel {
  using Map = std::function<VectorXd(const VectorXd&, const VectorXd&)>;
  using MatrixMap = std::function<MatrixXd(const VectorXd&)>;

  ModelFamily family = ModelFamily::Custom;
  Index state_dim = 0;
  Index obs_dim = 0;
  double dt = 1.0;
  Partition partition;

  Map dynamics;     ///< (x, theta_dyn) -> next state
  Map observation;  ///< (x, theta_obs) -> observation
  MatrixMap proc_cov;
  MatrixMap meas_cov;

  /// Set for models linear in the state: dynamics(x) == A(theta) x, observation(x) == H(theta) x.
  MatrixMap transition_matrix;
  MatrixMap observation_matrix;

  /// Set for invertible observation maps.
  Map observation_inverse;
  std::function<double(const VectorXd&, const VectorXd&)> log_abs_det_inverse_jacobian;
  bool identity_observation = false;

  bool is_linear() const { return static_cast<bool>(transition_matrix) && static_cast<bool>(observation_matrix); }
  bool invertible_observation() const { return static_cast<bool>(observation_inverse); }
  Index n_params() const { return partition.total(); }

  VectorXd propagate(const VectorXd& x, const ParameterVector& theta) const {
    return dynamics(x, theta.dynamics());
  }
  VectorXd measure(const VectorXd& x, const ParameterVector& theta) const {
    return observation(x, theta.observation());
  }
  MatrixXd process_covariance(const ParameterVector& theta) const { return proc_cov(theta.process()); }
  MatrixXd measurement_covariance(const ParameterVector& theta) const { return meas_cov(theta.measurement()); }
  ParameterVector parameters(VectorXd values) const { return ParameterVector(std::move(values), partition); }
};

enum class ObservationKind { Identity, Matrix, Moments };

struct ModelConfig {
  Index state_dim = 0;
  double dt = 1.0;
  CovarianceSpec process = CovarianceSpec::isotropic(0);
  CovarianceSpec measurement = CovarianceSpec::isotropic(0);

  ObservationKind observation = ObservationKind::Identity;
  MatrixXd observation_matrix;     ///< ObservationKind::Matrix
  std::optional<Grid1D> grid;      ///< ObservationKind::Moments and reaction-diffusion fields

  DictionaryLibrary library;       ///< EulerDictionary
  KnownField known;                ///< KnownODE
  int substeps = 1;                ///< KnownODE: RK4 substeps per model step
};

/// Builds a model of the requested family.
///   LinearMatrix: A(theta) filled row-major from the d*d dynamics parameters.
///   EulerDictionary: x + dt * Xi(x) theta, one coefficient block per state.
///   KnownODE: `substeps` RK4 steps of cfg.known over dt.
StateSpaceModel make_model(ModelFamily family, const ModelConfig& cfg);

/// Linear model with a user-supplied A(theta_dyn) of n_dyn parameters.
StateSpaceModel make_linear_model(const ModelConfig& cfg, Index n_dyn, StateSpaceModel::MatrixMap transition);

}  // namespace sysid
