#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sysid/experiments.hpp"

namespace sysid {

inline constexpr int kSchemaVersion = 1;

/// Config problem; `field` is the dotted path of the offending key ("" for
/// syntax errors, which carry the line in the message).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what) : std::runtime_error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

std::string to_string(ModelFamily f);
ModelFamily model_family_from_string(const std::string& name);

struct CovarianceConfig {
  CovarianceForm form = CovarianceForm::Isotropic;
  double value = 0.0;  ///< Fixed: the matrix is value * I
};

struct DataSettings {
  Index n = 40;
  double dt = 0.1;  ///< records at dt, 2 dt, ..., n dt
  double sigma = 0.1;
  std::uint64_t seed = 0;
  Index keep_every = 1;
};

struct ModelSettings {
  ModelFamily family = ModelFamily::LinearMatrix;
  int max_degree = 3;  ///< EulerDictionary
  bool include_constant = true;
  int substeps = 1;  ///< KnownODE
  CovarianceConfig process;
  CovarianceConfig measurement;
};

struct PriorSettings {
  PriorTerm dynamics;  ///< applied to every dynamics parameter
  double variance_scale = 1.0;
};

struct FilterConfig {
  LikelihoodKind kind = LikelihoodKind::KF;
  FilterSettings settings;
  InitialCondition::Mode init = InitialCondition::Mode::AnchorFirstObservation;
  std::optional<VectorXd> init_mean;  ///< Fixed: defaults to the truth's initial state
  double init_cov = 0.0;              ///< Fixed: initial covariance init_cov * I
};

struct FitSettings {
  std::optional<VectorXd> init;
  OptimizerConfig optimizer;
  double sindy_threshold = 0.1;
  Derivative sindy_derivative = Derivative::Central;
};

enum class PredictStart { LastObservation, Initial };

struct PredictSettings {
  double horizon = 10.0;  ///< seconds after the start time
  Index draws = 100;
  std::uint64_t seed = 0;
  PredictStart start = PredictStart::LastObservation;
  std::optional<VectorXd> x0;  ///< alternate start state at t = 0
};

struct LandscapeSuite {
  double t1_lo = 0.0, t1_hi = 2.0;
  Index n1 = 50;
  double t2_lo = -14.0, t2_hi = -6.0;
  Index n2 = 50;
  std::vector<LandscapeObjective> objectives = {LandscapeObjective::NoProcessNoise,
                                                LandscapeObjective::NoMeasurementNoise,
                                                LandscapeObjective::LogPosterior};
  double process_var = 1e-6;
  double meas_var = 1e-2;
};

struct FlopsSuite {
  std::vector<FlopDims> dims = {{1, 1, 1, 1, 0, 0}, {2, 2, 6, 40, 10, 4}, {3, 1, 7, 100, 25, 3},
                                {2, 2, 23, 2000, 50, 8}, {82, 2, 3, 30, 1000, 200}};
};

struct ScalingSuite {
  FilterKind filter = FilterKind::KF;
  std::vector<Index> d = {2};
  std::vector<Index> n = {1000, 10000, 100000};
  int trials = 5;
  std::uint64_t seed = 0;
};

struct SuiteSettings {
  LandscapeSuite landscape;
  SweepSpec sweep;
  FlopsSuite flops;
  ScalingSuite scaling;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  TruthSystemSpec truth;
  DataSettings data;
  ModelSettings model;
  PriorSettings prior;
  FilterConfig filter;
  FitSettings fit;
  DramConfig dram;
  PredictSettings predict;
  SuiteSettings suite;
  std::string outputs = "out";

  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Parses a config document. Unknown keys, wrong types and out-of-range values
/// throw ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
/// As above from text; syntax errors report the line.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Full effective config; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Builders

/// Record times dt, 2 dt, ..., n dt.
VectorXd record_times(const DataSettings& data);
StateSpaceModel build_model(const ExperimentConfig& cfg);
PriorSpec build_prior(const ExperimentConfig& cfg, const StateSpaceModel& model);
InitialCondition build_initial_condition(const ExperimentConfig& cfg);
PosteriorHandle build_posterior(const ExperimentConfig& cfg, const ObservationSet& data);

/// Optimizer start. fit.init when given. Otherwise the dynamics come from DMD
/// (LinearMatrix) or SINDy (EulerDictionary) and every variance parameter
/// starts at half the mean squared one-step residual of that fit (process
/// variance 1e-4 for LinearMatrix, as in the sweep). KnownODE needs fit.init.
VectorXd initial_theta(const ExperimentConfig& cfg, const StateSpaceModel& model, const ObservationSet& data);

BayesFitOptions bayes_options(const ExperimentConfig& cfg);

}  // namespace sysid
