#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sysid/config.hpp"
#include "sysid/io.hpp"

namespace sysid {

enum class FitMethod { Bayes, DMD, TDMD, SINDy };
std::string to_string(FitMethod m);
FitMethod fit_method_from_string(const std::string& name);

/// Command-line overrides on top of the config.
struct CommandOptions {
  std::optional<std::string> out;  ///< replaces cfg.outputs
  bool force = false;
  bool full = false;  ///< sweep suite: full-scale 500 realizations
  std::optional<std::uint64_t> seed_override;
  FitMethod method = FitMethod::Bayes;
  std::optional<std::string> data_path;   ///< default <out>/observations.csv
  std::optional<std::string> chain_path;  ///< default <out>/chain.csv
  std::optional<double> horizon;
  std::optional<Index> draws;
  std::optional<VectorXd> alt_x0;  ///< prediction start state at t = 0
};

struct CommandResult {
  std::string dir;
  std::vector<std::string> files;  ///< names written, manifest last
};

/// trajectory.csv (truth at 0, dt, ..., n dt), observations.csv. Every command
/// also writes manifest_<command>.json (config echo, seeds, version).
CommandResult cmd_simulate(ExperimentConfig cfg, const CommandOptions& opt);

/// bayes: map.json, chain.csv, diagnostics.json. dmd/tdmd: coefficients.csv,
/// eigenvalues.csv. sindy: coefficients.csv.
CommandResult cmd_fit(ExperimentConfig cfg, const CommandOptions& opt);

/// ensemble.csv, reductions.csv (mean with the 2.5/97.5 band), mode.csv when at
/// least 30 rollouts are valid.
CommandResult cmd_predict(ExperimentConfig cfg, const CommandOptions& opt);

/// landscape | sweep | flops | scaling.
CommandResult cmd_suite(const std::string& suite, ExperimentConfig cfg, const CommandOptions& opt);

/// Text CSV for tables with name columns.
void write_text_csv(const std::string& path, const std::vector<std::string>& comments,
                    const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

}  // namespace sysid
