#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

#include "sysid/baselines.hpp"
#include "sysid/mcmc.hpp"
#include "sysid/prediction.hpp"

namespace sysid {

inline constexpr const char* kToolVersion = "0.1.0";

/// Malformed input file; the message names the file and row.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that reads back to the same double; "nan", "inf", "-inf".
std::string format_double(double v);

/// Numeric CSV. Lines starting with '#' are comments.
struct CsvTable {
  std::vector<std::string> comments;  ///< without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name; throws ParseError when absent.
  std::size_t column(const std::string& name) const;
};

void write_csv(const std::string& path, const CsvTable& table);
/// Every row must have the header's width and parse as numbers.
CsvTable read_csv(const std::string& path);

/// Comment line recorded at the top of every CSV this tool writes.
std::string seed_comment(std::uint64_t seed);

/// t, x1..xd
void write_trajectory_csv(const std::string& path, const Trajectory& traj, std::uint64_t seed);
/// t, y1..ym, present; missing records have nan values and present = 0.
void write_observations_csv(const std::string& path, const ObservationSet& obs, std::uint64_t seed);
ObservationSet read_observations_csv(const std::string& path);

/// step, theta1..thetap, log_post, accepted, stage
void write_chain_csv(const std::string& path, const Chain& chain, std::uint64_t seed);
/// Samples, log posterior, acceptance and stage. Proposal history is not stored.
Chain read_chain_csv(const std::string& path);

/// draw, t, x1..xd, valid (long format)
void write_ensemble_csv(const std::string& path, const PredictiveEnsemble& ens, std::uint64_t seed);
/// t, est_1..est_d, lo_1..lo_d, hi_1..hi_d
void write_reduction_csv(const std::string& path, const Reduction& red, std::uint64_t seed);

/// Pretty-printed with sorted keys so reruns are byte-identical.
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

nlohmann::json chain_report_json(const ChainReport& report, const Chain& chain);
nlohmann::json map_json(const MapResult& map);

/// Creates `dir` and checks that none of `files` exists in it unless `force`.
/// Throws std::runtime_error before anything is written.
void prepare_outputs(const std::string& dir, const std::vector<std::string>& files, bool force);

}  // namespace sysid
