#include "sysid/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace sysid {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

bool parse_double(const std::string& s, double& out) {
  if (s == "nan" || s == "-nan") {
    out = kNaN;
    return true;
  }
  if (s == "inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (s == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && !s.empty();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> out;
  for (Index i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError("csv has no column '" + name + "'");
}

void write_csv(const std::string& path, const CsvTable& table) {
  auto out = open_out(path);
  for (const auto& c : table.comments) out << "# " << c << '\n';
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  std::size_t data_row = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line.size() > 2 && line[1] == ' ' ? line.substr(2) : line.substr(1));
      continue;
    }
    if (!have_header) {
      t.header = split(line);
      have_header = true;
      continue;
    }
    ++data_row;
    const auto cells = split(line);
    const std::string where = path + ": row " + std::to_string(data_row) + " (line " + std::to_string(line_no) + ")";
    if (cells.size() != t.header.size())
      throw ParseError(where + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!parse_double(cells[i], row[i]))
        throw ParseError(where + ": column '" + t.header[i] + "' is not a number: '" + cells[i] + "'");
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(path + ": missing header line");
  return t;
}

std::string seed_comment(std::uint64_t seed) {
  return std::string("sysid ") + kToolVersion + " rng=splitmix64-counter seed=" + std::to_string(seed);
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj, std::uint64_t seed) {
  CsvTable t;
  t.comments = {seed_comment(seed)};
  t.header = {"t"};
  for (auto& h : numbered("x", traj.dim())) t.header.push_back(h);
  for (Index k = 0; k < traj.size(); ++k) {
    std::vector<double> row{traj.times(k)};
    const VectorXd& x = traj.states[static_cast<std::size_t>(k)];
    row.insert(row.end(), x.data(), x.data() + x.size());
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

void write_observations_csv(const std::string& path, const ObservationSet& obs, std::uint64_t seed) {
  CsvTable t;
  t.comments = {seed_comment(seed)};
  const Index m = obs.dim();
  t.header = {"t"};
  for (auto& h : numbered("y", m)) t.header.push_back(h);
  t.header.push_back("present");
  for (Index k = 0; k < obs.size(); ++k) {
    std::vector<double> row{obs.times(k)};
    const auto& y = obs.observations[static_cast<std::size_t>(k)];
    for (Index i = 0; i < m; ++i) row.push_back(y ? (*y)(i) : kNaN);
    row.push_back(y ? 1.0 : 0.0);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

ObservationSet read_observations_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 3 || t.header.front() != "t" || t.header.back() != "present")
    throw ParseError(path + ": expected header t,y1..ym,present");
  const std::size_t m = t.header.size() - 2;
  ObservationSet obs;
  obs.times.resize(static_cast<Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    obs.times(static_cast<Index>(r)) = row[0];
    const double present = row.back();
    if (present == 1.0) {
      VectorXd y(static_cast<Index>(m));
      for (std::size_t i = 0; i < m; ++i) y(static_cast<Index>(i)) = row[i + 1];
      if (!y.allFinite()) throw ParseError(path + ": row " + std::to_string(r + 1) + ": present record has non-finite values");
      obs.observations.emplace_back(y);
    } else if (present == 0.0) {
      obs.observations.emplace_back(std::nullopt);
    } else {
      throw ParseError(path + ": row " + std::to_string(r + 1) + ": present must be 0 or 1");
    }
  }
  try {
    obs.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return obs;
}

void write_chain_csv(const std::string& path, const Chain& chain, std::uint64_t seed) {
  CsvTable t;
  t.comments = {seed_comment(seed)};
  t.header = {"step"};
  for (auto& h : numbered("theta", chain.dim())) t.header.push_back(h);
  t.header.insert(t.header.end(), {"log_post", "accepted", "stage"});
  for (Index i = 0; i < chain.size(); ++i) {
    std::vector<double> row{static_cast<double>(i)};
    for (Index j = 0; j < chain.dim(); ++j) row.push_back(chain.samples(i, j));
    row.push_back(chain.log_post(i));
    row.push_back(chain.accepted[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
    row.push_back(static_cast<double>(chain.stage[static_cast<std::size_t>(i)]));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

Chain read_chain_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t w = t.header.size();
  if (w < 5 || t.header[0] != "step" || t.header[w - 3] != "log_post" || t.header[w - 2] != "accepted" ||
      t.header[w - 1] != "stage")
    throw ParseError(path + ": expected header step,theta1..thetap,log_post,accepted,stage");
  if (t.rows.empty()) throw ParseError(path + ": chain has no rows");
  const Index p = static_cast<Index>(w - 4);
  const Index n = static_cast<Index>(t.rows.size());
  Chain c;
  c.samples.resize(n, p);
  c.log_post.resize(n);
  c.accepted.resize(static_cast<std::size_t>(n));
  c.stage.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    const std::string where = path + ": row " + std::to_string(i + 1);
    if (row[0] != static_cast<double>(i)) throw ParseError(where + ": step " + format_double(row[0]) + " out of sequence");
    for (Index j = 0; j < p; ++j) {
      c.samples(i, j) = row[static_cast<std::size_t>(j + 1)];
      if (!std::isfinite(c.samples(i, j))) throw ParseError(where + ": non-finite parameter value");
    }
    c.log_post(i) = row[w - 3];
    const double acc = row[w - 2];
    const double st = row[w - 1];
    if (acc != 0.0 && acc != 1.0) throw ParseError(where + ": accepted must be 0 or 1");
    if (st != 0.0 && st != 1.0 && st != 2.0) throw ParseError(where + ": stage must be 0, 1 or 2");
    c.accepted[static_cast<std::size_t>(i)] = acc == 1.0;
    c.stage[static_cast<std::size_t>(i)] = static_cast<Stage>(static_cast<int>(st));
  }
  c.config.n_samples = n;
  return c;
}

void write_ensemble_csv(const std::string& path, const PredictiveEnsemble& ens, std::uint64_t seed) {
  CsvTable t;
  t.comments = {seed_comment(seed)};
  t.header = {"draw", "t"};
  for (auto& h : numbered("x", ens.dim())) t.header.push_back(h);
  t.header.push_back("valid");
  for (Index r = 0; r < ens.size(); ++r) {
    const MatrixXd& roll = ens.rollouts[static_cast<std::size_t>(r)];
    const double valid = ens.valid[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
    for (Index k = 0; k < ens.t_grid.size(); ++k) {
      std::vector<double> row{static_cast<double>(r), ens.t_grid(k)};
      for (Index j = 0; j < roll.cols(); ++j) row.push_back(roll(k, j));
      row.push_back(valid);
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

void write_reduction_csv(const std::string& path, const Reduction& red, std::uint64_t seed) {
  CsvTable t;
  t.comments = {seed_comment(seed), "valid=" + std::to_string(red.n_valid) + " excluded=" + std::to_string(red.n_excluded)};
  const Index d = red.estimate.cols();
  const bool band = red.lo.size() > 0;
  t.header = {"t"};
  for (auto& h : numbered("est_", d)) t.header.push_back(h);
  if (band) {
    for (auto& h : numbered("lo_", d)) t.header.push_back(h);
    for (auto& h : numbered("hi_", d)) t.header.push_back(h);
  }
  for (Index k = 0; k < red.t_grid.size(); ++k) {
    std::vector<double> row{red.t_grid(k)};
    for (Index j = 0; j < d; ++j) row.push_back(red.estimate(k, j));
    if (band) {
      for (Index j = 0; j < d; ++j) row.push_back(red.lo(k, j));
      for (Index j = 0; j < d; ++j) row.push_back(red.hi(k, j));
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

namespace {

json vec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

}  // namespace

json chain_report_json(const ChainReport& r, const Chain& chain) {
  json j;
  j["n_samples"] = chain.size();
  j["burn_in"] = r.burn_in;
  j["n_used"] = r.n_used;
  j["acceptance"] = r.acceptance;
  j["acceptance_stage1"] = r.acceptance_stage1;
  j["acceptance_stage2"] = r.acceptance_stage2;
  j["ess"] = vec(r.ess);
  j["mean"] = vec(r.mean);
  j["q025"] = vec(r.q025);
  j["q500"] = vec(r.q500);
  j["q975"] = vec(r.q975);
  j["proposal_cov_initial"] = mat(chain.proposal_cov_initial);
  j["proposal_cov_final"] = mat(chain.proposal_cov_final);
  const auto& c = chain.config;
  j["dram"] = {{"n0", c.n0},         {"gamma", c.gamma}, {"adapt_interval", c.adapt_interval},
               {"sd", c.scale(chain.dim())}, {"nugget", c.nugget}, {"seed", c.seed},
               {"delayed_rejection", c.delayed_rejection}};
  return j;
}

json map_json(const MapResult& m) {
  return {{"theta", vec(m.theta)},
          {"log_post", m.log_post},
          {"neg_hessian_inv", mat(m.neg_hessian_inv)},
          {"hessian", m.hessian == HessianStatus::Ok ? "ok" : "fallback"},
          {"evaluations", m.evaluations},
          {"converged", m.converged}};
}

void prepare_outputs(const std::string& dir, const std::vector<std::string>& files, bool force) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_directory(dir)) throw std::runtime_error("output path '" + dir + "' is not a directory");
  if (!force)
    for (const auto& f : files)
      if (fs::exists(fs::path(dir) / f))
        throw std::runtime_error("refusing to overwrite '" + (fs::path(dir) / f).string() + "' (use --force)");
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace sysid
