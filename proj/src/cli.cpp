#include "sysid/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace sysid {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(FitMethod m) {
  switch (m) {
    case FitMethod::Bayes: return "bayes";
    case FitMethod::DMD: return "dmd";
    case FitMethod::TDMD: return "tdmd";
    case FitMethod::SINDy: return "sindy";
  }
  return "unknown";
}

FitMethod fit_method_from_string(const std::string& name) {
  for (auto m : {FitMethod::Bayes, FitMethod::DMD, FitMethod::TDMD, FitMethod::SINDy})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name + "' (bayes, dmd, tdmd, sindy)");
}

void write_text_csv(const std::string& path, const std::vector<std::string>& comments,
                    const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& c : comments) out << "# " << c << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string output_dir(ExperimentConfig& cfg, const CommandOptions& opt) {
  if (opt.out) cfg.outputs = *opt.out;
  return cfg.outputs;
}

json vec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// manifest_<command>.json, so commands sharing a directory keep their own.
std::string manifest_name(const std::string& command) {
  std::string name = "manifest_" + command + ".json";
  for (auto& ch : name)
    if (ch == ' ') ch = '_';
  return name;
}

void write_manifest(const std::string& dir, const std::string& command, const ExperimentConfig& cfg, json seeds,
                    std::vector<std::string>& files, json extra = json::object()) {
  json m;
  m["tool"] = "sysid";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["rng"] = "splitmix64-counter";
  m["config"] = to_json(cfg);
  m["seeds"] = std::move(seeds);
  m["outputs"] = files;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_json(path_in(dir, manifest_name(command)), m);
  files.push_back(manifest_name(command));
}

bool identity_observation(const ExperimentConfig& cfg) { return cfg.truth.system != SystemId::ReactionDiffusion1D; }

ObservationSet load_observations(const std::string& dir, const CommandOptions& opt) {
  const std::string path = opt.data_path ? *opt.data_path : path_in(dir, "observations.csv");
  if (!fs::exists(path)) throw std::runtime_error("observation file '" + path + "' not found (run simulate first)");
  return read_observations_csv(path);
}

std::string data_source(const std::string& dir, const CommandOptions& opt) {
  return opt.data_path ? *opt.data_path : path_in(dir, "observations.csv");
}

std::vector<std::string> eigen_row(Index i, const Eigenpair& e) {
  return {std::to_string(i), format_double(e.discrete.real()), format_double(e.discrete.imag()),
          format_double(e.continuous.real()), format_double(e.continuous.imag())};
}

}  // namespace

// ---------------------------------------------------------------------------

CommandResult cmd_simulate(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed_override) cfg.data.seed = *opt.seed_override;
  cfg.validate();
  const std::string dir = output_dir(cfg, opt);
  prepare_outputs(dir, {"trajectory.csv", "observations.csv", manifest_name("simulate")}, opt.force);

  const VectorXd records = record_times(cfg.data);
  VectorXd grid(records.size() + 1);
  grid << 0.0, records;
  const Trajectory full = simulate_truth(cfg.truth, grid);
  Trajectory at_records{records, std::vector<VectorXd>(full.states.begin() + 1, full.states.end())};
  const ObservationSet obs = observe(at_records, cfg.truth, cfg.data.sigma, cfg.data.seed, cfg.data.keep_every);

  CommandResult res{dir, {"trajectory.csv", "observations.csv"}};
  write_trajectory_csv(path_in(dir, "trajectory.csv"), full, cfg.data.seed);
  write_observations_csv(path_in(dir, "observations.csv"), obs, cfg.data.seed);
  write_manifest(dir, "simulate", cfg, {{"data", cfg.data.seed}, {"ic", cfg.truth.ic_seed}}, res.files);
  return res;
}

CommandResult cmd_fit(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed_override) cfg.dram.seed = *opt.seed_override;
  cfg.validate();
  const std::string dir = output_dir(cfg, opt);
  if (opt.method != FitMethod::Bayes && !identity_observation(cfg))
    throw std::invalid_argument("method " + to_string(opt.method) + " needs identity observations; " +
                                to_string(cfg.truth.system) + " observes moments");

  std::vector<std::string> planned;
  switch (opt.method) {
    case FitMethod::Bayes: planned = {"map.json", "chain.csv", "diagnostics.json"}; break;
    case FitMethod::DMD:
    case FitMethod::TDMD: planned = {"coefficients.csv", "eigenvalues.csv"}; break;
    case FitMethod::SINDy: planned = {"coefficients.csv"}; break;
  }
  planned.push_back(manifest_name("fit"));
  const ObservationSet obs = load_observations(dir, opt);
  // Bayes builds the posterior up front so structural problems surface before any work.
  std::optional<PosteriorHandle> handle;
  if (opt.method == FitMethod::Bayes) handle.emplace(build_posterior(cfg, obs));
  prepare_outputs(dir, planned, opt.force);

  CommandResult res{dir, {}};
  json seeds = {{"data", cfg.data.seed}};
  json extra = {{"method", to_string(opt.method)}, {"observations", data_source(dir, opt)}};

  if (opt.method == FitMethod::Bayes) {
    const VectorXd init = initial_theta(cfg, handle->model(), obs);
    const BayesFit fit = bayes_fit(*handle, init, bayes_options(cfg));
    json map = map_json(fit.map);
    map["init"] = vec(init);
    map["proposal_repaired"] = fit.proposal_repaired;
    write_json(path_in(dir, "map.json"), map);
    write_chain_csv(path_in(dir, "chain.csv"), fit.chain, cfg.dram.seed);
    json diag = chain_report_json(fit.report, fit.chain);
    diag["theta_mean"] = vec(fit.estimates.mean);
    diag["theta_map"] = vec(fit.estimates.map);
    diag["theta_map_row"] = fit.estimates.map_row;
    diag["likelihood"] = to_string(cfg.filter.kind);
    write_json(path_in(dir, "diagnostics.json"), diag);
    res.files = {"map.json", "chain.csv", "diagnostics.json"};
    seeds["dram"] = cfg.dram.seed;
  } else if (opt.method == FitMethod::SINDy) {
    SindyConfig sc;
    sc.library = DictionaryLibrary::monomials(obs.dim(), cfg.model.max_degree, cfg.model.include_constant);
    sc.threshold = cfg.fit.sindy_threshold;
    sc.derivative = cfg.fit.sindy_derivative;
    const SindyFit fit = sindy_fit(obs, sc);
    std::vector<std::string> header{"term"};
    for (Index i = 1; i <= obs.dim(); ++i) header.push_back("dx" + std::to_string(i));
    std::vector<std::vector<std::string>> rows;
    const auto labels = sc.library.labels();
    for (Index t = 0; t < fit.coefficients.rows(); ++t) {
      std::vector<std::string> row{labels[static_cast<std::size_t>(t)]};
      for (Index i = 0; i < fit.coefficients.cols(); ++i) row.push_back(format_double(fit.coefficients(t, i)));
      rows.push_back(std::move(row));
    }
    write_text_csv(path_in(dir, "coefficients.csv"), {seed_comment(cfg.data.seed)}, header, rows);
    res.files = {"coefficients.csv"};
    extra["sweeps"] = fit.sweeps;
  } else {
    const LinearFit fit = opt.method == FitMethod::DMD ? dmd_fit(snapshot_pair(obs)) : tdmd_fit(snapshot_pair(obs));
    const double dt = uniform_step(obs.times);
    std::vector<std::string> header{"row"};
    for (Index j = 1; j <= fit.a.cols(); ++j) header.push_back("a" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (Index i = 0; i < fit.a.rows(); ++i) {
      std::vector<std::string> row{std::to_string(i + 1)};
      for (Index j = 0; j < fit.a.cols(); ++j) row.push_back(format_double(fit.a(i, j)));
      rows.push_back(std::move(row));
    }
    write_text_csv(path_in(dir, "coefficients.csv"), {seed_comment(cfg.data.seed)}, header, rows);
    std::vector<std::vector<std::string>> eig;
    Index i = 0;
    for (const auto& e : eig_analysis(fit.a, dt)) eig.push_back(eigen_row(++i, e));
    write_text_csv(path_in(dir, "eigenvalues.csv"), {seed_comment(cfg.data.seed)},
                   {"index", "re", "im", "continuous_re", "continuous_im"}, eig);
    res.files = {"coefficients.csv", "eigenvalues.csv"};
    extra["rank"] = fit.rank;
    extra["dt"] = dt;
  }
  write_manifest(dir, "fit", cfg, seeds, res.files, extra);
  return res;
}

CommandResult cmd_predict(ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed_override) cfg.predict.seed = *opt.seed_override;
  if (opt.horizon) cfg.predict.horizon = *opt.horizon;
  if (opt.draws) cfg.predict.draws = *opt.draws;
  if (opt.alt_x0) cfg.predict.x0 = *opt.alt_x0;
  cfg.validate();
  const std::string dir = output_dir(cfg, opt);

  const std::string chain_path = opt.chain_path ? *opt.chain_path : path_in(dir, "chain.csv");
  if (!fs::exists(chain_path)) throw std::runtime_error("chain file '" + chain_path + "' not found (run fit first)");
  Chain chain = read_chain_csv(chain_path);
  chain.config.burn_in_fraction = cfg.dram.burn_in_fraction;
  const StateSpaceModel model = build_model(cfg);
  if (chain.dim() != model.n_params())
    throw std::invalid_argument("chain has " + std::to_string(chain.dim()) + " parameters, the configured model " +
                                std::to_string(model.n_params()));
  const Index burn_in = chain.default_burn_in();
  if (cfg.predict.draws > chain.size() - burn_in)
    throw std::invalid_argument("draws (" + std::to_string(cfg.predict.draws) + ") exceed the post-burn-in chain length (" +
                                std::to_string(chain.size() - burn_in) + ")");

  VectorXd x0;
  double t0 = 0.0;
  std::string start;
  if (cfg.predict.x0) {
    x0 = *cfg.predict.x0;
    start = "x0";
  } else if (cfg.predict.start == PredictStart::Initial) {
    x0 = cfg.truth.initial_state();
    start = "initial";
  } else {
    const ObservationSet obs = load_observations(dir, opt);
    Index last = obs.size() - 1;
    while (last >= 0 && !obs.observations[static_cast<std::size_t>(last)]) --last;
    if (last < 0) throw std::invalid_argument("no present observation to continue from");
    x0 = *obs.observations[static_cast<std::size_t>(last)];
    t0 = obs.times(last);
    start = "last_observation";
  }

  const Index steps = static_cast<Index>(std::llround(cfg.predict.horizon / cfg.data.dt));
  VectorXd grid(steps + 1);
  for (Index k = 0; k <= steps; ++k) grid(k) = t0 + cfg.data.dt * static_cast<double>(k);
  const bool want_mode = cfg.predict.draws >= 30;
  std::vector<std::string> planned{"ensemble.csv", "reductions.csv"};
  if (want_mode) planned.push_back("mode.csv");
  planned.push_back(manifest_name("predict"));
  prepare_outputs(dir, planned, opt.force);

  const PredictiveEnsemble ens =
      posterior_predictive(chain, burn_in, model, x0, t0, grid, cfg.predict.draws, cfg.predict.seed);
  const Reduction mean = reduce(ens, ReduceSpec::mean());
  const Reduction band = reduce(ens, ReduceSpec::band(0.025, 0.975));
  Reduction combined = mean;
  combined.lo = band.lo;
  combined.hi = band.hi;

  CommandResult res{dir, {"ensemble.csv", "reductions.csv"}};
  write_ensemble_csv(path_in(dir, "ensemble.csv"), ens, cfg.predict.seed);
  write_reduction_csv(path_in(dir, "reductions.csv"), combined, cfg.predict.seed);
  json extra = {{"chain", chain_path}, {"burn_in", burn_in}, {"start", start}, {"t0", t0}, {"x0", vec(x0)},
                {"valid_rollouts", ens.valid_count()}, {"invalid_rollouts", ens.invalid_count()}};
  if (want_mode) {
    if (ens.valid_count() >= 30) {
      write_reduction_csv(path_in(dir, "mode.csv"), reduce(ens, ReduceSpec::mode()), cfg.predict.seed);
      res.files.push_back("mode.csv");
    } else {
      extra["mode"] = "skipped: fewer than 30 valid rollouts";
    }
  }
  write_manifest(dir, "predict", cfg, {{"predict", cfg.predict.seed}}, res.files, extra);
  return res;
}

// ---------------------------------------------------------------------------
// Suites

namespace {

CommandResult suite_landscape(ExperimentConfig& cfg, const CommandOptions& opt, const std::string& dir) {
  if (cfg.truth.system != SystemId::LinearPendulum)
    throw std::invalid_argument("landscape suite needs the LinearPendulum truth system");
  const LandscapeSuite& L = cfg.suite.landscape;
  std::vector<std::string> files;
  for (auto o : L.objectives) files.push_back("landscape_" + to_string(o) + ".csv");
  std::vector<std::string> planned = files;
  planned.push_back(manifest_name("suite landscape"));
  prepare_outputs(dir, planned, opt.force);

  const Trajectory truth = simulate_truth(cfg.truth, record_times(cfg.data));
  const ObservationSet obs = observe(truth, cfg.truth, cfg.data.sigma, cfg.data.seed, cfg.data.keep_every);
  LandscapeConfig lc = LandscapeConfig::grid(L.t1_lo, L.t1_hi, L.n1, L.t2_lo, L.t2_hi, L.n2);
  lc.x0 = cfg.truth.initial_state();
  lc.dt = cfg.data.dt;
  lc.process_var = L.process_var;
  lc.meas_var = L.meas_var;

  json best = json::object();
  for (std::size_t k = 0; k < L.objectives.size(); ++k) {
    const Landscape land = objective_landscape(L.objectives[k], obs, lc);
    CsvTable t;
    t.comments = {seed_comment(cfg.data.seed), "objective=" + to_string(L.objectives[k])};
    t.header = {"theta1", "theta2", "value"};
    for (Index i = 0; i < land.theta1.size(); ++i)
      for (Index j = 0; j < land.theta2.size(); ++j) t.rows.push_back({land.theta1(i), land.theta2(j), land.values(i, j)});
    write_csv(path_in(dir, files[k]), t);
    const Eigen::Vector2d b = land.best();
    best[to_string(L.objectives[k])] = {b(0), b(1)};
  }
  CommandResult res{dir, files};
  write_manifest(dir, "suite landscape", cfg, {{"data", cfg.data.seed}}, res.files, {{"best", best}});
  return res;
}

CommandResult suite_sweep(ExperimentConfig& cfg, const CommandOptions& opt, const std::string& dir) {
  SweepSpec spec = cfg.suite.sweep;
  spec.truth = cfg.truth;
  if (opt.full) spec.realizations = 500;
  cfg.suite.sweep = spec;
  spec.validate();
  prepare_outputs(dir, {"sweep.csv", "sweep_realizations.csv", manifest_name("suite sweep")}, opt.force);

  const SweepResult r = mse_ratio_sweep(spec);
  std::vector<std::vector<std::string>> rows, reals;
  for (const auto& c : r.cells) {
    rows.push_back({format_double(c.sigma), std::to_string(c.n), to_string(c.algorithm), std::to_string(c.mse.size()),
                    std::to_string(c.used), format_double(c.mean_mse), format_double(c.log10_ratio)});
    for (std::size_t i = 0; i < c.mse.size(); ++i)
      reals.push_back({format_double(c.sigma), std::to_string(c.n), to_string(c.algorithm), std::to_string(i),
                       format_double(c.mse[i])});
  }
  const std::vector<std::string> comments{seed_comment(spec.base_seed), "reference=" + to_string(r.reference)};
  write_text_csv(path_in(dir, "sweep.csv"), comments,
                 {"sigma", "n", "algorithm", "realizations", "used", "mean_mse", "log10_ratio"}, rows);
  write_text_csv(path_in(dir, "sweep_realizations.csv"), comments, {"sigma", "n", "algorithm", "realization", "mse"},
                 reals);
  CommandResult res{dir, {"sweep.csv", "sweep_realizations.csv"}};
  write_manifest(dir, "suite sweep", cfg, {{"base_seed", spec.base_seed}}, res.files);
  return res;
}

CommandResult suite_flops(ExperimentConfig& cfg, const CommandOptions& opt, const std::string& dir) {
  if (cfg.suite.flops.dims.empty()) throw std::invalid_argument("flops suite needs suite.flops.dims");
  prepare_outputs(dir, {"flops.csv", manifest_name("suite flops")}, opt.force);
  std::vector<std::vector<std::string>> rows;
  for (auto a : kAllFlopAlgorithms)
    for (const auto& d : cfg.suite.flops.dims) {
      std::string value;
      try {
        value = to_string(flop_model(a, d));
      } catch (const std::invalid_argument&) {
        value = "undefined";
      }
      rows.push_back({to_string(a), std::to_string(d.d), std::to_string(d.m), std::to_string(d.p), std::to_string(d.n),
                      std::to_string(d.F), std::to_string(d.H), value});
    }
  write_text_csv(path_in(dir, "flops.csv"), {seed_comment(0)}, {"algorithm", "d", "m", "p", "n", "F", "H", "flops"},
                 rows);
  CommandResult res{dir, {"flops.csv"}};
  write_manifest(dir, "suite flops", cfg, json::object(), res.files);
  return res;
}

CommandResult suite_scaling(ExperimentConfig& cfg, const CommandOptions& opt, const std::string& dir) {
  const ScalingSuite& S = cfg.suite.scaling;
  prepare_outputs(dir, {"scaling.csv", "scaling_fit.csv", manifest_name("suite scaling")}, opt.force);
  const ScalingResult r = scaling_probe(S.filter, S.d, S.n, S.trials, S.seed);
  const std::string filter = S.filter == FilterKind::KF ? "KF" : "UKF";
  std::vector<std::vector<std::string>> rows, fits;
  for (const auto& row : r.rows)
    rows.push_back({filter, std::to_string(row.d), std::to_string(row.n), format_double(row.median_seconds)});
  for (const auto& f : r.fits)
    fits.push_back({filter, std::to_string(f.d), f.slope ? format_double(*f.slope) : "nan", f.r2 ? format_double(*f.r2) : "nan"});
  const std::vector<std::string> comments{seed_comment(S.seed), "wall-clock timings; not reproducible bit for bit"};
  write_text_csv(path_in(dir, "scaling.csv"), comments, {"filter", "d", "n", "median_seconds"}, rows);
  write_text_csv(path_in(dir, "scaling_fit.csv"), comments, {"filter", "d", "slope", "r2"}, fits);
  CommandResult res{dir, {"scaling.csv", "scaling_fit.csv"}};
  write_manifest(dir, "suite scaling", cfg, {{"scaling", S.seed}}, res.files);
  return res;
}

}  // namespace

CommandResult cmd_suite(const std::string& suite, ExperimentConfig cfg, const CommandOptions& opt) {
  if (opt.seed_override) {
    cfg.data.seed = *opt.seed_override;
    cfg.suite.sweep.base_seed = *opt.seed_override;
    cfg.suite.scaling.seed = *opt.seed_override;
  }
  cfg.validate();
  const std::string dir = output_dir(cfg, opt);
  if (suite == "landscape") return suite_landscape(cfg, opt, dir);
  if (suite == "sweep") return suite_sweep(cfg, opt, dir);
  if (suite == "flops") return suite_flops(cfg, opt, dir);
  if (suite == "scaling") return suite_scaling(cfg, opt, dir);
  throw std::invalid_argument("unknown suite '" + suite + "' (landscape, sweep, flops, scaling)");
}

}  // namespace sysid
