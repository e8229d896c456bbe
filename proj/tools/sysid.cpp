// Command-line front end: simulate, fit, predict, suite.
#include <CLI11.hpp>

#include <iostream>

#include "sysid/cli.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  bool force = false;
  bool full = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory (overrides the config)");
  sub->add_flag("--force", c.force, "overwrite existing outputs");
  sub->add_flag("--full", c.full, "full-scale run (sweep: 500 realizations)");
  c.seed_opt = sub->add_option("--seed-override", c.seed, "replace the seed this command uses");
}

sysid::CommandOptions options(const Common& c) {
  sysid::CommandOptions o;
  if (!c.out.empty()) o.out = c.out;
  o.force = c.force;
  o.full = c.full;
  if (c.seed_opt && c.seed_opt->count() > 0) o.seed_override = c.seed;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian system identification with filtering likelihoods"};
  app.set_version_flag("--version", sysid::kToolVersion);
  app.require_subcommand(1);

  Common sim_c, fit_c, pred_c, suite_c;
  auto* sim = app.add_subcommand("simulate", "generate truth and noisy observations");
  add_common(sim, sim_c);

  auto* fit = app.add_subcommand("fit", "fit a model to observations");
  add_common(fit, fit_c);
  std::string method = "bayes";
  std::string fit_data;
  fit->add_option("--method", method, "bayes | dmd | tdmd | sindy")
      ->check(CLI::IsMember({"bayes", "dmd", "tdmd", "sindy"}));
  fit->add_option("--data", fit_data, "observation CSV (default <out>/observations.csv)");

  auto* pred = app.add_subcommand("predict", "posterior-predictive rollouts from a chain");
  add_common(pred, pred_c);
  std::string chain, pred_data;
  double horizon = 0.0;
  sysid::Index draws = 0;
  std::vector<double> alt_x0;
  pred->add_option("--chain", chain, "chain CSV (default <out>/chain.csv)");
  pred->add_option("--data", pred_data, "observation CSV for the start state (default <out>/observations.csv)");
  auto* horizon_opt = pred->add_option("--horizon", horizon, "seconds to predict")->check(CLI::PositiveNumber);
  auto* draws_opt = pred->add_option("--draws", draws, "posterior draws")->check(CLI::PositiveNumber);
  pred->add_option("--alt-x0", alt_x0, "start state at t = 0")->expected(1, -1);

  auto* suite = app.add_subcommand("suite", "experiment suites");
  add_common(suite, suite_c);
  std::string suite_name;
  suite->add_option("name", suite_name, "landscape | sweep | flops | scaling")
      ->required()
      ->check(CLI::IsMember({"landscape", "sweep", "flops", "scaling"}));

  CLI11_PARSE(app, argc, argv);

  try {
    sysid::CommandResult res;
    if (sim->parsed()) {
      res = sysid::cmd_simulate(sysid::load_config(sim_c.config), options(sim_c));
    } else if (fit->parsed()) {
      auto o = options(fit_c);
      o.method = sysid::fit_method_from_string(method);
      if (!fit_data.empty()) o.data_path = fit_data;
      res = sysid::cmd_fit(sysid::load_config(fit_c.config), o);
    } else if (pred->parsed()) {
      auto o = options(pred_c);
      if (!chain.empty()) o.chain_path = chain;
      if (!pred_data.empty()) o.data_path = pred_data;
      if (horizon_opt->count() > 0) o.horizon = horizon;
      if (draws_opt->count() > 0) o.draws = draws;
      if (!alt_x0.empty()) o.alt_x0 = Eigen::Map<const Eigen::VectorXd>(alt_x0.data(), static_cast<sysid::Index>(alt_x0.size()));
      res = sysid::cmd_predict(sysid::load_config(pred_c.config), o);
    } else {
      res = sysid::cmd_suite(suite_name, sysid::load_config(suite_c.config), options(suite_c));
    }
    for (const auto& f : res.files) std::cout << res.dir << "/" << f << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
