#include "sysid/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace sysid {

using nlohmann::json;

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::LinearMatrix: return "LinearMatrix";
    case ModelFamily::EulerDictionary: return "EulerDictionary";
    case ModelFamily::KnownODE: return "KnownODE";
    case ModelFamily::Custom: return "Custom";
  }
  return "unknown";
}

ModelFamily model_family_from_string(const std::string& name) {
  for (auto f : {ModelFamily::LinearMatrix, ModelFamily::EulerDictionary, ModelFamily::KnownODE})
    if (to_string(f) == name) return f;
  throw std::invalid_argument("unknown model family '" + name + "'");
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw ConfigError(field, "config field '" + field + "': " + msg);
}

/// Reads one JSON object, remembering which keys were asked for so leftovers
/// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  std::string field(const std::string& key) const { return join(path_, key); }
  const json& raw(const std::string& key) {
    if (!has(key)) fail(field(key), "required");
    return j_.at(key);
  }

  double number(const std::string& key, double def) { return has(key) ? as_number(key) : def; }
  double number(const std::string& key) {
    raw(key);
    return as_number(key);
  }
  Index integer(const std::string& key, Index def) { return has(key) ? as_integer(key) : def; }
  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    fail(field(key), "expected a non-negative integer");
  }
  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    if (!j_.at(key).is_boolean()) fail(field(key), "expected true or false");
    return j_.at(key).get<bool>();
  }
  std::string string(const std::string& key, const std::string& def) { return has(key) ? as_string(key) : def; }
  std::string string(const std::string& key) {
    raw(key);
    return as_string(key);
  }
  VectorXd vector(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(field(key), "expected an array of numbers");
    VectorXd out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      out(static_cast<Index>(i)) = v[i].get<double>();
    }
    return out;
  }
  std::optional<VectorXd> opt_vector(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return vector(key);
  }
  std::vector<Index> integers(const std::string& key, std::vector<Index> def) {
    if (!has(key)) return def;
    const VectorXd v = vector(key);
    std::vector<Index> out;
    for (Index i = 0; i < v.size(); ++i) {
      if (v(i) != std::floor(v(i))) fail(field(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(static_cast<Index>(v(i)));
    }
    return out;
  }
  std::vector<std::string> strings(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(field(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }
  Reader object(const std::string& key) { return Reader(raw(key), field(key)); }

  /// Converts a name with `parse`, reporting failures against this key.
  template <typename F>
  auto named(const std::string& key, const std::string& value, F parse) {
    try {
      return parse(value);
    } catch (const std::invalid_argument& e) {
      fail(field(key), e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(field(it.key()), "unknown key");
  }

 private:
  double as_number(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }
  Index as_integer(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    return static_cast<Index>(v.get<long long>());
  }
  std::string as_string(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

CovarianceForm covariance_form_from_string(const std::string& s) {
  if (s == "Isotropic") return CovarianceForm::Isotropic;
  if (s == "Diagonal") return CovarianceForm::Diagonal;
  if (s == "Fixed") return CovarianceForm::Fixed;
  throw std::invalid_argument("unknown covariance form '" + s + "' (Isotropic, Diagonal, Fixed)");
}

std::string to_string(CovarianceForm f) {
  switch (f) {
    case CovarianceForm::Isotropic: return "Isotropic";
    case CovarianceForm::Diagonal: return "Diagonal";
    case CovarianceForm::Fixed: return "Fixed";
  }
  return "unknown";
}

CovarianceConfig read_covariance(Reader r) {
  CovarianceConfig c;
  c.form = r.named("form", r.string("form", "Isotropic"), covariance_form_from_string);
  c.value = r.number("value", 0.0);
  if (c.form == CovarianceForm::Fixed && !(c.value > 0.0)) fail(r.field("value"), "Fixed covariance needs value > 0");
  r.finish();
  return c;
}

json covariance_json(const CovarianceConfig& c) {
  json j{{"form", to_string(c.form)}};
  if (c.form == CovarianceForm::Fixed) j["value"] = c.value;
  return j;
}

InitialCondition::Mode init_mode_from_string(const std::string& s) {
  if (s == "anchor") return InitialCondition::Mode::AnchorFirstObservation;
  if (s == "fixed") return InitialCondition::Mode::Fixed;
  throw std::invalid_argument("unknown initial condition '" + s + "' (anchor, fixed)");
}

OptimizerMethod optimizer_from_string(const std::string& s) {
  if (s == "nelder_mead") return OptimizerMethod::NelderMead;
  if (s == "bfgs") return OptimizerMethod::BFGS;
  throw std::invalid_argument("unknown optimizer '" + s + "' (nelder_mead, bfgs)");
}

Derivative derivative_from_string(const std::string& s) {
  if (s == "forward") return Derivative::Forward;
  if (s == "central") return Derivative::Central;
  throw std::invalid_argument("unknown derivative '" + s + "' (forward, central)");
}

PredictStart start_from_string(const std::string& s) {
  if (s == "last_observation") return PredictStart::LastObservation;
  if (s == "initial") return PredictStart::Initial;
  throw std::invalid_argument("unknown start '" + s + "' (last_observation, initial)");
}

LandscapeObjective objective_from_string(const std::string& s) {
  for (auto o : {LandscapeObjective::NoProcessNoise, LandscapeObjective::NoMeasurementNoise,
                 LandscapeObjective::LogPosterior})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown landscape objective '" + s + "'");
}

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "KF") return FilterKind::KF;
  if (s == "UKF") return FilterKind::UKF;
  throw std::invalid_argument("unknown filter '" + s + "' (KF, UKF)");
}

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void read_truth(Reader r, TruthSystemSpec& t) {
  const SystemId id = r.named("system", r.string("system"), system_from_string);
  const Index grid_points = [&] {
    if (!r.has("grid")) return Index{201};
    Reader g = Reader(r.raw("grid"), r.field("grid"));
    return g.integer("n_points", 201);
  }();
  t = TruthSystemSpec::defaults(id, grid_points);
  if (r.has("params")) {
    const json& p = r.raw("params");
    if (!p.is_object()) fail(r.field("params"), "expected an object");
    for (auto it = p.begin(); it != p.end(); ++it) {
      const std::string f = r.field("params") + "." + it.key();
      if (!t.physical_params.count(it.key())) fail(f, "not a parameter of " + to_string(id));
      if (!it.value().is_number()) fail(f, "expected a number");
      t.physical_params[it.key()] = it.value().get<double>();
    }
  }
  if (auto x0 = r.opt_vector("x0")) t.x0 = *x0;
  if (r.has("grid")) {
    Reader g = r.object("grid");
    Grid1D grid = t.grid.value_or(Grid1D{});
    grid.n_points = g.integer("n_points", grid_points);
    grid.x_min = g.number("x_min", grid.x_min);
    grid.x_max = g.number("x_max", grid.x_max);
    g.finish();
    t.grid = grid;
  }
  t.ic_seed = r.seed("ic_seed", t.ic_seed);
  t.literal_c2_diffusion = r.boolean("literal_c2_diffusion", t.literal_c2_diffusion);
  r.finish();
}

json truth_json(const TruthSystemSpec& t) {
  json j{{"system", to_string(t.system)}, {"ic_seed", t.ic_seed}};
  json p = json::object();
  for (const auto& [k, v] : t.physical_params) p[k] = v;
  j["params"] = p;
  if (t.x0.size() > 0) j["x0"] = vec_json(t.x0);
  if (t.grid) j["grid"] = {{"n_points", t.grid->n_points}, {"x_min", t.grid->x_min}, {"x_max", t.grid->x_max}};
  if (t.system == SystemId::ReactionDiffusion1D) j["literal_c2_diffusion"] = t.literal_c2_diffusion;
  return j;
}

PriorTerm read_prior_term(Reader r) {
  PriorTerm t;
  t.kind = r.named("kind", r.string("kind", "ImproperUniform"), prior_kind_from_string);
  t.a = r.number("a", 0.0);
  t.b = r.number("b", 0.0);
  r.finish();
  try {
    PriorSpec{{t}}.validate();
  } catch (const std::invalid_argument& e) {
    fail(r.field("kind"), e.what());
  }
  return t;
}

void read_optimizer(Reader r, OptimizerConfig& o) {
  o.method = r.named("method", r.string("method", "nelder_mead"), optimizer_from_string);
  o.max_evaluations = r.integer("max_evaluations", o.max_evaluations);
  o.tolerance = r.number("tolerance", o.tolerance);
  o.initial_step = r.number("initial_step", o.initial_step);
  o.restarts = static_cast<int>(r.integer("restarts", o.restarts));
  o.hessian_step = r.number("hessian_step", o.hessian_step);
  r.finish();
  if (o.max_evaluations < 1) fail(r.field("max_evaluations"), "must be >= 1");
}

void read_dram(Reader r, DramConfig& d) {
  d.n_samples = r.integer("n_samples", d.n_samples);
  d.n0 = r.integer("n0", d.n0);
  d.gamma = r.number("gamma", d.gamma);
  d.adapt_interval = r.integer("adapt_interval", d.adapt_interval);
  if (r.has("sd")) d.sd = r.number("sd");
  d.nugget = r.number("nugget", d.nugget);
  d.seed = r.seed("seed", d.seed);
  d.delayed_rejection = r.boolean("delayed_rejection", d.delayed_rejection);
  d.burn_in_fraction = r.number("burn_in_fraction", d.burn_in_fraction);
  r.finish();
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    fail(r.field("n_samples"), e.what());
  }
}

void read_suites(Reader r, SuiteSettings& s) {
  if (r.has("landscape")) {
    Reader l = r.object("landscape");
    LandscapeSuite& L = s.landscape;
    auto axis = [&](const std::string& key, double& lo, double& hi, Index& n) {
      if (!l.has(key)) return;
      Reader a = l.object(key);
      lo = a.number("lo", lo);
      hi = a.number("hi", hi);
      n = a.integer("n", n);
      a.finish();
      if (n < 1 || !(hi >= lo)) fail(l.field(key), "needs n >= 1 and hi >= lo");
    };
    axis("theta1", L.t1_lo, L.t1_hi, L.n1);
    axis("theta2", L.t2_lo, L.t2_hi, L.n2);
    if (l.has("objectives")) {
      L.objectives.clear();
      for (const auto& name : l.strings("objectives")) L.objectives.push_back(l.named("objectives", name, objective_from_string));
    }
    L.process_var = l.number("process_var", L.process_var);
    L.meas_var = l.number("meas_var", L.meas_var);
    l.finish();
  }
  if (r.has("sweep")) {
    Reader w = r.object("sweep");
    SweepSpec& S = s.sweep;
    if (w.has("noise_levels")) {
      const VectorXd v = w.vector("noise_levels");
      S.noise_levels.assign(v.data(), v.data() + v.size());
    }
    S.n_values = w.integers("n_values", S.n_values);
    S.realizations = w.integer("realizations", S.realizations);
    if (w.has("algorithms")) {
      S.algorithms.clear();
      for (const auto& name : w.strings("algorithms")) S.algorithms.push_back(w.named("algorithms", name, algorithm_from_string));
    }
    S.base_seed = w.seed("base_seed", S.base_seed);
    S.window = w.number("window", S.window);
    if (w.has("horizon")) S.horizon = w.number("horizon");
    S.drop_worst = w.boolean("drop_worst", S.drop_worst);
    S.chain_length = w.integer("chain_length", S.chain_length);
    S.n_draws = w.integer("n_draws", S.n_draws);
    w.finish();
  }
  if (r.has("flops")) {
    Reader f = r.object("flops");
    if (f.has("dims")) {
      const json& arr = f.raw("dims");
      if (!arr.is_array()) fail(f.field("dims"), "expected an array of objects");
      s.flops.dims.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader e(arr[i], f.field("dims") + "[" + std::to_string(i) + "]");
        FlopDims d;
        d.d = e.integer("d", 0);
        d.m = e.integer("m", 0);
        d.p = e.integer("p", 0);
        d.n = e.integer("n", 0);
        d.F = e.integer("F", 0);
        d.H = e.integer("H", 0);
        e.finish();
        try {
          d.validate();
        } catch (const std::invalid_argument& ex) {
          fail(f.field("dims") + "[" + std::to_string(i) + "]", ex.what());
        }
        s.flops.dims.push_back(d);
      }
    }
    f.finish();
  }
  if (r.has("scaling")) {
    Reader c = r.object("scaling");
    ScalingSuite& C = s.scaling;
    C.filter = c.named("filter", c.string("filter", "KF"), filter_kind_from_string);
    C.d = c.integers("d", C.d);
    C.n = c.integers("n", C.n);
    C.trials = static_cast<int>(c.integer("trials", C.trials));
    C.seed = c.seed("seed", C.seed);
    c.finish();
    if (C.d.empty() || C.n.empty() || C.trials < 1) fail(c.field("d"), "needs nonempty d and n lists and trials >= 1");
  }
  r.finish();
}

std::string to_string(FilterKind k) { return k == FilterKind::KF ? "KF" : "UKF"; }

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  Reader r(doc, "");
  c.schema_version = static_cast<int>(r.integer("schema_version", -1));
  if (c.schema_version != kSchemaVersion)
    fail("schema_version", "expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(c.schema_version));
  read_truth(r.object("truth"), c.truth);

  if (r.has("data")) {
    Reader d = r.object("data");
    c.data.n = d.integer("n", c.data.n);
    c.data.dt = d.number("dt", c.data.dt);
    c.data.sigma = d.number("sigma", c.data.sigma);
    c.data.seed = d.seed("seed", c.data.seed);
    c.data.keep_every = d.integer("keep_every", c.data.keep_every);
    d.finish();
  }
  if (r.has("model")) {
    Reader m = r.object("model");
    c.model.family = m.named("family", m.string("family", "LinearMatrix"), model_family_from_string);
    c.model.max_degree = static_cast<int>(m.integer("max_degree", c.model.max_degree));
    c.model.include_constant = m.boolean("include_constant", c.model.include_constant);
    c.model.substeps = static_cast<int>(m.integer("substeps", c.model.substeps));
    if (m.has("process")) c.model.process = read_covariance(m.object("process"));
    if (m.has("measurement")) c.model.measurement = read_covariance(m.object("measurement"));
    m.finish();
  }
  if (r.has("prior")) {
    Reader p = r.object("prior");
    if (p.has("dynamics")) c.prior.dynamics = read_prior_term(p.object("dynamics"));
    c.prior.variance_scale = p.number("variance_scale", c.prior.variance_scale);
    p.finish();
  }
  if (r.has("filter")) {
    Reader f = r.object("filter");
    c.filter.kind = f.named("kind", f.string("kind", "KF"), likelihood_kind_from_string);
    c.filter.settings.alpha = f.number("alpha", c.filter.settings.alpha);
    c.filter.settings.kappa = f.number("kappa", c.filter.settings.kappa);
    c.filter.settings.beta = f.number("beta", c.filter.settings.beta);
    c.filter.settings.nugget = f.number("nugget", c.filter.settings.nugget);
    c.filter.settings.literal_covariance_update =
        f.boolean("literal_covariance_update", c.filter.settings.literal_covariance_update);
    c.filter.init = f.named("init", f.string("init", "anchor"), init_mode_from_string);
    c.filter.init_mean = f.opt_vector("init_mean");
    c.filter.init_cov = f.number("init_cov", c.filter.init_cov);
    f.finish();
  }
  if (r.has("fit")) {
    Reader f = r.object("fit");
    c.fit.init = f.opt_vector("init");
    if (f.has("optimizer")) read_optimizer(f.object("optimizer"), c.fit.optimizer);
    c.fit.sindy_threshold = f.number("sindy_threshold", c.fit.sindy_threshold);
    c.fit.sindy_derivative = f.named("sindy_derivative", f.string("sindy_derivative", "central"), derivative_from_string);
    f.finish();
  }
  if (r.has("dram")) read_dram(r.object("dram"), c.dram);
  if (r.has("predict")) {
    Reader p = r.object("predict");
    c.predict.horizon = p.number("horizon", c.predict.horizon);
    c.predict.draws = p.integer("draws", c.predict.draws);
    c.predict.seed = p.seed("seed", c.predict.seed);
    c.predict.start = p.named("start", p.string("start", "last_observation"), start_from_string);
    c.predict.x0 = p.opt_vector("x0");
    p.finish();
  }
  if (r.has("suite")) read_suites(r.object("suite"), c.suite);
  c.suite.sweep.truth = c.truth;
  c.outputs = r.string("outputs", c.outputs);
  r.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  try {
    truth.validate();
  } catch (const std::invalid_argument& e) {
    fail("truth", e.what());
  }
  if (data.n < 1) fail("data.n", "must be >= 1");
  if (!(data.dt > 0.0)) fail("data.dt", "must be > 0");
  if (!(data.sigma >= 0.0)) fail("data.sigma", "must be >= 0");
  if (data.keep_every < 1) fail("data.keep_every", "must be >= 1");
  if (model.max_degree < 1) fail("model.max_degree", "must be >= 1");
  if (model.substeps < 1) fail("model.substeps", "must be >= 1");

  const bool identity_h = truth.system != SystemId::ReactionDiffusion1D;
  if (model.family == ModelFamily::LinearMatrix && !identity_h)
    fail("model.family", "LinearMatrix needs an identity observation map; " + to_string(truth.system) + " observes moments");
  if (filter.kind == LikelihoodKind::KF && model.family != ModelFamily::LinearMatrix)
    fail("filter.kind", "KF likelihood needs the LinearMatrix family, model.family is " + to_string(model.family));
  if (filter.kind == LikelihoodKind::Noiseless && !identity_h)
    fail("filter.kind", "Noiseless likelihood needs an invertible observation map");
  if (filter.init == InitialCondition::Mode::AnchorFirstObservation && !identity_h)
    fail("filter.init", "anchor needs an identity observation map; use fixed");
  if (filter.init_mean && filter.init_mean->size() != truth.state_dim())
    fail("filter.init_mean", "length " + std::to_string(filter.init_mean->size()) + " != state dimension " +
                                 std::to_string(truth.state_dim()));
  if (!(filter.init_cov >= 0.0)) fail("filter.init_cov", "must be >= 0");
  if (!(filter.settings.alpha > 0.0)) fail("filter.alpha", "must be > 0");
  if (!(filter.settings.nugget >= 0.0)) fail("filter.nugget", "must be >= 0");
  if (!(fit.sindy_threshold >= 0.0)) fail("fit.sindy_threshold", "must be >= 0");
  if (predict.draws < 1) fail("predict.draws", "must be >= 1");
  if (!(predict.horizon > 0.0)) fail("predict.horizon", "must be > 0");
  if (predict.x0 && predict.x0->size() != truth.state_dim())
    fail("predict.x0", "length " + std::to_string(predict.x0->size()) + " != state dimension " +
                           std::to_string(truth.state_dim()));
  if (predict.start == PredictStart::LastObservation && !identity_h && !predict.x0)
    fail("predict.start", "last_observation needs an identity observation map; use initial or x0");
  if (outputs.empty()) fail("outputs", "must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("", "config syntax error at line " + std::to_string(line) + ": " + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["truth"] = truth_json(c.truth);
  j["data"] = {{"n", c.data.n}, {"dt", c.data.dt}, {"sigma", c.data.sigma}, {"seed", c.data.seed},
               {"keep_every", c.data.keep_every}};
  j["model"] = {{"family", to_string(c.model.family)},
                {"max_degree", c.model.max_degree},
                {"include_constant", c.model.include_constant},
                {"substeps", c.model.substeps},
                {"process", covariance_json(c.model.process)},
                {"measurement", covariance_json(c.model.measurement)}};
  j["prior"] = {{"dynamics", {{"kind", to_string(c.prior.dynamics.kind)}, {"a", c.prior.dynamics.a}, {"b", c.prior.dynamics.b}}},
                {"variance_scale", c.prior.variance_scale}};
  j["filter"] = {{"kind", to_string(c.filter.kind)},
                 {"alpha", c.filter.settings.alpha},
                 {"kappa", c.filter.settings.kappa},
                 {"beta", c.filter.settings.beta},
                 {"nugget", c.filter.settings.nugget},
                 {"literal_covariance_update", c.filter.settings.literal_covariance_update},
                 {"init", c.filter.init == InitialCondition::Mode::Fixed ? "fixed" : "anchor"},
                 {"init_cov", c.filter.init_cov}};
  if (c.filter.init_mean) j["filter"]["init_mean"] = vec_json(*c.filter.init_mean);
  const auto& o = c.fit.optimizer;
  j["fit"] = {{"optimizer",
               {{"method", o.method == OptimizerMethod::BFGS ? "bfgs" : "nelder_mead"},
                {"max_evaluations", o.max_evaluations},
                {"tolerance", o.tolerance},
                {"initial_step", o.initial_step},
                {"restarts", o.restarts},
                {"hessian_step", o.hessian_step}}},
              {"sindy_threshold", c.fit.sindy_threshold},
              {"sindy_derivative", c.fit.sindy_derivative == Derivative::Central ? "central" : "forward"}};
  if (c.fit.init) j["fit"]["init"] = vec_json(*c.fit.init);
  const auto& d = c.dram;
  j["dram"] = {{"n_samples", d.n_samples},   {"n0", d.n0},
               {"gamma", d.gamma},           {"adapt_interval", d.adapt_interval},
               {"nugget", d.nugget},         {"seed", d.seed},
               {"delayed_rejection", d.delayed_rejection}, {"burn_in_fraction", d.burn_in_fraction}};
  if (d.sd) j["dram"]["sd"] = *d.sd;
  j["predict"] = {{"horizon", c.predict.horizon},
                  {"draws", c.predict.draws},
                  {"seed", c.predict.seed},
                  {"start", c.predict.start == PredictStart::Initial ? "initial" : "last_observation"}};
  if (c.predict.x0) j["predict"]["x0"] = vec_json(*c.predict.x0);

  const auto& L = c.suite.landscape;
  json objectives = json::array();
  for (auto ob : L.objectives) objectives.push_back(to_string(ob));
  json land = {{"theta1", {{"lo", L.t1_lo}, {"hi", L.t1_hi}, {"n", L.n1}}},
               {"theta2", {{"lo", L.t2_lo}, {"hi", L.t2_hi}, {"n", L.n2}}},
               {"objectives", objectives},
               {"process_var", L.process_var},
               {"meas_var", L.meas_var}};
  const auto& S = c.suite.sweep;
  json algs = json::array();
  for (auto a : S.algorithms) algs.push_back(to_string(a));
  json sweep = {{"noise_levels", S.noise_levels}, {"n_values", S.n_values},     {"realizations", S.realizations},
                {"algorithms", algs},             {"base_seed", S.base_seed},   {"window", S.window},
                {"drop_worst", S.drop_worst},     {"chain_length", S.chain_length}, {"n_draws", S.n_draws}};
  if (S.horizon) sweep["horizon"] = *S.horizon;
  json dims = json::array();
  for (const auto& fd : c.suite.flops.dims)
    dims.push_back({{"d", fd.d}, {"m", fd.m}, {"p", fd.p}, {"n", fd.n}, {"F", fd.F}, {"H", fd.H}});
  const auto& C = c.suite.scaling;
  j["suite"] = {{"landscape", land},
                {"sweep", sweep},
                {"flops", {{"dims", dims}}},
                {"scaling", {{"filter", to_string(C.filter)}, {"d", C.d}, {"n", C.n}, {"trials", C.trials}, {"seed", C.seed}}}};
  j["outputs"] = c.outputs;
  return j;
}

// ---------------------------------------------------------------------------
// Builders

VectorXd record_times(const DataSettings& data) {
  VectorXd t(data.n);
  for (Index k = 0; k < data.n; ++k) t(k) = data.dt * static_cast<double>(k + 1);
  return t;
}

namespace {

CovarianceSpec covariance_spec(const CovarianceConfig& c, Index dim) {
  switch (c.form) {
    case CovarianceForm::Isotropic: return CovarianceSpec::isotropic(dim);
    case CovarianceForm::Diagonal: return CovarianceSpec::diagonal(dim);
    case CovarianceForm::Fixed: return CovarianceSpec::constant(c.value * MatrixXd::Identity(dim, dim));
  }
  return CovarianceSpec::isotropic(dim);
}

}  // namespace

StateSpaceModel build_model(const ExperimentConfig& cfg) {
  const Index d = cfg.truth.state_dim();
  ModelConfig mc;
  mc.state_dim = d;
  mc.dt = cfg.data.dt;
  mc.process = covariance_spec(cfg.model.process, d);
  mc.measurement = covariance_spec(cfg.model.measurement, cfg.truth.observation_dim());
  if (cfg.truth.system == SystemId::ReactionDiffusion1D) {
    mc.observation = ObservationKind::Moments;
    mc.grid = cfg.truth.grid;
  }
  switch (cfg.model.family) {
    case ModelFamily::EulerDictionary:
      mc.library = DictionaryLibrary::monomials(d, cfg.model.max_degree, cfg.model.include_constant);
      break;
    case ModelFamily::KnownODE:
      mc.known = known_vector_field(cfg.truth.system, cfg.truth.grid, cfg.truth.literal_c2_diffusion);
      mc.substeps = cfg.model.substeps;
      break;
    default: break;
  }
  return make_model(cfg.model.family, mc);
}

PriorSpec build_prior(const ExperimentConfig& cfg, const StateSpaceModel& model) {
  PriorSpec p = PriorSpec::standard(model.partition, cfg.prior.variance_scale);
  for (Index i = model.partition.dynamics.begin; i < model.partition.dynamics.end(); ++i)
    p.terms[static_cast<std::size_t>(i)] = cfg.prior.dynamics;
  return p;
}

InitialCondition build_initial_condition(const ExperimentConfig& cfg) {
  if (cfg.filter.init == InitialCondition::Mode::AnchorFirstObservation) return InitialCondition::anchored();
  const VectorXd mean = cfg.filter.init_mean ? *cfg.filter.init_mean : cfg.truth.initial_state();
  const Index d = mean.size();
  return InitialCondition::fixed(Belief{mean, cfg.filter.init_cov * MatrixXd::Identity(d, d)});
}

PosteriorHandle build_posterior(const ExperimentConfig& cfg, const ObservationSet& data) {
  StateSpaceModel model = build_model(cfg);
  PriorSpec prior = build_prior(cfg, model);
  return PosteriorHandle(std::move(model), data, std::move(prior), cfg.filter.kind, cfg.filter.settings,
                         build_initial_condition(cfg));
}

VectorXd initial_theta(const ExperimentConfig& cfg, const StateSpaceModel& model, const ObservationSet& data) {
  const Partition& part = model.partition;
  if (cfg.fit.init) {
    if (cfg.fit.init->size() != part.total())
      fail("fit.init", "length " + std::to_string(cfg.fit.init->size()) + " != parameter count " +
                           std::to_string(part.total()));
    return *cfg.fit.init;
  }
  VectorXd theta = VectorXd::Zero(part.total());
  double process = 0.0, meas = 0.0;
  switch (cfg.model.family) {
    case ModelFamily::LinearMatrix: {
      const VectorXd lin = linear_bayes_init(data);
      const Index d = model.state_dim;
      theta.segment(part.dynamics.begin, d * d) = lin.head(d * d);
      process = lin(d * d);
      meas = lin(d * d + 1);
      break;
    }
    case ModelFamily::EulerDictionary: {
      SindyConfig sc;
      sc.library = DictionaryLibrary::monomials(model.state_dim, cfg.model.max_degree, cfg.model.include_constant);
      sc.threshold = cfg.fit.sindy_threshold;
      sc.derivative = cfg.fit.sindy_derivative;
      const SindyFit fit = sindy_fit(data, sc);
      theta.segment(part.dynamics.begin, part.dynamics.size) = fit.stacked();
      const MatrixXd y = data.present_matrix();
      double sq = 0.0;
      for (Index k = 0; k + 1 < y.cols(); ++k) {
        const VectorXd next = model.dynamics(y.col(k), fit.stacked());
        sq += (y.col(k + 1) - next).squaredNorm();
      }
      const double msr = sq / static_cast<double>((y.cols() - 1) * y.rows());
      process = meas = std::max(0.5 * msr, 1e-8);
      break;
    }
    default:
      fail("fit.init", "required for the " + to_string(cfg.model.family) + " family");
  }
  for (Index i = part.process.begin; i < part.process.end(); ++i) theta(i) = process;
  for (Index i = part.measurement.begin; i < part.measurement.end(); ++i) theta(i) = meas;
  return theta;
}

BayesFitOptions bayes_options(const ExperimentConfig& cfg) {
  BayesFitOptions o;
  o.optimizer = cfg.fit.optimizer;
  o.dram = cfg.dram;
  return o;
}

}  // namespace sysid
