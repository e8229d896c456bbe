#include "sysid/models.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "sysid/integrators.hpp"
#include "sysid/rng.hpp"

namespace sysid {

namespace {

constexpr double kTruthSubstep = 5e-4;

void require_strictly_increasing(const VectorXd& t, const char* what) {
  for (Index i = 1; i < t.size(); ++i)
    if (!(t(i) > t(i - 1))) throw std::invalid_argument(std::string(what) + ": times must be strictly increasing");
}

MatrixXd pendulum_generator(double g, double L) {
  MatrixXd a(2, 2);
  a << 0.0, 1.0, -g / L, 0.0;
  return a;
}

}  // namespace

std::string to_string(SystemId id) {
  switch (id) {
    case SystemId::LinearPendulum: return "LinearPendulum";
    case SystemId::NonlinearPendulum: return "NonlinearPendulum";
    case SystemId::VanDerPol: return "VanDerPol";
    case SystemId::Lorenz63: return "Lorenz63";
    case SystemId::ReactionDiffusion1D: return "ReactionDiffusion1D";
  }
  return "unknown";
}

SystemId system_from_string(const std::string& name) {
  for (auto id : {SystemId::LinearPendulum, SystemId::NonlinearPendulum, SystemId::VanDerPol, SystemId::Lorenz63,
                  SystemId::ReactionDiffusion1D})
    if (to_string(id) == name) return id;
  throw std::invalid_argument("unknown system_id '" + name + "'");
}

// ---------------------------------------------------------------------------
// TruthSystemSpec

namespace {

std::vector<std::string> required_params(SystemId id) {
  switch (id) {
    case SystemId::LinearPendulum:
    case SystemId::NonlinearPendulum: return {"g", "L"};
    case SystemId::VanDerPol: return {"mu"};
    case SystemId::Lorenz63: return {"sigma", "rho", "beta"};
    case SystemId::ReactionDiffusion1D: return {"theta1", "theta2", "theta3"};
  }
  return {};
}

}  // namespace

double TruthSystemSpec::param(const std::string& name) const {
  auto it = physical_params.find(name);
  if (it == physical_params.end())
    throw std::invalid_argument(to_string(system) + ": missing physical parameter '" + name + "'");
  return it->second;
}

Index TruthSystemSpec::state_dim() const {
  switch (system) {
    case SystemId::LinearPendulum:
    case SystemId::NonlinearPendulum:
    case SystemId::VanDerPol: return 2;
    case SystemId::Lorenz63: return 3;
    case SystemId::ReactionDiffusion1D: return grid ? 2 * grid->n_points : 0;
  }
  return 0;
}

Index TruthSystemSpec::observation_dim() const {
  return system == SystemId::ReactionDiffusion1D ? 2 : state_dim();
}

void TruthSystemSpec::validate() const {
  const auto required = required_params(system);
  for (const auto& name : required) (void)param(name);
  for (const auto& [name, value] : physical_params) {
    if (std::find(required.begin(), required.end(), name) == required.end())
      throw std::invalid_argument(to_string(system) + ": unexpected physical parameter '" + name + "'");
    if (!std::isfinite(value)) throw std::invalid_argument(to_string(system) + ": parameter '" + name + "' not finite");
  }
  if (system == SystemId::ReactionDiffusion1D) {
    if (!grid) throw std::invalid_argument("ReactionDiffusion1D requires a grid");
    if (grid->n_points < 3 || !(grid->x_max > grid->x_min))
      throw std::invalid_argument("ReactionDiffusion1D grid needs >= 3 points and x_max > x_min");
    if (x0.size() != 0 && x0.size() != 2 * grid->n_points)
      throw std::invalid_argument("ReactionDiffusion1D x0 must have 2 * n_points entries");
  } else if (x0.size() != state_dim()) {
    throw std::invalid_argument(to_string(system) + ": x0 has wrong dimension");
  }
  if (system == SystemId::LinearPendulum || system == SystemId::NonlinearPendulum)
    if (param("L") == 0.0) throw std::invalid_argument("pendulum length must be nonzero");
}

VectorXd TruthSystemSpec::initial_state() const {
  if (system != SystemId::ReactionDiffusion1D || x0.size() != 0) return x0;
  CounterRng rng(ic_seed);
  VectorXd x(2 * grid->n_points);
  for (Index i = 0; i < x.size(); ++i) x(i) = 0.4 + 0.2 * rng.uniform();
  return x;
}

TruthSystemSpec TruthSystemSpec::defaults(SystemId system, Index grid_points) {
  TruthSystemSpec s;
  s.system = system;
  switch (system) {
    case SystemId::LinearPendulum:
      s.physical_params = {{"g", 9.81}, {"L", 1.0}};
      s.x0 = (VectorXd(2) << 0.1, -0.5).finished();
      break;
    case SystemId::NonlinearPendulum:
      s.physical_params = {{"g", 9.81}, {"L", 1.0}};
      s.x0 = (VectorXd(2) << 2.5, 0.0).finished();
      break;
    case SystemId::VanDerPol:
      s.physical_params = {{"mu", 3.0}};
      s.x0 = (VectorXd(2) << 0.0, 2.0).finished();
      break;
    case SystemId::Lorenz63:
      s.physical_params = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
      s.x0 = (VectorXd(3) << 2.0181, 3.5065, 11.8044).finished();
      break;
    case SystemId::ReactionDiffusion1D:
      s.physical_params = {{"theta1", 1.0}, {"theta2", 10.0}, {"theta3", 1.0}};
      s.grid = Grid1D{grid_points, -40.0, 40.0};
      s.ic_seed = 2021;
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trajectory / ObservationSet

void Trajectory::validate() const {
  if (static_cast<std::size_t>(times.size()) != states.size())
    throw std::invalid_argument("trajectory: times and states differ in length");
  require_strictly_increasing(times, "trajectory");
}

Index ObservationSet::dim() const {
  for (const auto& o : observations)
    if (o) return o->size();
  return 0;
}

Index ObservationSet::present_count() const {
  return static_cast<Index>(std::count_if(observations.begin(), observations.end(), [](const auto& o) { return o.has_value(); }));
}

void ObservationSet::validate() const {
  if (static_cast<std::size_t>(times.size()) != observations.size())
    throw std::invalid_argument("observations: times and records differ in length");
  require_strictly_increasing(times, "observations");
  if (present_count() == 0) throw std::invalid_argument("observations: no observation present");
  const Index m = dim();
  for (const auto& o : observations)
    if (o && o->size() != m) throw std::invalid_argument("observations: inconsistent observation dimension");
}

ObservationSet ObservationSet::tail(Index first) const {
  ObservationSet out;
  out.noise_seed = noise_seed;
  const Index n = std::max<Index>(0, size() - first);
  out.times = times.tail(n);
  out.observations.assign(observations.begin() + first, observations.end());
  return out;
}

MatrixXd ObservationSet::present_matrix() const {
  MatrixXd y(dim(), present_count());
  Index c = 0;
  for (const auto& o : observations)
    if (o) y.col(c++) = *o;
  return y;
}

// ---------------------------------------------------------------------------
// Dictionary

DictionaryLibrary DictionaryLibrary::monomials(Index d_in, int max_degree, bool include_constant) {
  DictionaryLibrary lib;
  lib.d_in = d_in;
  std::vector<int> e(static_cast<std::size_t>(d_in), 0);
  // Enumerate exponent vectors of total degree `deg`, x1 exponent descending.
  std::function<void(Index, int)> fill = [&](Index j, int remaining) {
    if (j == d_in - 1) {
      e[static_cast<std::size_t>(j)] = remaining;
      lib.terms.push_back(e);
      return;
    }
    for (int p = remaining; p >= 0; --p) {
      e[static_cast<std::size_t>(j)] = p;
      fill(j + 1, remaining - p);
    }
  };
  for (int deg = include_constant ? 0 : 1; deg <= max_degree; ++deg) fill(0, deg);
  return lib;
}

std::vector<std::string> DictionaryLibrary::labels() const {
  std::vector<std::string> out;
  for (const auto& e : terms) {
    std::ostringstream s;
    bool any = false;
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (e[j] == 0) continue;
      if (any) s << '*';
      s << 'x' << (j + 1);
      if (e[j] > 1) s << '^' << e[j];
      any = true;
    }
    out.push_back(any ? s.str() : "1");
  }
  return out;
}

void DictionaryLibrary::validate() const {
  std::set<std::vector<int>> seen;
  for (const auto& e : terms) {
    if (static_cast<Index>(e.size()) != d_in) throw std::invalid_argument("dictionary term has wrong arity");
    for (int p : e)
      if (p < 0) throw std::invalid_argument("dictionary exponents must be nonnegative");
    if (!seen.insert(e).second) throw std::invalid_argument("dictionary contains duplicate terms");
  }
}

// ---------------------------------------------------------------------------
// Vector fields

VectorXd reaction_diffusion_rhs(const Grid1D& grid, const VectorXd& state, double theta1, double theta2,
                                double theta3, bool literal_c2_diffusion) {
  const Index n = grid.n_points;
  const double inv_dx2 = 1.0 / (grid.spacing() * grid.spacing());
  const auto c1 = state.head(n);
  const auto c2 = state.tail(n);
  auto laplacian = [&](const auto& c, Index j) {
    // Ghost node mirrors the interior neighbour at each end.
    const double left = j == 0 ? c(1) : c(j - 1);
    const double right = j == n - 1 ? c(n - 2) : c(j + 1);
    return (left - 2.0 * c(j) + right) * inv_dx2;
  };
  VectorXd out(2 * n);
  for (Index j = 0; j < n; ++j) {
    const double u = c1(j);
    const double v = c2(j);
    const double uuv = u * u * v;
    out(j) = theta1 * laplacian(c1, j) + 0.1 - u + theta3 * uuv;
    const double diff2 = theta2 * laplacian(c2, j) * (literal_c2_diffusion ? v : 1.0);
    out(n + j) = diff2 + 0.9 - uuv;
  }
  return out;
}

VectorXd concentration_moments(const Grid1D& grid, const VectorXd& state) {
  const Index n = grid.n_points;
  const double dx = grid.spacing();
  const auto c1 = state.head(n);
  double first = 0.5 * (c1(0) + c1(n - 1));
  double second = 0.5 * (c1(0) * c1(0) + c1(n - 1) * c1(n - 1));
  for (Index j = 1; j < n - 1; ++j) {
    first += c1(j);
    second += c1(j) * c1(j);
  }
  return (VectorXd(2) << first * dx, second * dx).finished();
}

KnownField known_vector_field(SystemId system, const std::optional<Grid1D>& grid, bool literal_c2_diffusion) {
  switch (system) {
    case SystemId::LinearPendulum:
      return {[](const VectorXd& x, const VectorXd& th) {
                return VectorXd((VectorXd(2) << th(0) * x(1), th(1) * x(0)).finished());
              },
              2};
    case SystemId::NonlinearPendulum:
      return {[](const VectorXd& x, const VectorXd& th) {
                return VectorXd((VectorXd(2) << x(1), -th(0) * std::sin(x(0))).finished());
              },
              1};
    case SystemId::VanDerPol:
      return {[](const VectorXd& x, const VectorXd& th) {
                return VectorXd((VectorXd(2) << x(1), th(0) * (1.0 - x(0) * x(0)) * x(1) - x(0)).finished());
              },
              1};
    case SystemId::Lorenz63:
      return {[](const VectorXd& x, const VectorXd& th) {
                return VectorXd((VectorXd(3) << th(0) * (x(1) - x(0)), x(0) * (th(1) - x(2)) - x(1),
                                 x(0) * x(1) - th(2) * x(2))
                                    .finished());
              },
              3};
    case SystemId::ReactionDiffusion1D: {
      if (!grid) throw std::invalid_argument("reaction-diffusion field needs a grid");
      const Grid1D g = *grid;
      return {[g, literal_c2_diffusion](const VectorXd& x, const VectorXd& th) {
                return reaction_diffusion_rhs(g, x, th(0), th(1), th(2), literal_c2_diffusion);
              },
              3};
    }
  }
  throw std::invalid_argument("unknown system_id");
}

VectorField dictionary_vector_field(const DictionaryLibrary& lib) {
  return [lib](const VectorXd& x, const VectorXd& th) {
    const VectorXd features = dictionary_eval(lib, x);
    const Index k = lib.n_terms();
    VectorXd dx(x.size());
    for (Index i = 0; i < x.size(); ++i) dx(i) = features.dot(th.segment(i * k, k));
    return dx;
  };
}

// ---------------------------------------------------------------------------
// Simulation and observation

namespace {

VectorXd physical_vector(const TruthSystemSpec& spec) {
  switch (spec.system) {
    case SystemId::LinearPendulum:
      return (VectorXd(2) << 1.0, -spec.param("g") / spec.param("L")).finished();
    case SystemId::NonlinearPendulum:
      return (VectorXd(1) << spec.param("g") / spec.param("L")).finished();
    case SystemId::VanDerPol: return (VectorXd(1) << spec.param("mu")).finished();
    case SystemId::Lorenz63:
      return (VectorXd(3) << spec.param("sigma"), spec.param("rho"), spec.param("beta")).finished();
    case SystemId::ReactionDiffusion1D:
      return (VectorXd(3) << spec.param("theta1"), spec.param("theta2"), spec.param("theta3")).finished();
  }
  return {};
}

}  // namespace

Trajectory simulate_truth(const TruthSystemSpec& spec, const VectorXd& t_grid) {
  spec.validate();
  if (t_grid.size() == 0) throw std::invalid_argument("simulate_truth: empty time grid");
  require_strictly_increasing(t_grid, "simulate_truth");
  if (t_grid(0) < 0.0) throw std::invalid_argument("simulate_truth: times must be >= 0");

  Trajectory traj;
  traj.times = t_grid;
  const VectorXd x0 = spec.initial_state();

  if (spec.system == SystemId::LinearPendulum) {
    const MatrixXd a = pendulum_generator(spec.param("g"), spec.param("L"));
    for (Index i = 0; i < t_grid.size(); ++i) {
      const MatrixXd propagator = (a * t_grid(i)).exp();
      traj.states.push_back(propagator * x0);
    }
    return traj;
  }

  const KnownField known = known_vector_field(spec.system, spec.grid, spec.literal_c2_diffusion);
  const VectorXd theta = physical_vector(spec);
  auto f = [&](const VectorXd& x) { return known.field(x, theta); };

  VectorXd x = x0;
  double t = 0.0;
  for (Index i = 0; i < t_grid.size(); ++i) {
    const double span = t_grid(i) - t;
    if (span > 0.0) {
      const int substeps = static_cast<int>(std::ceil(span / kTruthSubstep - 1e-9));
      const double h = span / substeps;
      for (int s = 0; s < substeps; ++s) {
        x = rk4_step(f, x, h);
        if (!x.allFinite()) {
          const double when = t + (s + 1) * h;
          throw BlowUpError(when, to_string(spec.system) + ": integration blew up at t = " + std::to_string(when));
        }
      }
      t = t_grid(i);
    }
    traj.states.push_back(x);
  }
  return traj;
}

VectorXd truth_observation(const TruthSystemSpec& spec, const VectorXd& state) {
  if (spec.system == SystemId::ReactionDiffusion1D) return concentration_moments(*spec.grid, state);
  return state;
}

ObservationSet observe(const Trajectory& traj, const TruthSystemSpec& spec, double noise_std, std::uint64_t seed,
                       Index keep_every) {
  if (traj.size() == 0) throw std::invalid_argument("observe: empty trajectory");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("observe: noise_std must be >= 0");
  if (keep_every < 1) throw std::invalid_argument("observe: keep_every must be >= 1");
  traj.validate();

  CounterRng rng(seed);
  ObservationSet out;
  out.noise_seed = seed;
  std::vector<double> times;
  for (Index i = 0; i < traj.size(); i += keep_every) {
    VectorXd y = truth_observation(spec, traj.states[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < y.size(); ++j) y(j) += noise_std * rng.normal();
    times.push_back(traj.times(i));
    out.observations.emplace_back(std::move(y));
  }
  out.times = Eigen::Map<const VectorXd>(times.data(), static_cast<Index>(times.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Models

Index CovarianceSpec::n_params() const {
  switch (form) {
    case CovarianceForm::Isotropic: return 1;
    case CovarianceForm::Diagonal: return dim;
    case CovarianceForm::Fixed: return 0;
  }
  return 0;
}

MatrixXd CovarianceSpec::build(const Eigen::Ref<const VectorXd>& theta) const {
  switch (form) {
    case CovarianceForm::Isotropic: return theta(0) * MatrixXd::Identity(dim, dim);
    case CovarianceForm::Diagonal: return theta.asDiagonal();
    case CovarianceForm::Fixed: return fixed;
  }
  return {};
}

namespace {

void attach_observation(StateSpaceModel& model, const ModelConfig& cfg) {
  const Index d = cfg.state_dim;
  switch (cfg.observation) {
    case ObservationKind::Identity:
      model.obs_dim = d;
      model.identity_observation = true;
      model.observation = [](const VectorXd& x, const VectorXd&) { return x; };
      model.observation_matrix = [d](const VectorXd&) { return MatrixXd(MatrixXd::Identity(d, d)); };
      model.observation_inverse = [](const VectorXd& y, const VectorXd&) { return y; };
      model.log_abs_det_inverse_jacobian = [](const VectorXd&, const VectorXd&) { return 0.0; };
      break;
    case ObservationKind::Matrix: {
      const MatrixXd h = cfg.observation_matrix;
      if (h.cols() != d) throw std::invalid_argument("observation matrix has wrong column count");
      model.obs_dim = h.rows();
      model.observation = [h](const VectorXd& x, const VectorXd&) { return VectorXd(h * x); };
      model.observation_matrix = [h](const VectorXd&) { return h; };
      if (h.rows() == h.cols()) {
        Eigen::FullPivLU<MatrixXd> lu(h);
        if (lu.isInvertible()) {
          const MatrixXd inv = lu.inverse();
          const double log_det = -std::log(std::abs(lu.determinant()));
          model.observation_inverse = [inv](const VectorXd& y, const VectorXd&) { return VectorXd(inv * y); };
          model.log_abs_det_inverse_jacobian = [log_det](const VectorXd&, const VectorXd&) { return log_det; };
        }
      }
      break;
    }
    case ObservationKind::Moments: {
      if (!cfg.grid) throw std::invalid_argument("moment observations need a grid");
      if (d != 2 * cfg.grid->n_points) throw std::invalid_argument("moment observations: state is not two fields");
      const Grid1D g = *cfg.grid;
      model.obs_dim = 2;
      model.observation = [g](const VectorXd& x, const VectorXd&) { return concentration_moments(g, x); };
      break;
    }
  }
}

StateSpaceModel skeleton(const ModelConfig& cfg, Index n_dyn) {
  if (cfg.state_dim <= 0) throw std::invalid_argument("model state dimension must be positive");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("model dt must be positive");
  StateSpaceModel model;
  model.state_dim = cfg.state_dim;
  model.dt = cfg.dt;
  attach_observation(model, cfg);
  if (cfg.process.dim != cfg.state_dim) throw std::invalid_argument("process covariance dimension != state dimension");
  if (cfg.measurement.dim != model.obs_dim)
    throw std::invalid_argument("measurement covariance dimension != observation dimension");
  for (const auto* c : {&cfg.process, &cfg.measurement})
    if (c->form == CovarianceForm::Fixed && (c->fixed.rows() != c->dim || c->fixed.cols() != c->dim))
      throw std::invalid_argument("fixed covariance has wrong shape");
  model.partition = Partition::contiguous(n_dyn, 0, cfg.process.n_params(), cfg.measurement.n_params());
  const CovarianceSpec proc = cfg.process;
  const CovarianceSpec meas = cfg.measurement;
  model.proc_cov = [proc](const VectorXd& th) { return proc.build(th); };
  model.meas_cov = [meas](const VectorXd& th) { return meas.build(th); };
  return model;
}

}  // namespace

StateSpaceModel make_linear_model(const ModelConfig& cfg, Index n_dyn, StateSpaceModel::MatrixMap transition) {
  StateSpaceModel model = skeleton(cfg, n_dyn);
  model.family = ModelFamily::LinearMatrix;
  model.transition_matrix = transition;
  model.dynamics = [transition](const VectorXd& x, const VectorXd& th) { return VectorXd(transition(th) * x); };
  return model;
}

StateSpaceModel make_model(ModelFamily family, const ModelConfig& cfg) {
  const Index d = cfg.state_dim;
  switch (family) {
    case ModelFamily::LinearMatrix: {
      auto transition = [d](const VectorXd& th) {
        return MatrixXd(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            th.data(), d, d));
      };
      return make_linear_model(cfg, d * d, transition);
    }
    case ModelFamily::EulerDictionary: {
      cfg.library.validate();
      if (cfg.library.d_in != d) throw std::invalid_argument("dictionary input dimension != state dimension");
      StateSpaceModel model = skeleton(cfg, d * cfg.library.n_terms());
      model.family = family;
      const VectorField field = dictionary_vector_field(cfg.library);
      const double dt = cfg.dt;
      model.dynamics = [field, dt](const VectorXd& x, const VectorXd& th) { return VectorXd(x + dt * field(x, th)); };
      return model;
    }
    case ModelFamily::KnownODE: {
      if (!cfg.known.field) throw std::invalid_argument("KnownODE needs a vector field");
      if (cfg.substeps < 1) throw std::invalid_argument("KnownODE substeps must be >= 1");
      StateSpaceModel model = skeleton(cfg, cfg.known.n_params);
      model.family = family;
      const VectorField field = cfg.known.field;
      const double dt = cfg.dt;
      const int substeps = cfg.substeps;
      model.dynamics = [field, dt, substeps](const VectorXd& x, const VectorXd& th) {
        auto f = [&](const VectorXd& s) { return field(s, th); };
        return VectorXd(rk4_advance(f, x, dt, substeps));
      };
      return model;
    }
    case ModelFamily::Custom: break;
  }
  throw std::invalid_argument("make_model: unsupported family");
}

}  // namespace sysid
