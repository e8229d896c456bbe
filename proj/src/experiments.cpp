#include "sysid/experiments.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sysid/rng.hpp"

namespace sysid {

// ---------------------------------------------------------------------------
// MAP + DRAM

MatrixXd initial_proposal(const LogDensity& f, const MapResult& map, bool* repaired) {
  if (map.hessian == HessianStatus::Ok && map.neg_hessian_inv.size() > 0) {
    if (repaired) *repaired = false;
    return map.neg_hessian_inv;
  }
  if (repaired) *repaired = true;
  const Index p = map.theta.size();
  MatrixXd cov = MatrixXd::Zero(p, p);
  const double f0 = map.log_post;
  for (Index i = 0; i < p; ++i) {
    const double s = 1e-4 * std::max(std::abs(map.theta(i)), 1e-3);
    auto at = [&](double shift) {
      VectorXd x = map.theta;
      x(i) += shift;
      return f(x);
    };
    double curv = kNaN;
    const double up = at(s), down = at(-s);
    if (std::isfinite(up) && std::isfinite(down)) {
      curv = (up - 2.0 * f0 + down) / (s * s);
    } else if (std::isfinite(up)) {
      const double up2 = at(2.0 * s);
      if (std::isfinite(up2)) curv = (up2 - 2.0 * up + f0) / (s * s);
    }
    cov(i, i) = curv < 0.0 ? -1.0 / curv : 1e-2;
  }
  return cov;
}

BayesFit bayes_fit(const PosteriorHandle& handle, const VectorXd& init, const BayesFitOptions& opts) {
  BayesFit out;
  out.map = find_map(handle, init, opts.optimizer);
  out.proposal = initial_proposal(handle.target(), out.map, &out.proposal_repaired);
  out.chain = dram_sample(handle, out.map.theta, out.proposal, opts.dram);
  out.report = chain_diagnostics(out.chain, out.chain.default_burn_in());
  out.estimates = theta_estimators(out.chain);
  return out;
}

VectorXd linear_bayes_init(const ObservationSet& obs) {
  const auto pair = snapshot_pair(obs);
  const MatrixXd a = dmd_fit(pair).a;
  const MatrixXd resid = pair.yp - a * pair.y;
  const Index d = a.rows();
  VectorXd init(d * d + 2);
  for (Index i = 0; i < d; ++i) init.segment(i * d, d) = a.row(i).transpose();
  init(d * d) = 1e-4;
  init(d * d + 1) = std::max(0.5 * resid.squaredNorm() / static_cast<double>(resid.size()), 1e-6);
  return init;
}

// ---------------------------------------------------------------------------
// Objective geometry

double ls_frequency_cost(double omega, double horizon, double quad_step) {
  if (!(horizon > 0.0) || !(quad_step > 0.0)) throw std::invalid_argument("ls_frequency_cost: need T > 0 and step > 0");
  const auto n = static_cast<long long>(std::ceil(horizon / quad_step - 1e-9));
  const double h = horizon / static_cast<double>(n);
  auto g = [omega](double t) {
    const double e = std::cos(2.0 * t) - std::cos(omega * t);
    return e * e;
  };
  double sum = 0.5 * (g(0.0) + g(horizon));
  for (long long k = 1; k < n; ++k) sum += g(h * static_cast<double>(k));
  return sum * h;
}

std::string to_string(LandscapeObjective o) {
  switch (o) {
    case LandscapeObjective::NoProcessNoise: return "no_process_noise";
    case LandscapeObjective::NoMeasurementNoise: return "no_measurement_noise";
    case LandscapeObjective::LogPosterior: return "log_posterior";
  }
  return "?";
}

MatrixXd pendulum_generator(double theta1, double theta2) {
  MatrixXd a(2, 2);
  a << 0.0, theta1, theta2, 0.0;
  return a;
}

LandscapeConfig LandscapeConfig::grid(double t1_lo, double t1_hi, Index n1, double t2_lo, double t2_hi, Index n2) {
  LandscapeConfig c;
  c.theta1 = VectorXd::LinSpaced(n1, t1_lo, t1_hi);
  c.theta2 = VectorXd::LinSpaced(n2, t2_lo, t2_hi);
  return c;
}

Eigen::Vector2d Landscape::best() const {
  Index i = 0, j = 0;
  if (objective == LandscapeObjective::LogPosterior)
    values.maxCoeff(&i, &j);
  else
    values.minCoeff(&i, &j);
  return {theta1(i), theta2(j)};
}

PosteriorHandle landscape_posterior(const ObservationSet& data, const LandscapeConfig& cfg) {
  ModelConfig mc;
  mc.state_dim = 2;
  mc.dt = cfg.dt;
  mc.process = CovarianceSpec::constant(cfg.process_var * MatrixXd::Identity(2, 2));
  mc.measurement = CovarianceSpec::constant(cfg.meas_var * MatrixXd::Identity(2, 2));
  const double dt = cfg.dt;
  auto model = make_linear_model(mc, 2, [dt](const VectorXd& th) -> MatrixXd {
    return (pendulum_generator(th(0), th(1)) * dt).exp();
  });
  return PosteriorHandle(std::move(model), data, PriorSpec::uniform(2), LikelihoodKind::KF, FilterSettings{},
                         InitialCondition::fixed(Belief{cfg.x0, MatrixXd::Zero(2, 2)}));
}

Landscape objective_landscape(LandscapeObjective objective, const ObservationSet& data, const LandscapeConfig& cfg) {
  data.validate();
  if (data.dim() != 2 || cfg.x0.size() != 2) throw std::invalid_argument("objective_landscape: pendulum data must be 2-D");
  if (cfg.theta1.size() == 0 || cfg.theta2.size() == 0) throw std::invalid_argument("objective_landscape: empty grid");
  Landscape out;
  out.objective = objective;
  out.theta1 = cfg.theta1;
  out.theta2 = cfg.theta2;
  out.values.resize(cfg.theta1.size(), cfg.theta2.size());

  std::optional<PosteriorHandle> handle;
  if (objective == LandscapeObjective::LogPosterior) handle.emplace(landscape_posterior(data, cfg));

  for (Index i = 0; i < cfg.theta1.size(); ++i)
    for (Index j = 0; j < cfg.theta2.size(); ++j) {
      const VectorXd th = (VectorXd(2) << cfg.theta1(i), cfg.theta2(j)).finished();
      double v = 0.0;
      if (objective == LandscapeObjective::LogPosterior) {
        v = handle->log_posterior(th);
      } else {
        const MatrixXd step = (pendulum_generator(th(0), th(1)) * cfg.dt).exp();
        if (objective == LandscapeObjective::NoProcessNoise) {
          const MatrixXd traj = linear_rollout(step, cfg.x0, 0.0, cfg.dt, data.times);
          for (Index k = 0; k < data.size(); ++k)
            if (const auto& y = data.observations[static_cast<std::size_t>(k)])
              v += (*y - traj.row(k).transpose()).squaredNorm();
        } else {
          for (Index k = 1; k < data.size(); ++k) {
            const auto& prev = data.observations[static_cast<std::size_t>(k - 1)];
            const auto& cur = data.observations[static_cast<std::size_t>(k)];
            if (prev && cur) v += (*cur - step * *prev).squaredNorm();
          }
        }
        if (!std::isfinite(v)) v = kPosInf;
      }
      out.values(i, j) = v;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::BayesKF: return "bayes_kf";
    case Algorithm::BayesUKF: return "bayes_ukf";
    case Algorithm::DMD: return "dmd";
    case Algorithm::TDMD: return "tdmd";
    case Algorithm::SINDy: return "sindy";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  for (auto a : {Algorithm::BayesKF, Algorithm::BayesUKF, Algorithm::DMD, Algorithm::TDMD, Algorithm::SINDy})
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

bool is_bayes(Algorithm a) { return a == Algorithm::BayesKF || a == Algorithm::BayesUKF; }

void SweepSpec::validate() const {
  if (noise_levels.empty() || n_values.empty() || algorithms.empty())
    throw std::invalid_argument("sweep: noise_levels, n_values and algorithms must be nonempty");
  if (realizations < 1) throw std::invalid_argument("sweep: realizations must be >= 1");
  if (drop_worst && realizations < 2) throw std::invalid_argument("sweep: drop_worst needs realizations >= 2");
  for (double s : noise_levels)
    if (!(s >= 0.0)) throw std::invalid_argument("sweep: noise levels must be >= 0");
  for (Index n : n_values)
    if (n < 2) throw std::invalid_argument("sweep: n values must be >= 2");
  if (!(window > 0.0)) throw std::invalid_argument("sweep: window must be positive");
  if (horizon && !(*horizon > 0.0)) throw std::invalid_argument("sweep: horizon must be positive");
  if (chain_length <= 200 || n_draws < 1) throw std::invalid_argument("sweep: chain_length must exceed 200 and n_draws >= 1");
  truth.validate();
  if (truth.observation_dim() != truth.state_dim())
    throw std::invalid_argument("sweep: the truth system must be observed through the identity");
}

const SweepCell& SweepResult::cell(double sigma, Index n, Algorithm a) const {
  for (const auto& c : cells)
    if (c.sigma == sigma && c.n == n && c.algorithm == a) return c;
  throw std::out_of_range("sweep: no such cell");
}

std::uint64_t realization_seed(std::uint64_t base, std::size_t sigma_index, std::size_t n_index, Index realization) {
  return derive_seed({base, sigma_index, n_index, static_cast<std::uint64_t>(realization)});
}

namespace {

StateSpaceModel linear_isotropic_model(Index d, double dt) {
  ModelConfig cfg;
  cfg.state_dim = d;
  cfg.dt = dt;
  cfg.process = CovarianceSpec::isotropic(d);
  cfg.measurement = CovarianceSpec::isotropic(d);
  return make_model(ModelFamily::LinearMatrix, cfg);
}

}  // namespace

double algorithm_mse(Algorithm a, const SweepSpec& spec, double dt, const ObservationSet& data,
                     const Trajectory& truth, const VectorXd& t_pred, std::uint64_t seed) {
  const VectorXd x0 = spec.truth.initial_state();
  const Index d = x0.size();
  MatrixXd est;
  switch (a) {
    case Algorithm::DMD:
      est = linear_rollout(dmd_fit(snapshot_pair(data)).a, x0, 0.0, dt, t_pred);
      break;
    case Algorithm::TDMD:
      est = linear_rollout(tdmd_fit(snapshot_pair(data)).a, x0, 0.0, dt, t_pred);
      break;
    case Algorithm::SINDy: {
      SindyConfig sc;
      sc.library = DictionaryLibrary::monomials(d, 1, false);
      sc.derivative = Derivative::Central;
      const auto fit = sindy_fit(data, sc);
      ModelConfig mc;
      mc.state_dim = d;
      mc.dt = dt;
      mc.known = {dictionary_vector_field(sc.library), sc.library.n_terms() * d};
      mc.substeps = 10;
      mc.process = CovarianceSpec::isotropic(d);
      mc.measurement = CovarianceSpec::isotropic(d);
      const auto model = make_model(ModelFamily::KnownODE, mc);
      VectorXd th(model.n_params());
      th << fit.stacked(), 0.0, 0.0;
      est = deterministic_rollout(model, model.parameters(th), x0, 0.0, t_pred);
      break;
    }
    case Algorithm::BayesKF:
    case Algorithm::BayesUKF: {
      const auto model = linear_isotropic_model(d, dt);
      const PosteriorHandle handle(model, data, PriorSpec::standard(model.partition),
                                   a == Algorithm::BayesKF ? LikelihoodKind::KF : LikelihoodKind::UKF);
      BayesFitOptions opts;
      opts.dram.n_samples = spec.chain_length;
      opts.dram.seed = derive_seed({seed, 1});
      const auto fit = bayes_fit(handle, linear_bayes_init(data), opts);
      const auto ens = posterior_predictive(fit.chain, model, x0, 0.0, t_pred, spec.n_draws, derive_seed({seed, 2}));
      est = reduce(ens, ReduceSpec::mean()).estimate;
      break;
    }
  }
  if (!est.allFinite()) throw std::runtime_error(to_string(a) + ": prediction is not finite");
  return mse_at_observations(to_trajectory(t_pred, est), truth, t_pred);
}

SweepResult mse_ratio_sweep(const SweepSpec& spec) {
  spec.validate();
  SweepResult res;
  res.spec = spec;
  const auto ref = std::find_if(spec.algorithms.begin(), spec.algorithms.end(), is_bayes);

  for (std::size_t si = 0; si < spec.noise_levels.size(); ++si)
    for (std::size_t ni = 0; ni < spec.n_values.size(); ++ni) {
      const double sigma = spec.noise_levels[si];
      const Index n = spec.n_values[ni];
      const double dt = spec.window / static_cast<double>(n);
      VectorXd t_obs(n);
      for (Index k = 0; k < n; ++k) t_obs(k) = dt * static_cast<double>(k + 1);
      const Index n_pred = spec.horizon ? std::max<Index>(1, static_cast<Index>(std::llround(*spec.horizon / dt))) : n;
      VectorXd t_pred(n_pred);
      for (Index k = 0; k < n_pred; ++k) t_pred(k) = dt * static_cast<double>(k + 1);
      const Trajectory truth_obs = simulate_truth(spec.truth, t_obs);
      const Trajectory truth_pred = simulate_truth(spec.truth, t_pred);

      std::vector<SweepCell> block;
      for (auto a : spec.algorithms) block.push_back({sigma, n, a, {}, 0, kNaN, kNaN});
      for (Index r = 0; r < spec.realizations; ++r) {
        const std::uint64_t seed = realization_seed(spec.base_seed, si, ni, r);
        const auto data = observe(truth_obs, spec.truth, sigma, seed, 1);
        for (auto& c : block) {
          double mse = kNaN;
          try {
            mse = algorithm_mse(c.algorithm, spec, dt, data, truth_pred, t_pred, derive_seed({seed, 7}));
          } catch (const std::exception&) {
            mse = kNaN;
          }
          c.mse.push_back(mse);
        }
      }
      for (auto& c : block) {
        std::vector<double> ok;
        for (double v : c.mse)
          if (std::isfinite(v)) ok.push_back(v);
        if (spec.drop_worst && ok.size() >= 2) ok.erase(std::max_element(ok.begin(), ok.end()));
        c.used = static_cast<Index>(ok.size());
        if (!ok.empty()) {
          double s = 0.0;
          for (double v : ok) s += v;
          c.mean_mse = s / static_cast<double>(ok.size());
        }
      }
      if (ref != spec.algorithms.end()) {
        const double ref_mse = block[static_cast<std::size_t>(ref - spec.algorithms.begin())].mean_mse;
        for (auto& c : block)
          if (c.algorithm != *ref) c.log10_ratio = std::log10(ref_mse / c.mean_mse);
      }
      res.cells.insert(res.cells.end(), block.begin(), block.end());
    }
  if (ref != spec.algorithms.end()) res.reference = *ref;
  return res;
}

// ---------------------------------------------------------------------------
// Flops

std::string to_string(FlopAlgorithm a) {
  switch (a) {
    case FlopAlgorithm::KFPredict: return "kf_predict";
    case FlopAlgorithm::KFUpdate: return "kf_update";
    case FlopAlgorithm::KFTotal: return "kf_total";
    case FlopAlgorithm::UKFPredict: return "ukf_predict";
    case FlopAlgorithm::UKFUpdate: return "ukf_update";
    case FlopAlgorithm::UKFTotal: return "ukf_total";
    case FlopAlgorithm::DMD: return "dmd";
    case FlopAlgorithm::SparseRegression: return "sparse_regression";
  }
  return "?";
}

FlopAlgorithm flop_algorithm_from_string(const std::string& name) {
  for (auto a : kAllFlopAlgorithms)
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown flop algorithm '" + name + "'");
}

void FlopDims::validate() const {
  if (d < 0 || m < 0 || p < 0 || n < 0 || F < 0 || H < 0) throw std::invalid_argument("flop dims must be >= 0");
}

Rational flop_model(FlopAlgorithm a, const FlopDims& k) {
  k.validate();
  const Rational d(k.d), m(k.m), p(k.p), n(k.n), F(k.F), H(k.H);
  const Rational third(1, 3);
  switch (a) {
    case FlopAlgorithm::KFPredict:
      return 4 * d * d * d + d * d - d;
    case FlopAlgorithm::KFUpdate:
      return 2 * d * d * d + third * m * m * m + 6 * d * d * m + 4 * d * m * m - d * d - m * m + 3 * d * m - 1;
    case FlopAlgorithm::KFTotal:
      return n * (6 * d * d * d + m * m * m + 6 * d * d * m + 4 * d * m * m + m * m + 3 * d * m - d + 3 * m + 8);
    case FlopAlgorithm::UKFPredict:
      return Rational(13, 3) * d * d * d + 17 * d * d + 4 * d + 2 + (2 * d + 1) * F;
    case FlopAlgorithm::UKFUpdate:
      return third * d * d * d + third * m * m * m + 6 * d * d * m + 8 * d * m * m + 9 * d * d + 4 * m * m +
             13 * d * m + 2 * d + 6 * m + 2 + (2 * d + 1) * H;
    case FlopAlgorithm::UKFTotal:
      return n * (Rational(14, 3) * d * d * d + m * m * m + 6 * d * d * m + 8 * d * m * m + 26 * d * d + 6 * m * m +
                  13 * d * m + 6 * d + 9 * m + 13 + (2 * d + 1) * (F + H)) +
             18;
    case FlopAlgorithm::DMD:
      return Rational(7, 3) * m * m * m + 4 * m * m * n - 7 * m * m;
    case FlopAlgorithm::SparseRegression: {
      if (k.m == 0) throw std::invalid_argument("sparse regression flops need m > 0");
      const Rational q = p / m;
      return third * q * q * q + 4 * q * q * n - 5 * q * q - q * n + 2 * p * n + q - 3 * p;
    }
  }
  return 0;
}

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

// ---------------------------------------------------------------------------
// Timing

ScalingResult scaling_probe(FilterKind filter, const std::vector<Index>& d_list, const std::vector<Index>& n_list,
                            int trials, std::uint64_t seed) {
  if (d_list.empty() || n_list.empty()) throw std::invalid_argument("scaling_probe: lists must be nonempty");
  if (trials < 1) throw std::invalid_argument("scaling_probe: trials must be >= 1");
  ScalingResult res;
  res.filter = filter;
  for (Index d : d_list) {
    if (d < 1) throw std::invalid_argument("scaling_probe: d must be >= 1");
    const auto model = linear_isotropic_model(d, 1.0);
    VectorXd th(model.n_params());
    const MatrixXd a = 0.9 * MatrixXd::Identity(d, d);
    for (Index i = 0; i < d; ++i) th.segment(i * d, d) = a.row(i).transpose();
    th(d * d) = 0.1;
    th(d * d + 1) = 0.1;
    const auto theta = model.parameters(th);
    const Belief init{VectorXd::Zero(d), MatrixXd::Identity(d, d)};
    std::vector<double> logn, logt;
    for (Index n : n_list) {
      CounterRng rng(derive_seed({seed, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(n)}));
      ObservationSet obs;
      obs.times = VectorXd::LinSpaced(n, 1.0, static_cast<double>(n));
      for (Index k = 0; k < n; ++k) obs.observations.emplace_back(rng.normal_vector(d));
      std::vector<double> times;
      double sink = 0.0;
      for (int t = 0; t < trials; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const auto r = filter == FilterKind::KF ? kf_marginal_loglik(model, theta, obs, init)
                                                : ukf_marginal_loglik(model, theta, obs, init);
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        sink += r.log_lik;
      }
      if (!std::isfinite(sink)) throw std::runtime_error("scaling_probe: filter failed");
      const double med = empirical_quantile(times, 0.5);
      res.rows.push_back({d, n, med});
      logn.push_back(std::log(static_cast<double>(n)));
      logt.push_back(std::log(med));
    }
    ScalingFit fit;
    fit.d = d;
    if (logn.size() >= 2) {
      const auto k = static_cast<double>(logn.size());
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < logn.size(); ++i) {
        mx += logn[i] / k;
        my += logt[i] / k;
      }
      double sxx = 0, sxy = 0, syy = 0;
      for (std::size_t i = 0; i < logn.size(); ++i) {
        sxx += (logn[i] - mx) * (logn[i] - mx);
        sxy += (logn[i] - mx) * (logt[i] - my);
        syy += (logt[i] - my) * (logt[i] - my);
      }
      if (sxx > 0.0) {
        fit.slope = sxy / sxx;
        fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
      }
    }
    res.fits.push_back(fit);
  }
  return res;
}

}  // namespace sysid
