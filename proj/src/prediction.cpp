#include "sysid/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sysid/rng.hpp"

namespace sysid {

Index PredictiveEnsemble::valid_count() const {
  return static_cast<Index>(std::count(valid.begin(), valid.end(), true));
}

namespace {

/// Number of model steps from t0 to each grid time.
std::vector<Index> step_counts(double t0, double dt, const VectorXd& t_grid) {
  if (!(dt > 0.0)) throw std::invalid_argument("rollout: model step must be positive");
  std::vector<Index> steps(static_cast<std::size_t>(t_grid.size()));
  Index prev = 0;
  for (Index i = 0; i < t_grid.size(); ++i) {
    const double k = (t_grid(i) - t0) / dt;
    const double r = std::round(k);
    if (r < 0.0 || std::abs(k - r) > 1e-6) throw std::invalid_argument("rollout: grid time is not t0 + k dt, k >= 0");
    const auto ki = static_cast<Index>(r);
    if (ki < prev) throw std::invalid_argument("rollout: grid times must be nondecreasing");
    steps[static_cast<std::size_t>(i)] = prev = ki;
  }
  return steps;
}

template <typename Step>
MatrixXd roll(const VectorXd& x0, const std::vector<Index>& steps, Step&& step) {
  MatrixXd out(static_cast<Index>(steps.size()), x0.size());
  VectorXd x = x0;
  Index k = 0;
  std::size_t row = 0;
  try {
    for (; row < steps.size(); ++row) {
      for (; k < steps[row]; ++k) x = step(x);
      out.row(static_cast<Index>(row)) = x.transpose();
    }
  } catch (const BlowUpError&) {
    out.bottomRows(out.rows() - static_cast<Index>(row)).setConstant(kNaN);
  }
  return out;
}

}  // namespace

MatrixXd deterministic_rollout(const StateSpaceModel& model, const ParameterVector& theta, const VectorXd& x0,
                               double t0, const VectorXd& t_grid) {
  if (x0.size() != model.state_dim) throw std::invalid_argument("rollout: x0 has wrong dimension");
  return roll(x0, step_counts(t0, model.dt, t_grid), [&](const VectorXd& x) { return model.propagate(x, theta); });
}

MatrixXd linear_rollout(const MatrixXd& a, const VectorXd& x0, double t0, double dt, const VectorXd& t_grid) {
  if (a.rows() != a.cols() || a.cols() != x0.size()) throw std::invalid_argument("rollout: A and x0 do not match");
  return roll(x0, step_counts(t0, dt, t_grid), [&](const VectorXd& x) -> VectorXd { return a * x; });
}

PredictiveEnsemble posterior_predictive(const Chain& chain, Index burn_in, const StateSpaceModel& model,
                                        const VectorXd& x0, double t0, const VectorXd& t_grid, Index n_draws,
                                        std::uint64_t seed) {
  if (n_draws < 1) throw std::invalid_argument("posterior_predictive: n_draws must be >= 1");
  if (burn_in < 0 || burn_in >= chain.size()) throw std::invalid_argument("posterior_predictive: burn-in must be < chain length");
  const Index available = chain.size() - burn_in;
  if (available < n_draws)
    throw std::invalid_argument("posterior_predictive: post-burn-in chain is shorter than n_draws");
  if (chain.dim() != model.n_params()) throw std::invalid_argument("posterior_predictive: chain and model disagree on p");

  PredictiveEnsemble ens;
  ens.t_grid = t_grid;
  CounterRng rng(seed);
  for (Index i = 0; i < n_draws; ++i) {
    const Index row = burn_in + static_cast<Index>(rng.below(static_cast<std::uint64_t>(available)));
    const ParameterVector theta = model.parameters(chain.samples.row(row).transpose());
    MatrixXd traj = deterministic_rollout(model, theta, x0, t0, t_grid);
    ens.valid.push_back(traj.allFinite());
    ens.rollouts.push_back(std::move(traj));
    ens.source_sample_idx.push_back(row);
  }
  return ens;
}

PredictiveEnsemble posterior_predictive(const Chain& chain, const StateSpaceModel& model, const VectorXd& x0,
                                        double t0, const VectorXd& t_grid, Index n_draws, std::uint64_t seed) {
  return posterior_predictive(chain, chain.default_burn_in(), model, x0, t0, t_grid, n_draws, seed);
}

double kde_mode(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("kde_mode: no values");
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double iqr = empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(n, -0.2);
  if (!(h > 0.0)) return v[v.size() / 2];

  auto density = [&](double x) {
    double s = 0.0;
    for (double xi : v) {
      const double z = (x - xi) / h;
      s += std::exp(-0.5 * z * z);
    }
    return s;
  };
  // Coarse grid, then mean-shift to the local maximum.
  const double lo = v.front() - 3.0 * h, hi = v.back() + 3.0 * h;
  const int points = 512;
  double best = lo, best_d = -1.0;
  for (int i = 0; i <= points; ++i) {
    const double x = lo + (hi - lo) * i / points;
    const double d = density(x);
    if (d > best_d) {
      best_d = d;
      best = x;
    }
  }
  for (int it = 0; it < 200; ++it) {
    double num = 0.0, den = 0.0;
    for (double xi : v) {
      const double z = (best - xi) / h;
      const double w = std::exp(-0.5 * z * z);
      num += w * xi;
      den += w;
    }
    const double next = num / den;
    if (std::abs(next - best) < 1e-12 * std::max(1.0, std::abs(best))) {
      best = next;
      break;
    }
    best = next;
  }
  return best;
}

Reduction reduce(const PredictiveEnsemble& ens, const ReduceSpec& spec) {
  std::vector<const MatrixXd*> good;
  for (Index i = 0; i < ens.size(); ++i)
    if (ens.valid[static_cast<std::size_t>(i)]) good.push_back(&ens.rollouts[static_cast<std::size_t>(i)]);
  if (good.empty()) throw std::invalid_argument("reduce: no valid rollouts");
  if (spec.rule == ReduceRule::Mode && good.size() < 30) throw std::invalid_argument("reduce: Mode needs at least 30 valid rollouts");
  if (spec.rule == ReduceRule::QuantileBand && !(spec.lo >= 0.0 && spec.lo <= spec.hi && spec.hi <= 1.0))
    throw std::invalid_argument("reduce: quantile band needs 0 <= lo <= hi <= 1");

  const Index len = ens.t_grid.size();
  const Index d = ens.dim();
  Reduction r;
  r.t_grid = ens.t_grid;
  r.n_valid = static_cast<Index>(good.size());
  r.n_excluded = ens.size() - r.n_valid;
  r.estimate.resize(len, d);

  if (spec.rule == ReduceRule::Mean) {
    r.estimate.setZero();
    for (const MatrixXd* m : good) r.estimate += *m;
    r.estimate /= static_cast<double>(good.size());
    return r;
  }
  if (spec.rule == ReduceRule::QuantileBand) {
    r.lo.resize(len, d);
    r.hi.resize(len, d);
  }
  std::vector<double> col(good.size());
  for (Index t = 0; t < len; ++t)
    for (Index j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < good.size(); ++i) col[i] = (*good[i])(t, j);
      if (spec.rule == ReduceRule::Mode) {
        r.estimate(t, j) = kde_mode(col);
      } else {
        r.estimate(t, j) = empirical_quantile(col, 0.5);
        r.lo(t, j) = empirical_quantile(col, spec.lo);
        r.hi(t, j) = empirical_quantile(col, spec.hi);
      }
    }
  return r;
}

ThetaEstimates theta_estimators(const Chain& chain, Index burn_in) {
  const MatrixXd kept = chain.post_burn_in(burn_in);
  ThetaEstimates e;
  e.mean = kept.colwise().mean().transpose();
  Index best = 0;
  chain.log_post.tail(kept.rows()).maxCoeff(&best);
  e.map_row = burn_in + best;
  e.map = kept.row(best).transpose();
  return e;
}

ThetaEstimates theta_estimators(const Chain& chain) { return theta_estimators(chain, chain.default_burn_in()); }

Trajectory to_trajectory(const VectorXd& times, const MatrixXd& rows) {
  if (times.size() != rows.rows()) throw std::invalid_argument("to_trajectory: times and rows differ in length");
  Trajectory tr;
  tr.times = times;
  for (Index i = 0; i < rows.rows(); ++i) tr.states.emplace_back(rows.row(i).transpose());
  return tr;
}

namespace {

Index find_time(const VectorXd& times, double t) {
  for (Index i = 0; i < times.size(); ++i)
    if (std::abs(times(i) - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
  throw std::invalid_argument("mse_at_observations: observation time " + std::to_string(t) + " missing from trajectory");
}

}  // namespace

double mse_at_observations(const Trajectory& est, const Trajectory& truth, const VectorXd& obs_times) {
  if (obs_times.size() == 0) throw std::invalid_argument("mse_at_observations: no observation times");
  if (est.dim() != truth.dim()) throw std::invalid_argument("mse_at_observations: state dimensions differ");
  double total = 0.0;
  for (Index k = 0; k < obs_times.size(); ++k) {
    const auto& a = est.states[static_cast<std::size_t>(find_time(est.times, obs_times(k)))];
    const auto& b = truth.states[static_cast<std::size_t>(find_time(truth.times, obs_times(k)))];
    total += (a - b).squaredNorm();
  }
  return total / static_cast<double>(obs_times.size() * est.dim());
}

}  // namespace sysid
