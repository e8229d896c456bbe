#include "sysid/posterior.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <numbers>

namespace sysid {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::ImproperUniform: return "ImproperUniform";
    case PriorKind::HalfNormal: return "HalfNormal";
    case PriorKind::Laplace: return "Laplace";
    case PriorKind::Normal: return "Normal";
  }
  return "unknown";
}

PriorKind prior_kind_from_string(const std::string& name) {
  for (auto k : {PriorKind::ImproperUniform, PriorKind::HalfNormal, PriorKind::Laplace, PriorKind::Normal})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown prior kind '" + name + "'");
}

double PriorTerm::log_density(double x) const {
  static const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  if (std::isnan(x)) return kNegInf;
  switch (kind) {
    case PriorKind::ImproperUniform: return 0.0;
    case PriorKind::HalfNormal:
      if (x < 0.0) return kNegInf;
      return std::log(2.0) - half_log_2pi - std::log(a) - 0.5 * (x / a) * (x / a);
    case PriorKind::Laplace: return std::log(0.5 * a) - a * std::abs(x);
    case PriorKind::Normal: {
      const double z = (x - a) / b;
      return -half_log_2pi - std::log(b) - 0.5 * z * z;
    }
  }
  return kNegInf;
}

void PriorTerm::validate() const {
  switch (kind) {
    case PriorKind::ImproperUniform: return;
    case PriorKind::HalfNormal:
      if (!(a > 0.0)) throw std::invalid_argument("HalfNormal scale must be > 0");
      return;
    case PriorKind::Laplace:
      if (!(a > 0.0)) throw std::invalid_argument("Laplace rate must be > 0");
      return;
    case PriorKind::Normal:
      if (!(b > 0.0) || !std::isfinite(a)) throw std::invalid_argument("Normal needs a finite mean and std > 0");
      return;
  }
}

void PriorSpec::validate() const {
  for (const auto& t : terms) t.validate();
}

PriorSpec PriorSpec::standard(const Partition& partition, double variance_scale) {
  PriorSpec p = uniform(partition.total());
  for (const auto& r : {partition.process, partition.measurement})
    for (Index i = r.begin; i < r.end(); ++i) p.terms[static_cast<std::size_t>(i)] = PriorTerm::half_normal(variance_scale);
  return p;
}

double log_prior(const PriorSpec& prior, const VectorXd& theta) {
  if (theta.size() != prior.size()) throw std::invalid_argument("log_prior: prior and parameter sizes differ");
  double total = 0.0;
  for (Index i = 0; i < theta.size(); ++i) {
    total += prior.terms[static_cast<std::size_t>(i)].log_density(theta(i));
    if (total == kNegInf) return kNegInf;
  }
  return total;
}

double log_prior(const PriorSpec& prior, const ParameterVector& theta) {
  if (!theta.variances_feasible()) return kNegInf;
  return log_prior(prior, theta.values());
}

std::string to_string(LikelihoodKind kind) {
  switch (kind) {
    case LikelihoodKind::KF: return "KF";
    case LikelihoodKind::UKF: return "UKF";
    case LikelihoodKind::Deterministic: return "Deterministic";
    case LikelihoodKind::Noiseless: return "Noiseless";
  }
  return "unknown";
}

LikelihoodKind likelihood_kind_from_string(const std::string& name) {
  for (auto k : {LikelihoodKind::KF, LikelihoodKind::UKF, LikelihoodKind::Deterministic, LikelihoodKind::Noiseless})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown likelihood kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// PosteriorHandle

PosteriorHandle::PosteriorHandle(StateSpaceModel model, ObservationSet data, PriorSpec prior, LikelihoodKind kind,
                                 FilterSettings settings, InitialCondition init)
    : model_(std::move(model)),
      data_(std::move(data)),
      prior_(std::move(prior)),
      kind_(kind),
      settings_(settings),
      init_(std::move(init)),
      calls_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
  data_.validate();
  prior_.validate();
  if (prior_.size() != model_.n_params())
    throw std::invalid_argument("posterior: prior has " + std::to_string(prior_.size()) + " terms but the model has " +
                                std::to_string(model_.n_params()) + " parameters");
  if (data_.dim() != model_.obs_dim) throw std::invalid_argument("posterior: observation dimension mismatch");
  if (kind_ == LikelihoodKind::KF && !model_.is_linear())
    throw std::invalid_argument("posterior: KF likelihood requires a linear model");
  if (kind_ == LikelihoodKind::Noiseless && !model_.invertible_observation())
    throw std::invalid_argument("posterior: Noiseless likelihood requires an invertible observation map");

  const bool anchored = init_.mode == InitialCondition::Mode::AnchorFirstObservation;
  if (anchored && kind_ != LikelihoodKind::Noiseless) {
    if (!model_.identity_observation)
      throw std::invalid_argument("posterior: anchoring on the first observation requires identity h");
    Index first = 0;
    while (!data_.observations[static_cast<std::size_t>(first)]) ++first;
    init_.belief.mean = *data_.observations[static_cast<std::size_t>(first)];
    filtered_ = data_.tail(first + 1);
    if (filtered_.size() == 0) throw std::invalid_argument("posterior: no records after the anchor observation");
  } else if (!anchored && kind_ != LikelihoodKind::Noiseless) {
    if (init_.belief.mean.size() != model_.state_dim)
      throw std::invalid_argument("posterior: initial mean has wrong dimension");
    if (kind_ != LikelihoodKind::Deterministic &&
        (init_.belief.cov.rows() != model_.state_dim || init_.belief.cov.cols() != model_.state_dim))
      throw std::invalid_argument("posterior: initial covariance has wrong shape");
  }
  settings_.store_history = false;
}

double PosteriorHandle::log_prior(const VectorXd& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("log_prior: parameter dimension mismatch");
  return sysid::log_prior(prior_, model_.parameters(theta));
}

double PosteriorHandle::log_likelihood(const VectorXd& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("log_likelihood: parameter dimension mismatch");
  calls_->fetch_add(1, std::memory_order_relaxed);
  if (!theta.allFinite()) return kNegInf;
  const ParameterVector pv = model_.parameters(theta);
  const bool anchored = init_.mode == InitialCondition::Mode::AnchorFirstObservation;
  const ObservationSet& records = anchored ? filtered_ : data_;
  auto initial_belief = [&]() {
    if (!anchored) return init_.belief;
    return Belief{init_.belief.mean, model_.measurement_covariance(pv)};
  };
  double v = kNegInf;
  switch (kind_) {
    case LikelihoodKind::KF: v = kf_marginal_loglik(model_, pv, records, initial_belief(), settings_).log_lik; break;
    case LikelihoodKind::UKF: v = ukf_marginal_loglik(model_, pv, records, initial_belief(), settings_).log_lik; break;
    case LikelihoodKind::Deterministic: v = det_loglik(model_, pv, records, init_.belief.mean); break;
    case LikelihoodKind::Noiseless: v = noiseless_loglik(model_, pv, data_); break;
  }
  return std::isfinite(v) ? v : kNegInf;
}

double PosteriorHandle::log_posterior(const VectorXd& theta) const {
  const double lp = log_prior(theta);
  if (lp == kNegInf) return kNegInf;
  return lp + log_likelihood(theta);
}

std::function<double(const VectorXd&)> PosteriorHandle::target() const {
  return [this](const VectorXd& theta) { return log_posterior(theta); };
}

// ---------------------------------------------------------------------------
// MAP search

namespace {

constexpr double kPenalty = 1e100;

struct Tracker {
  const LogDensity* f = nullptr;
  Index evaluations = 0;
  Index max_evaluations = 0;
  VectorXd best;
  double best_value = kNegInf;

  double eval(const VectorXd& x) {
    ++evaluations;
    double v = (*f)(x);
    if (std::isnan(v)) v = kNegInf;
    if (v > best_value) {
      best_value = v;
      best = x;
    }
    return v;
  }
  bool exhausted() const { return evaluations >= max_evaluations; }
};

VectorXd to_eigen(const gsl_vector* v) {
  VectorXd x(static_cast<Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Index>(i)) = gsl_vector_get(v, i);
  return x;
}

void to_gsl(const VectorXd& x, gsl_vector* v) {
  for (Index i = 0; i < x.size(); ++i) gsl_vector_set(v, static_cast<std::size_t>(i), x(i));
}

double negated(const gsl_vector* v, void* params) {
  auto* t = static_cast<Tracker*>(params);
  const double value = t->eval(to_eigen(v));
  return std::isfinite(value) ? -value : kPenalty;
}

void negated_gradient(const gsl_vector* v, void* params, gsl_vector* g) {
  auto* t = static_cast<Tracker*>(params);
  VectorXd x = to_eigen(v);
  for (Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    const double xi = x(i);
    x(i) = xi + h;
    const double up = t->eval(x);
    x(i) = xi - h;
    const double down = t->eval(x);
    x(i) = xi;
    const double grad = (std::isfinite(up) && std::isfinite(down)) ? -(up - down) / (2.0 * h) : 0.0;
    gsl_vector_set(g, static_cast<std::size_t>(i), grad);
  }
}

void negated_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = negated(v, params);
  negated_gradient(v, params, g);
}

bool run_nelder_mead(Tracker& t, const OptimizerConfig& cfg) {
  const auto p = static_cast<std::size_t>(t.best.size());
  gsl_multimin_function fn{&negated, p, &t};
  gsl_vector* x = gsl_vector_alloc(p);
  gsl_vector* step = gsl_vector_alloc(p);
  bool converged = false;
  for (int round = 0; round <= cfg.restarts && !t.exhausted(); ++round) {
    const double before = t.best_value;
    to_gsl(t.best, x);
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = gsl_vector_get(x, i);
      gsl_vector_set(step, i, xi == 0.0 ? cfg.initial_step : cfg.initial_step * std::abs(xi));
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, p);
    gsl_multimin_fminimizer_set(s, &fn, x, step);
    converged = false;
    while (!t.exhausted()) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), cfg.tolerance) == GSL_SUCCESS) {
        converged = true;
        break;
      }
    }
    gsl_multimin_fminimizer_free(s);
    if (round > 0 && !(t.best_value > before + 1e-12 * std::max(1.0, std::abs(before)))) break;
  }
  gsl_vector_free(step);
  gsl_vector_free(x);
  return converged;
}

bool run_bfgs(Tracker& t, const OptimizerConfig& cfg) {
  const auto p = static_cast<std::size_t>(t.best.size());
  gsl_multimin_function_fdf fn{&negated, &negated_gradient, &negated_fdf, p, &t};
  gsl_vector* x = gsl_vector_alloc(p);
  to_gsl(t.best, x);
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, p);
  gsl_multimin_fdfminimizer_set(s, &fn, x, 0.01, 0.1);
  bool converged = false;
  while (!t.exhausted()) {
    if (gsl_multimin_fdfminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_gradient(gsl_multimin_fdfminimizer_gradient(s), cfg.tolerance) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  gsl_multimin_fdfminimizer_free(s);
  gsl_vector_free(x);
  return converged;
}

}  // namespace

MatrixXd finite_difference_hessian(const LogDensity& f, const VectorXd& x, double rel) {
  const Index p = x.size();
  VectorXd h(p);
  for (Index i = 0; i < p; ++i) h(i) = x(i) == 0.0 ? rel : rel * std::abs(x(i));
  const double f0 = f(x);
  if (!std::isfinite(f0)) return {};
  MatrixXd hess(p, p);
  VectorXd y = x;
  auto at = [&](Index i, double si, Index j, double sj) {
    y = x;
    y(i) += si * h(i);
    y(j) += sj * h(j);
    return f(y);
  };
  for (Index i = 0; i < p; ++i) {
    const double up = at(i, 1.0, i, 0.0);
    const double down = at(i, -1.0, i, 0.0);
    if (!std::isfinite(up) || !std::isfinite(down)) return {};
    hess(i, i) = (up - 2.0 * f0 + down) / (h(i) * h(i));
    for (Index j = 0; j < i; ++j) {
      const double pp = at(i, 1.0, j, 1.0);
      const double pm = at(i, 1.0, j, -1.0);
      const double mp = at(i, -1.0, j, 1.0);
      const double mm = at(i, -1.0, j, -1.0);
      if (!std::isfinite(pp) || !std::isfinite(pm) || !std::isfinite(mp) || !std::isfinite(mm)) return {};
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

std::optional<MatrixXd> inverse_negative_hessian(const MatrixXd& hessian, double nugget) {
  if (hessian.size() == 0 || !hessian.allFinite()) return std::nullopt;
  MatrixXd neg = -hessian;
  symmetrize_with_nugget(neg, 0.0);
  // A flat or indefinite curvature is not rescued by the nugget alone.
  if (Eigen::LLT<MatrixXd>(neg).info() != Eigen::Success) return std::nullopt;
  neg.diagonal().array() += nugget;
  Eigen::LLT<MatrixXd> llt(neg);
  if (llt.info() != Eigen::Success) return std::nullopt;
  MatrixXd inv = llt.solve(MatrixXd::Identity(neg.rows(), neg.cols()));
  symmetrize_with_nugget(inv, nugget);
  if (!inv.allFinite() || Eigen::LLT<MatrixXd>(inv).info() != Eigen::Success) return std::nullopt;
  return inv;
}

MapResult find_map(const LogDensity& f, const VectorXd& init, const OptimizerConfig& cfg) {
  if (init.size() == 0) throw std::invalid_argument("find_map: empty parameter vector");
  gsl_set_error_handler_off();
  Tracker t;
  t.f = &f;
  t.max_evaluations = cfg.max_evaluations;
  t.best = init;
  t.best_value = kNegInf;
  t.eval(init);
  if (t.best_value == kNegInf) throw std::invalid_argument("find_map: infeasible start (log density is -inf)");

  MapResult out;
  out.converged = cfg.method == OptimizerMethod::BFGS ? run_bfgs(t, cfg) : run_nelder_mead(t, cfg);
  out.theta = t.best;
  out.log_post = t.best_value;
  out.evaluations = t.evaluations;

  auto inv = inverse_negative_hessian(finite_difference_hessian(f, out.theta, cfg.hessian_step));
  if (inv) {
    out.neg_hessian_inv = *inv;
  } else {
    out.neg_hessian_inv = 1e-2 * MatrixXd::Identity(init.size(), init.size());
    out.hessian = HessianStatus::Fallback;
  }
  return out;
}

MapResult find_map(const PosteriorHandle& handle, const VectorXd& init, const OptimizerConfig& cfg) {
  return find_map(handle.target(), init, cfg);
}

}  // namespace sysid
