#include "sysid/filters.hpp"

#include <numbers>

namespace sysid {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

FilterResult failed() { return FilterResult{}; }

void record(FilterResult& out, const FilterSettings& s, const VectorXd& m, const MatrixXd& p) {
  if (s.store_history) out.beliefs.push_back({m, p});
}

}  // namespace

FilterResult kf_marginal_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                                const Belief& init, const FilterSettings& settings) {
  if (!model.is_linear()) throw std::invalid_argument("kf_marginal_loglik: model is not linear");
  if (data.size() == 0) throw std::invalid_argument("kf_marginal_loglik: no observations");

  const MatrixXd a = model.transition_matrix(theta.dynamics());
  const MatrixXd h = model.observation_matrix(theta.observation());
  const MatrixXd q = model.process_covariance(theta);
  const MatrixXd r = model.measurement_covariance(theta);
  if (!a.allFinite() || !h.allFinite() || !q.allFinite() || !r.allFinite()) return failed();

  const double eps = settings.nugget;
  FilterResult out;
  out.log_lik = 0.0;
  VectorXd m = init.mean;
  MatrixXd p = init.cov;

  for (Index k = 0; k < data.size(); ++k) {
    // Predict.
    m = a * m;
    p = a * p * a.transpose() + q;
    symmetrize_with_nugget(p, eps);

    const auto& y = data.observations[static_cast<std::size_t>(k)];
    if (!y) {
      record(out, settings, m, p);
      continue;
    }

    // Evidence.
    const VectorXd mu = h * m;
    MatrixXd s = h * p * h.transpose() + r;
    symmetrize_with_nugget(s, eps);
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return failed();
    const VectorXd innovation = *y - mu;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = llt.matrixL().solve(innovation).squaredNorm();
    const double step = -0.5 * quad - 0.5 * static_cast<double>(y->size()) * kLog2Pi - 0.5 * log_det;
    if (!std::isfinite(step)) return failed();
    out.log_lik += step;
    if (settings.store_history) out.evidences.push_back({k, mu, s});

    // Update: gain^T = S^-1 H P-.
    const MatrixXd gain_t = llt.solve(h * p);
    m += gain_t.transpose() * innovation;
    p -= p * h.transpose() * gain_t;
    symmetrize_with_nugget(p, eps);
    if (!m.allFinite() || !p.allFinite()) return failed();
    record(out, settings, m, p);
  }
  return out;
}

FilterResult ukf_marginal_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                                 const Belief& init, const FilterSettings& settings) {
  if (data.size() == 0) throw std::invalid_argument("ukf_marginal_loglik: no observations");
  const Index d = model.state_dim;
  const UnscentedWeights w = UnscentedWeights::make(d, settings.alpha, settings.kappa, settings.beta);
  const MatrixXd q = model.process_covariance(theta);
  const MatrixXd r = model.measurement_covariance(theta);
  if (!q.allFinite() || !r.allFinite()) return failed();
  const VectorXd th_dyn = theta.dynamics();
  const VectorXd th_obs = theta.observation();
  const double eps = settings.nugget;

  FilterResult out;
  out.log_lik = 0.0;
  Belief belief = init;
  const Index n_points = 2 * d + 1;
  MatrixXd propagated(d, n_points);

  for (Index k = 0; k < data.size(); ++k) {
    // Predict through the dynamics.
    auto sigma = try_sigma_points(belief, w, eps);
    if (!sigma) return failed();
    for (Index i = 0; i < n_points; ++i) propagated.col(i) = model.dynamics(sigma->points.col(i), th_dyn);
    if (!propagated.allFinite()) return failed();
    const VectorXd m_pred = weighted_mean(propagated, sigma->w_mean);
    MatrixXd dev = propagated.colwise() - m_pred;
    MatrixXd p_pred = dev * sigma->w_cov.asDiagonal() * dev.transpose() + q;
    symmetrize_with_nugget(p_pred, eps);
    belief = {m_pred, p_pred};

    const auto& y = data.observations[static_cast<std::size_t>(k)];
    if (!y) {
      record(out, settings, belief.mean, belief.cov);
      continue;
    }

    // Evidence from sigma points regenerated at the predicted belief.
    auto sigma_pred = try_sigma_points(belief, w, eps);
    if (!sigma_pred) return failed();
    MatrixXd observed(y->size(), n_points);
    for (Index i = 0; i < n_points; ++i) observed.col(i) = model.observation(sigma_pred->points.col(i), th_obs);
    if (!observed.allFinite()) return failed();
    const VectorXd mu = weighted_mean(observed, sigma_pred->w_mean);
    const MatrixXd obs_dev = observed.colwise() - mu;
    MatrixXd s = obs_dev * sigma_pred->w_cov.asDiagonal() * obs_dev.transpose() + r;
    symmetrize_with_nugget(s, eps);
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return failed();
    const VectorXd innovation = *y - mu;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double quad = llt.matrixL().solve(innovation).squaredNorm();
    const double step = -0.5 * quad - 0.5 * static_cast<double>(y->size()) * kLog2Pi - 0.5 * log_det;
    if (!std::isfinite(step)) return failed();
    out.log_lik += step;
    if (settings.store_history) out.evidences.push_back({k, mu, s});

    // Update.
    const MatrixXd state_dev = sigma_pred->points.colwise() - m_pred;
    const MatrixXd cross = state_dev * sigma_pred->w_cov.asDiagonal() * obs_dev.transpose();
    const MatrixXd gain = llt.solve(cross.transpose()).transpose();
    belief.mean = m_pred + gain * innovation;
    if (settings.literal_covariance_update)
      belief.cov = p_pred - gain * llt.solve(gain.transpose());
    else
      belief.cov = p_pred - gain * s * gain.transpose();
    symmetrize_with_nugget(belief.cov, eps);
    if (!belief.mean.allFinite() || !belief.cov.allFinite()) return failed();
    record(out, settings, belief.mean, belief.cov);
  }
  return out;
}

double det_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                  const VectorXd& x0) {
  const MatrixXd gamma = model.measurement_covariance(theta);
  Eigen::LLT<MatrixXd> llt(gamma);
  if (llt.info() != Eigen::Success || !gamma.allFinite()) return kNegInf;
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const VectorXd th_dyn = theta.dynamics();
  const VectorXd th_obs = theta.observation();

  double quad = 0.0;
  Index present = 0;
  VectorXd x = x0;
  for (Index k = 0; k < data.size(); ++k) {
    x = model.dynamics(x, th_dyn);
    if (!x.allFinite()) return kNegInf;
    const auto& y = data.observations[static_cast<std::size_t>(k)];
    if (!y) continue;
    quad += llt.matrixL().solve(*y - model.observation(x, th_obs)).squaredNorm();
    ++present;
  }
  const double m = static_cast<double>(model.obs_dim);
  const double n = static_cast<double>(present);
  const double v = -0.5 * quad - 0.5 * n * m * kLog2Pi - 0.5 * n * log_det;
  return std::isfinite(v) ? v : kNegInf;
}

double noiseless_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data) {
  if (!model.invertible_observation())
    throw std::invalid_argument("noiseless_loglik: observation operator is not invertible");
  const MatrixXd sigma = model.process_covariance(theta);
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite()) return kNegInf;
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const VectorXd th_dyn = theta.dynamics();
  const VectorXd th_obs = theta.observation();

  double total = 0.0;
  Index scored = 0;
  for (Index k = 1; k < data.size(); ++k) {
    const auto& prev = data.observations[static_cast<std::size_t>(k - 1)];
    const auto& cur = data.observations[static_cast<std::size_t>(k)];
    if (!prev || !cur) continue;
    const VectorXd x_prev = model.observation_inverse(*prev, th_obs);
    const VectorXd x_cur = model.observation_inverse(*cur, th_obs);
    const VectorXd residual = x_cur - model.dynamics(x_prev, th_dyn);
    total += model.log_abs_det_inverse_jacobian(*cur, th_obs) - 0.5 * llt.matrixL().solve(residual).squaredNorm();
    ++scored;
  }
  const double d = static_cast<double>(model.state_dim);
  const double c = static_cast<double>(scored);
  const double v = total - 0.5 * c * d * kLog2Pi - 0.5 * c * log_det;
  return std::isfinite(v) ? v : kNegInf;
}

std::pair<Belief, ObservationSet> anchor_on_first_observation(const StateSpaceModel& model,
                                                              const ParameterVector& theta,
                                                              const ObservationSet& data) {
  if (!model.identity_observation)
    throw std::invalid_argument("anchor_on_first_observation: requires an identity observation map");
  Index first = 0;
  while (first < data.size() && !data.observations[static_cast<std::size_t>(first)]) ++first;
  if (first == data.size()) throw std::invalid_argument("anchor_on_first_observation: no observation present");
  Belief b{*data.observations[static_cast<std::size_t>(first)], model.measurement_covariance(theta)};
  return {std::move(b), data.tail(first + 1)};
}

double evidence_loglik(const FilterResult& result, const ObservationSet& data) {
  double total = 0.0;
  for (const auto& e : result.evidences)
    total += gaussian_logpdf(*data.observations[static_cast<std::size_t>(e.record)] - e.mean, e.cov);
  return total;
}

}  // namespace sysid
