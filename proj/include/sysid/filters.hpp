#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sysid/models.hpp"
#include "sysid/types.hpp"

namespace sysid {

template <typename Scalar>
struct GaussianBelief {
  Vec<Scalar> mean;
  Mat<Scalar> cov;

  Index dim() const { return mean.size(); }
};

using Belief = GaussianBelief<double>;

/// (P + P^T) / 2 + eps I, in place.
template <typename Derived>
void symmetrize_with_nugget(Eigen::MatrixBase<Derived>& p, typename Derived::Scalar eps) {
  p = (0.5 * (p + p.transpose())).eval();
  p.diagonal().array() += eps;
}

/// log N(residual; 0, cov) through a Cholesky factor; -inf when cov is not
/// positive definite or the result is not finite.
template <typename Derived, typename DerivedCov>
double gaussian_logpdf(const Eigen::MatrixBase<Derived>& residual, const Eigen::MatrixBase<DerivedCov>& cov) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Mat<Scalar>> llt(cov);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Vec<Scalar> z = llt.matrixL().solve(residual);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double v = -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(residual.size()) * std::log(2.0 * std::numbers::pi) -
                   0.5 * log_det;
  return std::isfinite(v) ? v : kNegInf;
}

/// Unscented-transform weights for state dimension d.
struct UnscentedWeights {
  double lambda = 0.0;
  double w0_mean = 0.0;
  double w0_cov = 0.0;
  double wi = 0.0;  ///< shared mean/cov weight of the 2d outer points
  double spread = 0.0;  ///< sqrt(d + lambda)

  static UnscentedWeights make(Index d, double alpha, double kappa, double beta) {
    UnscentedWeights w;
    const double dd = static_cast<double>(d);
    w.lambda = alpha * alpha * (dd + kappa) - dd;
    w.w0_mean = w.lambda / (dd + w.lambda);
    w.w0_cov = w.w0_mean + (1.0 - alpha * alpha + beta);
    w.wi = 1.0 / (2.0 * (dd + w.lambda));
    w.spread = std::sqrt(dd + w.lambda);
    return w;
  }
};

template <typename Scalar>
struct SigmaPointSet {
  Mat<Scalar> points;  ///< d x (2d+1); column 0 is the mean, columns i and i+d mirror each other
  Vec<Scalar> w_mean;
  Vec<Scalar> w_cov;
  Scalar lambda{};

  Index count() const { return points.cols(); }
};

/// Sigma points from the columns of the lower Cholesky factor of cov + eps I.
/// Returns nullopt when the factorization fails.
template <typename Scalar>
std::optional<SigmaPointSet<Scalar>> try_sigma_points(const GaussianBelief<Scalar>& belief, const UnscentedWeights& w,
                                                      Scalar eps) {
  const Index d = belief.dim();
  Mat<Scalar> source = belief.cov;
  source.diagonal().array() += eps;
  Eigen::LLT<Mat<Scalar>> llt(source);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Mat<Scalar> l = llt.matrixL();
  if (!l.allFinite()) return std::nullopt;

  SigmaPointSet<Scalar> s;
  s.lambda = w.lambda;
  s.points.resize(d, 2 * d + 1);
  s.points.col(0) = belief.mean;
  for (Index i = 0; i < d; ++i) {
    s.points.col(1 + i) = belief.mean + w.spread * l.col(i);
    s.points.col(1 + d + i) = belief.mean - w.spread * l.col(i);
  }
  s.w_mean = Vec<Scalar>::Constant(2 * d + 1, w.wi);
  s.w_cov = s.w_mean;
  s.w_mean(0) = w.w0_mean;
  s.w_cov(0) = w.w0_cov;
  return s;
}

/// Sigma points per the unscented transform; throws std::domain_error when
/// cov + eps I has no Cholesky factor.
template <typename Scalar>
SigmaPointSet<Scalar> ukf_sigma_points(const GaussianBelief<Scalar>& belief, double alpha, double kappa, double beta,
                                       Scalar eps = Scalar(kNugget)) {
  auto s = try_sigma_points(belief, UnscentedWeights::make(belief.dim(), alpha, kappa, beta), eps);
  if (!s) throw std::domain_error("ukf_sigma_points: covariance has no Cholesky factor");
  return *s;
}

/// Weighted mean of the columns of `values`, computed relative to column 0 so
/// that the large-magnitude central weight does not cancel catastrophically.
template <typename Derived, typename DerivedW>
Vec<typename Derived::Scalar> weighted_mean(const Eigen::MatrixBase<Derived>& values,
                                            const Eigen::MatrixBase<DerivedW>& w_mean) {
  using Scalar = typename Derived::Scalar;
  Vec<Scalar> m = values.col(0);
  for (Index i = 1; i < values.cols(); ++i) m += w_mean(i) * (values.col(i) - values.col(0));
  return m;
}

/// Settings shared by the Gaussian filters. Defaults: alpha = 1e-3, kappa = 0, beta = 1.
struct FilterSettings {
  double alpha = 1e-3;
  double kappa = 0.0;
  double beta = 1.0;
  double nugget = kNugget;
  /// Covariance update P- - K S^-1 K^T as printed in the algorithm listing
  /// (the default is the standard P- - K S K^T).
  bool literal_covariance_update = false;
  /// Record per-step beliefs and evidences.
  bool store_history = true;
};

struct Evidence {
  Index record = 0;  ///< index into the ObservationSet
  VectorXd mean;
  MatrixXd cov;
};

struct FilterResult {
  double log_lik = kNegInf;
  std::vector<Belief> beliefs;  ///< posterior (or predicted, when missing) belief after each record
  std::vector<Evidence> evidences;

  bool ok() const { return std::isfinite(log_lik); }
};

/// Exact marginal log-likelihood of a linear-Gaussian model (Kalman filter).
/// `init` is the belief one model step before the first record. Numerical
/// breakdown yields log_lik = -inf rather than an exception.
FilterResult kf_marginal_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                                const Belief& init, const FilterSettings& settings = {});

/// Unscented approximation of the marginal log-likelihood.
FilterResult ukf_marginal_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                                 const Belief& init, const FilterSettings& settings = {});

/// Log-likelihood with zero process noise: the deterministic rollout from x0 is
/// scored against each present observation under Gamma.
double det_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data,
                  const VectorXd& x0);

/// Log-likelihood with noiseless, invertible observations. Only consecutive
/// pairs of present records are scored; the first record's term is treated as
/// a parameter-independent constant and omitted. Throws std::invalid_argument
/// when the model has no observation inverse.
double noiseless_loglik(const StateSpaceModel& model, const ParameterVector& theta, const ObservationSet& data);

/// Initial belief for identity observations: N(y_first, Gamma(theta)) placed at
/// the first present record, with the data trimmed to the records after it.
std::pair<Belief, ObservationSet> anchor_on_first_observation(const StateSpaceModel& model,
                                                              const ParameterVector& theta,
                                                              const ObservationSet& data);

/// Recomputes sum_k log N(y_k; mu_k, S_k) from stored evidences.
double evidence_loglik(const FilterResult& result, const ObservationSet& data);

}  // namespace sysid
