#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include "sysid/filters.hpp"
#include "sysid/rng.hpp"

namespace oracle {

using sysid::Index;
using sysid::MatrixXd;
using sysid::VectorXd;

/// log N(y_{1:n}) for x_0 ~ N(m0, P0), x_k = A x_{k-1} + w_k, y_k = H x_k + v_k,
/// assembled directly from the joint Gaussian of the stacked observations.
inline double joint_gaussian_loglik(const MatrixXd& a, const MatrixXd& h, const MatrixXd& q, const MatrixXd& r,
                                    const VectorXd& m0, const MatrixXd& p0, const std::vector<VectorXd>& ys) {
  const Index n = static_cast<Index>(ys.size());
  const Index d = a.rows();
  const Index m = h.rows();
  std::vector<MatrixXd> pow(static_cast<std::size_t>(n + 1));
  pow[0] = MatrixXd::Identity(d, d);
  for (Index k = 1; k <= n; ++k) pow[static_cast<std::size_t>(k)] = a * pow[static_cast<std::size_t>(k - 1)];
  // Marginal state covariances.
  std::vector<MatrixXd> cx(static_cast<std::size_t>(n + 1));
  cx[0] = p0;
  for (Index k = 1; k <= n; ++k) cx[static_cast<std::size_t>(k)] = a * cx[static_cast<std::size_t>(k - 1)] * a.transpose() + q;

  VectorXd mean(n * m), y(n * m);
  MatrixXd cov(n * m, n * m);
  for (Index j = 1; j <= n; ++j) {
    mean.segment((j - 1) * m, m) = h * pow[static_cast<std::size_t>(j)] * m0;
    y.segment((j - 1) * m, m) = ys[static_cast<std::size_t>(j - 1)];
    for (Index k = j; k <= n; ++k) {
      // Cov(x_k, x_j) = A^{k-j} Cov(x_j) for k >= j.
      const MatrixXd block = h * pow[static_cast<std::size_t>(k - j)] * cx[static_cast<std::size_t>(j)] * h.transpose();
      cov.block((k - 1) * m, (j - 1) * m, m, m) = block;
      cov.block((j - 1) * m, (k - 1) * m, m, m) = block.transpose();
    }
    cov.block((j - 1) * m, (j - 1) * m, m, m) += r;
  }
  Eigen::LDLT<MatrixXd> ldlt(cov);
  const VectorXd res = y - mean;
  const double quad = res.dot(ldlt.solve(res));
  const double log_det = ldlt.vectorD().array().log().sum();
  return -0.5 * quad - 0.5 * static_cast<double>(n * m) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
}

inline MatrixXd random_spd(sysid::CounterRng& rng, Index d, double floor) {
  MatrixXd b(d, d);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  return b * b.transpose() / static_cast<double>(d) + floor * MatrixXd::Identity(d, d);
}

inline MatrixXd random_matrix(sysid::CounterRng& rng, Index r, Index c, double scale) {
  MatrixXd b(r, c);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = scale * rng.normal();
  return b;
}

/// A random linear-Gaussian problem with fixed covariance blocks.
struct LinearProblem {
  sysid::StateSpaceModel model;
  sysid::ParameterVector theta;
  sysid::ObservationSet data;
  sysid::Belief init;
  MatrixXd a, h, q, r;
  std::vector<VectorXd> ys;
};

inline LinearProblem random_linear_problem(std::uint64_t seed, Index max_d, Index max_m, Index max_n) {
  sysid::CounterRng rng(seed);
  LinearProblem p;
  const Index d = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_d)));
  const Index m = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_m)));
  const Index n = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_n)));
  p.a = random_matrix(rng, d, d, 0.7);
  p.h = random_matrix(rng, m, d, 1.0);
  p.q = random_spd(rng, d, 0.1);
  p.r = random_spd(rng, m, 0.1);
  sysid::ModelConfig cfg;
  cfg.state_dim = d;
  cfg.observation = sysid::ObservationKind::Matrix;
  cfg.observation_matrix = p.h;
  cfg.process = sysid::CovarianceSpec::constant(p.q);
  cfg.measurement = sysid::CovarianceSpec::constant(p.r);
  p.model = sysid::make_model(sysid::ModelFamily::LinearMatrix, cfg);
  VectorXd th(d * d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) th(i * d + j) = p.a(i, j);
  p.theta = p.model.parameters(th);
  p.init = {random_matrix(rng, d, 1, 1.0).col(0), random_spd(rng, d, 0.2)};
  p.data.times.resize(n);
  for (Index k = 0; k < n; ++k) {
    p.data.times(k) = static_cast<double>(k + 1);
    p.ys.push_back(random_matrix(rng, m, 1, 1.5).col(0));
    p.data.observations.emplace_back(p.ys.back());
  }
  return p;
}

}  // namespace oracle

namespace oracle {

/// Newton iterations on f with central finite differences (absolute step h).
/// Exact up to rounding when f is quadratic.
inline VectorXd newton_maximize(const std::function<double(const VectorXd&)>& f, VectorXd x, double h = 1e-3,
                                int iterations = 3) {
  const Index p = x.size();
  for (int it = 0; it < iterations; ++it) {
    VectorXd g(p);
    MatrixXd hess(p, p);
    const double f0 = f(x);
    auto at = [&](Index i, double si, Index j, double sj) {
      VectorXd y = x;
      y(i) += si * h;
      y(j) += sj * h;
      return f(y);
    };
    for (Index i = 0; i < p; ++i) {
      const double up = at(i, 1, i, 0), down = at(i, -1, i, 0);
      g(i) = (up - down) / (2 * h);
      hess(i, i) = (up - 2 * f0 + down) / (h * h);
      for (Index j = 0; j < i; ++j)
        hess(i, j) = hess(j, i) = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4 * h * h);
    }
    x -= hess.ldlt().solve(g);
  }
  return x;
}

}  // namespace oracle
