#include "sysid/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sysid {

void SnapshotPair::validate() const {
  if (y.rows() != yp.rows() || y.cols() != yp.cols()) throw std::invalid_argument("snapshot pair shapes differ");
  if (y.cols() < 1) throw std::invalid_argument("snapshot pair needs at least two observations");
}

SnapshotPair snapshot_pair(const ObservationSet& obs) {
  if (!obs.dense()) throw std::invalid_argument("dense data required: observation set has missing records");
  if (obs.size() < 2) throw std::invalid_argument("snapshot pair needs at least two observations");
  const MatrixXd all = obs.present_matrix();
  return {all.leftCols(all.cols() - 1), all.rightCols(all.cols() - 1)};
}

namespace {

double cutoff(const Eigen::VectorXd& singular, Index rows, Index cols) {
  if (singular.size() == 0) return 0.0;
  return static_cast<double>(std::max(rows, cols)) * singular(0) * std::numeric_limits<double>::epsilon();
}

}  // namespace

LinearFit dmd_fit(const SnapshotPair& pair) {
  pair.validate();
  Eigen::JacobiSVD<MatrixXd> svd(pair.y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double tol = cutoff(s, pair.y.rows(), pair.y.cols());
  VectorXd inv = VectorXd::Zero(s.size());
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) {
      inv(i) = 1.0 / s(i);
      ++rank;
    }
  const MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return {pair.yp * pinv, rank};
}

LinearFit tdmd_fit(const SnapshotPair& pair) {
  pair.validate();
  const Index m = pair.dim();
  if (pair.count() < 2 * m) throw std::invalid_argument("tdmd_fit: needs at least 2m snapshot pairs");
  MatrixXd z(pair.count(), 2 * m);
  z << pair.y.transpose(), pair.yp.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(z, Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  const double tol = cutoff(s, z.rows(), z.cols());
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  const Index k = 2 * m - std::min(r, m);
  const MatrixXd trailing = svd.matrixV().rightCols(k);
  const MatrixXd v1 = trailing.topRows(m);
  const MatrixXd v2 = trailing.bottomRows(m);
  const MatrixXd gram = v2 * v2.transpose();
  Eigen::FullPivLU<MatrixXd> lu(gram);
  if (!lu.isInvertible() || lu.rcond() < 1e-12)
    throw std::domain_error("tdmd_fit: total-least-squares solution does not exist (singular V2 V2^T)");
  const MatrixXd x = -v1 * v2.transpose() * lu.inverse();
  return {x.transpose(), r};
}

// ---------------------------------------------------------------------------
// SINDy

void SindyConfig::validate() const {
  library.validate();
  if (!(threshold >= 0.0)) throw std::invalid_argument("sindy: threshold must be >= 0");
  if (max_sweeps < 1) throw std::invalid_argument("sindy: max_sweeps must be >= 1");
}

VectorXd SindyFit::stacked() const {
  VectorXd out(coefficients.size());
  for (Index i = 0; i < coefficients.cols(); ++i) out.segment(i * coefficients.rows(), coefficients.rows()) = coefficients.col(i);
  return out;
}

double uniform_step(const VectorXd& times) {
  if (times.size() < 2) throw std::invalid_argument("uniform_step: need at least two times");
  const double dt = (times(times.size() - 1) - times(0)) / static_cast<double>(times.size() - 1);
  for (Index k = 1; k < times.size(); ++k)
    if (std::abs((times(k) - times(k - 1)) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw std::invalid_argument("observation times are not uniformly spaced");
  return dt;
}

namespace {

/// Least squares on the columns in `support`; zeros elsewhere.
VectorXd solve_on_support(const MatrixXd& features, const VectorXd& target, const std::vector<bool>& support) {
  std::vector<Index> cols;
  for (std::size_t j = 0; j < support.size(); ++j)
    if (support[j]) cols.push_back(static_cast<Index>(j));
  VectorXd c = VectorXd::Zero(features.cols());
  if (cols.empty()) return c;
  if (static_cast<Index>(cols.size()) > features.rows())
    throw std::invalid_argument("sindy: fewer samples than active library terms (underdetermined)");
  MatrixXd sub(features.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) sub.col(static_cast<Index>(j)) = features.col(cols[j]);
  const VectorXd sol = sub.colPivHouseholderQr().solve(target);
  for (std::size_t j = 0; j < cols.size(); ++j) c(cols[j]) = sol(static_cast<Index>(j));
  return c;
}

}  // namespace

SindyFit sindy_fit(const ObservationSet& obs, const SindyConfig& cfg) {
  cfg.validate();
  if (!obs.dense()) throw std::invalid_argument("dense data required: sindy_fit cannot use missing observations");
  const double dt = uniform_step(obs.times);
  const MatrixXd x = obs.present_matrix();
  const Index d = x.rows();
  const Index n = x.cols();
  if (cfg.library.d_in != d) throw std::invalid_argument("sindy: library input dimension != observation dimension");

  const bool central = cfg.derivative == Derivative::Central;
  const Index first = central ? 1 : 0;
  const Index rows = central ? n - 2 : n - 1;
  if (rows < 1) throw std::invalid_argument("sindy: not enough observations for the derivative stencil");
  MatrixXd features(rows, cfg.library.n_terms());
  MatrixXd deriv(rows, d);
  for (Index r = 0; r < rows; ++r) {
    const Index k = first + r;
    features.row(r) = dictionary_eval(cfg.library, x.col(k)).transpose();
    if (central)
      deriv.row(r) = ((x.col(k + 1) - x.col(k - 1)) / (2.0 * dt)).transpose();
    else
      deriv.row(r) = ((x.col(k + 1) - x.col(k)) / dt).transpose();
  }

  SindyFit fit;
  fit.dt = dt;
  fit.coefficients.resize(cfg.library.n_terms(), d);
  const std::size_t n_terms = static_cast<std::size_t>(cfg.library.n_terms());
  for (Index i = 0; i < d; ++i) {
    std::vector<bool> support(n_terms, true);
    VectorXd c = solve_on_support(features, deriv.col(i), support);
    int sweeps = 0;
    for (; sweeps < cfg.max_sweeps; ++sweeps) {
      std::vector<bool> next(n_terms);
      for (std::size_t j = 0; j < n_terms; ++j) next[j] = support[j] && std::abs(c(static_cast<Index>(j))) >= cfg.threshold;
      if (next == support) break;
      support = next;
      c = solve_on_support(features, deriv.col(i), support);
    }
    fit.sweeps = std::max(fit.sweeps, sweeps);
    fit.coefficients.col(i) = c;
  }
  return fit;
}

double sindy_objective(const VectorXd& theta, const ObservationSet& obs, const DictionaryLibrary& lib, double dt,
                       double lambda) {
  const Index d = lib.d_in;
  const Index k = lib.n_terms();
  if (theta.size() != d * k) throw std::invalid_argument("sindy_objective: theta has wrong length");
  double total = 0.0;
  for (Index j = 1; j < obs.size(); ++j) {
    const auto& prev = obs.observations[static_cast<std::size_t>(j - 1)];
    const auto& cur = obs.observations[static_cast<std::size_t>(j)];
    if (!prev || !cur) continue;
    const VectorXd xi = dictionary_eval(lib, *prev);
    VectorXd r = (*cur - *prev) / dt;
    for (Index i = 0; i < d; ++i) r(i) -= xi.dot(theta.segment(i * k, k));
    total += r.squaredNorm();
  }
  return total + lambda * theta.lpNorm<1>();
}

// ---------------------------------------------------------------------------
// Eigenvalues

std::vector<Eigenpair> eig_analysis(const MatrixXd& a, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("eig_analysis: dt must be positive");
  if (a.rows() != a.cols()) throw std::invalid_argument("eig_analysis: matrix must be square");
  Eigen::EigenSolver<MatrixXd> es(a, false);
  std::vector<Eigenpair> out;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    std::complex<double> lam = es.eigenvalues()(i);
    // Real eigenvalues take the +0 imaginary part so -1 maps to +i pi / dt.
    if (lam.imag() == 0.0) lam = {lam.real(), 0.0};
    out.push_back({lam, std::log(lam) / dt});
  }
  std::sort(out.begin(), out.end(), [](const Eigenpair& l, const Eigenpair& r) {
    if (std::abs(l.discrete) != std::abs(r.discrete)) return std::abs(l.discrete) > std::abs(r.discrete);
    return l.discrete.imag() > r.discrete.imag();
  });
  return out;
}

}  // namespace sysid
