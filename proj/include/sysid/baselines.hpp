#pragma once

#include <complex>
#include <vector>

#include "sysid/models.hpp"

namespace sysid {

/// Consecutive snapshots: column k of Y is y_k and column k of Yp is y_{k+1}.
struct SnapshotPair {
  MatrixXd y;
  MatrixXd yp;

  Index dim() const { return y.rows(); }
  Index count() const { return y.cols(); }
  void validate() const;
};

/// Snapshot pair from dense observations; throws when records are missing or
/// there are fewer than two.
SnapshotPair snapshot_pair(const ObservationSet& obs);

struct LinearFit {
  MatrixXd a;
  Index rank = 0;  ///< numerical rank used by the solve
};

/// A = Yp pinv(Y) with singular values below max(m, n) * s_max * eps discarded.
LinearFit dmd_fit(const SnapshotPair& pair);

/// Total-least-squares DMD from the SVD of [Y^T Yp^T]. With V1, V2 the top and
/// bottom m rows of the trailing 2m - min(r, m) right singular vectors,
/// A = (-V1 V2^T (V2 V2^T)^-1)^T. Throws std::domain_error when V2 V2^T is
/// singular, std::invalid_argument when there are fewer than 2m snapshots.
LinearFit tdmd_fit(const SnapshotPair& pair);

enum class Derivative { Forward, Central };

struct SindyConfig {
  DictionaryLibrary library;
  double threshold = 0.1;
  int max_sweeps = 10;
  Derivative derivative = Derivative::Forward;

  void validate() const;
};

struct SindyFit {
  MatrixXd coefficients;  ///< n_terms x d; column i drives state i
  int sweeps = 0;
  double dt = 0.0;

  /// Coefficients stacked state by state, the layout of EulerDictionary parameters.
  VectorXd stacked() const;
};

/// Sequentially thresholded least squares on finite-difference derivatives.
/// Requires dense observations on a uniform time grid.
SindyFit sindy_fit(const ObservationSet& obs, const SindyConfig& cfg);

/// sum_k || (y_k - y_{k-1}) / dt - Xi(y_{k-1}) theta ||^2 + lambda ||theta||_1 over
/// consecutive present records; theta stacked state by state.
double sindy_objective(const VectorXd& theta, const ObservationSet& obs, const DictionaryLibrary& lib, double dt,
                       double lambda);

struct Eigenpair {
  std::complex<double> discrete;
  std::complex<double> continuous;  ///< principal log(discrete) / dt
};

/// Eigenvalues of A ordered by decreasing modulus, then decreasing imaginary part.
std::vector<Eigenpair> eig_analysis(const MatrixXd& a, double dt);

/// Uniform spacing of the record times, or throws.
double uniform_step(const VectorXd& times);

}  // namespace sysid
