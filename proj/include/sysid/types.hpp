#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sysid {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Default covariance nugget.
inline constexpr double kNugget = 1e-10;

/// Half-open index range [begin, begin + size) into a parameter vector.
struct IndexRange {
  Index begin = 0;
  Index size = 0;

  Index end() const { return begin + size; }
  bool contains(Index i) const { return i >= begin && i < end(); }
};

/// Split of the parameter vector into dynamics, observation, process-noise and
/// measurement-noise blocks.
struct Partition {
  IndexRange dynamics;
  IndexRange observation;
  IndexRange process;
  IndexRange measurement;

  Index total() const {
    return dynamics.size + observation.size + process.size + measurement.size;
  }

  /// Contiguous layout in the order dynamics, observation, process, measurement.
  static Partition contiguous(Index n_dyn, Index n_obs, Index n_proc, Index n_meas) {
    Partition p;
    p.dynamics = {0, n_dyn};
    p.observation = {n_dyn, n_obs};
    p.process = {n_dyn + n_obs, n_proc};
    p.measurement = {n_dyn + n_obs + n_proc, n_meas};
    return p;
  }

  /// True when the four ranges are disjoint and exactly tile [0, total()).
  bool is_valid() const;
};

/// Parameter values together with their block partition.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(VectorXd values, Partition partition);

  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }
  const Partition& partition() const { return partition_; }
  Index size() const { return values_.size(); }

  auto dynamics() const { return values_.segment(partition_.dynamics.begin, partition_.dynamics.size); }
  auto observation() const {
    return values_.segment(partition_.observation.begin, partition_.observation.size);
  }
  auto process() const { return values_.segment(partition_.process.begin, partition_.process.size); }
  auto measurement() const {
    return values_.segment(partition_.measurement.begin, partition_.measurement.size);
  }

  /// Variance blocks are nonnegative.
  bool variances_feasible() const;

  ParameterVector with_values(VectorXd values) const { return ParameterVector(std::move(values), partition_); }

 private:
  VectorXd values_;
  Partition partition_;
};

inline bool Partition::is_valid() const {
  const IndexRange ranges[] = {dynamics, observation, process, measurement};
  const Index n = total();
  std::vector<int> hits(static_cast<std::size_t>(n), 0);
  for (const auto& r : ranges) {
    if (r.begin < 0 || r.size < 0 || r.end() > n) return false;
    for (Index i = r.begin; i < r.end(); ++i) ++hits[static_cast<std::size_t>(i)];
  }
  for (int h : hits)
    if (h != 1) return false;
  return true;
}

inline ParameterVector::ParameterVector(VectorXd values, Partition partition)
    : values_(std::move(values)), partition_(partition) {
  if (!partition_.is_valid() || partition_.total() != values_.size())
    throw std::invalid_argument("parameter partition does not tile the parameter vector");
}

inline bool ParameterVector::variances_feasible() const {
  return (process().array() >= 0.0).all() && (measurement().array() >= 0.0).all();
}

}  // namespace sysid
