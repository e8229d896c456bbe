#pragma once

#include <cmath>

#include "sysid/types.hpp"

namespace sysid {

/// One classical fourth-order Runge-Kutta step of x' = f(x).
template <typename Field, typename Derived>
auto rk4_step(const Field& f, const Eigen::MatrixBase<Derived>& x, double h) {
  using Vector = typename Derived::PlainObject;
  const Vector k1 = f(x.derived());
  const Vector k2 = f(Vector(x + 0.5 * h * k1));
  const Vector k3 = f(Vector(x + 0.5 * h * k2));
  const Vector k4 = f(Vector(x + h * k3));
  return Vector(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// Advances x over a span of length `span` using `substeps` equal RK4 steps.
template <typename Field, typename Derived>
auto rk4_advance(const Field& f, const Eigen::MatrixBase<Derived>& x, double span, int substeps) {
  using Vector = typename Derived::PlainObject;
  Vector state = x;
  const double h = span / substeps;
  for (int i = 0; i < substeps; ++i) state = rk4_step(f, state, h);
  return state;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace sysid
