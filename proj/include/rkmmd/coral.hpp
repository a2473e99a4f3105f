#pragma once

#include "rkmmd/core.hpp"

// Correlation alignment (CORAL): distance between second-order statistics.

namespace rkmmd {

struct CoralGradient {
  Matrix source;
  Matrix target;
  double value = 0.0;
};

namespace detail {

inline void check_coral_inputs(const FeatureMatrix& s, const FeatureMatrix& t) {
  require_same_dim(s, t, "coral");
  if (s.n() < 2 || t.n() < 2) throw InputError("coral: each sample needs at least 2 rows");
}

inline Matrix centered(const Matrix& x) { return x.rowwise() - x.colwise().mean(); }

// Sample covariance with divisor n - 1.
inline Matrix covariance(const Matrix& xc) {
  return (xc.transpose() * xc) / static_cast<double>(xc.rows() - 1);
}

}  // namespace detail

/// ||C_S - C_T||_F^2 / (4 d^2)
inline double coral_loss(const FeatureMatrix& s, const FeatureMatrix& t) {
  detail::check_coral_inputs(s, t);
  const Matrix diff = detail::covariance(detail::centered(s.data())) -
                      detail::covariance(detail::centered(t.data()));
  const double d = static_cast<double>(s.d());
  return diff.squaredNorm() / (4.0 * d * d);
}

inline CoralGradient coral_gradient(const FeatureMatrix& s, const FeatureMatrix& t) {
  detail::check_coral_inputs(s, t);
  const Matrix xs = detail::centered(s.data());
  const Matrix xt = detail::centered(t.data());
  const Matrix diff = detail::covariance(xs) - detail::covariance(xt);
  const double d2 = static_cast<double>(s.d()) * static_cast<double>(s.d());
  // Centering drops out because the columns of xs, xt already sum to zero.
  CoralGradient g;
  g.source = xs * diff / (d2 * static_cast<double>(s.n() - 1));
  g.target = -(xt * diff) / (d2 * static_cast<double>(t.n() - 1));
  g.value = diff.squaredNorm() / (4.0 * d2);
  return g;
}

}  // namespace rkmmd
