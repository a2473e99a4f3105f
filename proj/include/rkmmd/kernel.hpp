#pragma once

#include "rkmmd/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

// =============================================================================
// Gaussian and multi-bandwidth Gaussian kernels, Gram matrices, median heuristic
// =============================================================================

namespace rkmmd {

enum class KernelFamily { gaussian, gaussian_mixture };
enum class BandwidthMode { fixed, median_heuristic };

/// Kernel definition.
///
/// k(x, y) = sum_m weights[m] * exp(-||x - y||^2 / (2 * sigma_m^2)).
///
/// Note the 2*sigma^2 in the denominator: sigma is the Gaussian standard
/// deviation, not the 1/sigma^2 "gamma" parameterization.
///
/// In `fixed` mode `bandwidths` are absolute sigmas. In `median_heuristic` mode
/// they are multipliers applied to the median-heuristic sigma of whatever data
/// the kernel is evaluated on; see resolve_bandwidths().
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  std::vector<double> bandwidths{1.0};
  std::vector<double> weights{1.0};
  BandwidthMode bandwidth_mode = BandwidthMode::fixed;

  static KernelSpec gaussian(double sigma) {
    KernelSpec s;
    s.bandwidths = {sigma};
    s.validate();
    return s;
  }

  static KernelSpec gaussian_median() {
    KernelSpec s;
    s.bandwidth_mode = BandwidthMode::median_heuristic;
    return s;
  }

  /// Equal-weight mixture over the given sigmas (or multipliers in median mode).
  static KernelSpec mixture(std::vector<double> sigmas, BandwidthMode mode = BandwidthMode::fixed) {
    KernelSpec s;
    s.family = KernelFamily::gaussian_mixture;
    s.weights.assign(sigmas.size(), 1.0 / static_cast<double>(sigmas.size()));
    s.bandwidths = std::move(sigmas);
    s.bandwidth_mode = mode;
    s.validate();
    return s;
  }

  /// Five bandwidths sigma * 2^k, k = -2..2, around a base sigma (median heuristic by default).
  static KernelSpec default_mixture(BandwidthMode mode = BandwidthMode::median_heuristic,
                                    double base = 1.0) {
    return mixture({base * 0.25, base * 0.5, base, base * 2.0, base * 4.0}, mode);
  }

  void validate() const {
    if (bandwidths.empty()) throw InputError("kernel needs at least one bandwidth");
    if (weights.size() != bandwidths.size()) {
      throw InputError("kernel weights and bandwidths differ in length");
    }
    if (family == KernelFamily::gaussian && bandwidths.size() != 1) {
      throw InputError("gaussian kernel takes exactly one bandwidth");
    }
    for (double s : bandwidths) {
      if (!(s > 0.0) || !std::isfinite(s)) throw InputError("kernel bandwidths must be finite and > 0");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("kernel weights must be finite and >= 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("kernel weights must sum to 1");
  }
};

inline std::string to_string(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "gaussian-mixture";
}

inline std::string to_string(BandwidthMode m) {
  return m == BandwidthMode::fixed ? "fixed" : "median-heuristic";
}

/// n x m matrix of kernel evaluations.
struct KernelMatrix {
  Matrix values;
  bool symmetric = false;
};

namespace detail {

inline double squared_distance(const Eigen::Ref<const RowVector>& x,
                               const Eigen::Ref<const RowVector>& y) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    acc += diff * diff;
  }
  return acc;
}

// Sum over mixture components; depends on x, y only through the squared distance,
// which is bitwise symmetric.
inline double kernel_from_sqdist(const KernelSpec& spec, double dist_sq) {
  double k = 0.0;
  for (std::size_t m = 0; m < spec.bandwidths.size(); ++m) {
    const double s = spec.bandwidths[m];
    k += spec.weights[m] * std::exp(-dist_sq / (2.0 * s * s));
  }
  return std::min(k, 1.0);
}

inline double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double median_heuristic_pooled(const Matrix& pooled) {
  const Eigen::Index n = pooled.rows();
  if (n < 2) throw InputError("median heuristic needs at least 2 pooled samples");
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = squared_distance(pooled.row(i), pooled.row(j));
      if (v > 0.0) d2.push_back(v);
    }
  }
  if (d2.empty()) throw DegenerateDataError("median heuristic: all points are identical");
  const double sigma = std::sqrt(median_of(d2) / 2.0);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DegenerateDataError("median heuristic produced a non-positive bandwidth");
  }
  return sigma;
}

}  // namespace detail

/// sigma = sqrt(median(pairwise squared distance) / 2) over the pooled rows of A and B.
/// Zero distances (coincident points) are skipped.
inline double median_heuristic(const FeatureMatrix& a, const FeatureMatrix& b) {
  require_same_dim(a, b, "median_heuristic");
  return detail::median_heuristic_pooled(vstack(a.data(), b.data()));
}

inline double median_heuristic(const FeatureMatrix& a) {
  return detail::median_heuristic_pooled(a.data());
}

/// Fixed-bandwidth copy of `spec`. Median-heuristic multipliers are scaled by
/// `base_sigma`; fixed specs are returned unchanged.
inline KernelSpec with_base_sigma(const KernelSpec& spec, double base_sigma) {
  if (spec.bandwidth_mode == BandwidthMode::fixed) return spec;
  KernelSpec out = spec;
  for (double& s : out.bandwidths) s *= base_sigma;
  out.bandwidth_mode = BandwidthMode::fixed;
  out.validate();
  return out;
}

/// Resolves a median-heuristic spec against the pooled sets. The chosen sigma
/// is a plain number afterwards: downstream gradients treat it as a constant.
inline KernelSpec resolve_bandwidths(const KernelSpec& spec, const FeatureMatrix& a,
                                     const FeatureMatrix& b) {
  if (spec.bandwidth_mode == BandwidthMode::fixed) return spec;
  return with_base_sigma(spec, median_heuristic(a, b));
}

inline double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const RowVector>& x,
                          const Eigen::Ref<const RowVector>& y) {
  if (x.size() != y.size()) throw InputError("eval_kernel: dimension mismatch");
  if (spec.bandwidth_mode != BandwidthMode::fixed) {
    throw InputError("eval_kernel: median-heuristic spec must be resolved against data first");
  }
  return detail::kernel_from_sqdist(spec, detail::squared_distance(x, y));
}

namespace detail {

// Rows [begin, end) of the Gram matrix. Each entry is computed by the same
// expression regardless of partitioning, so the result does not depend on
// the worker count.
inline void fill_rows(const KernelSpec& spec, const Matrix& a, const Matrix& b, bool symmetric,
                      Matrix& out, Eigen::Index begin, Eigen::Index end) {
  for (Eigen::Index i = begin; i < end; ++i) {
    const Eigen::Index j0 = symmetric ? i : 0;
    for (Eigen::Index j = j0; j < b.rows(); ++j) {
      out(i, j) = kernel_from_sqdist(spec, squared_distance(a.row(i), b.row(j)));
    }
  }
}

inline KernelMatrix gram_impl(const KernelSpec& spec, const Matrix& a, const Matrix& b,
                              bool symmetric, unsigned threads) {
  KernelMatrix km;
  km.symmetric = symmetric;
  km.values.resize(a.rows(), b.rows());
  const Eigen::Index n = a.rows();
  threads = std::max(1u, threads);
  if (threads == 1 || n < 64) {
    fill_rows(spec, a, b, symmetric, km.values, 0, n);
  } else {
    std::vector<std::jthread> pool;
    const Eigen::Index chunk = (n + threads - 1) / threads;
    for (Eigen::Index begin = 0; begin < n; begin += chunk) {
      const Eigen::Index end = std::min(n, begin + chunk);
      pool.emplace_back([&, begin, end] { fill_rows(spec, a, b, symmetric, km.values, begin, end); });
    }
  }
  if (symmetric) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) km.values(i, j) = km.values(j, i);
    }
  }
  return km;
}

}  // namespace detail

/// Gram matrix K[i][j] = k(A_i, B_j). Passing the same object twice yields a
/// symmetric matrix computed from the upper triangle and mirrored.
inline KernelMatrix gram(const KernelSpec& spec, const FeatureMatrix& a, const FeatureMatrix& b,
                         unsigned threads = 1) {
  require_same_dim(a, b, "gram");
  spec.validate();
  const bool symmetric = (&a == &b);
  if (a.n() == 0 || b.n() == 0) return KernelMatrix{Matrix(a.n(), b.n()), symmetric};
  const KernelSpec fixed =
      symmetric && spec.bandwidth_mode == BandwidthMode::median_heuristic
          ? with_base_sigma(spec, median_heuristic(a))
          : resolve_bandwidths(spec, a, b);
  return detail::gram_impl(fixed, a.data(), b.data(), symmetric, threads);
}

inline KernelMatrix gram(const KernelSpec& spec, const FeatureMatrix& a, unsigned threads = 1) {
  return gram(spec, a, a, threads);
}

}  // namespace rkmmd
