#pragma once

#include "rkmmd/core.hpp"
#include "rkmmd/kernel.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

// =============================================================================
// Maximum mean discrepancy estimators, gradients and permutation test
// =============================================================================

namespace rkmmd {

enum class Estimator { biased, unbiased };

inline std::string to_string(Estimator e) { return e == Estimator::biased ? "biased" : "unbiased"; }

/// Squared RKHS distance between the empirical mean embeddings of two samples.
struct MmdEstimate {
  double value = 0.0;
  /// Value before the biased estimator's rounding clamp; equals `value` otherwise.
  double raw_value = 0.0;
  Estimator estimator = Estimator::biased;
  /// Kernel actually used, with median-heuristic bandwidths resolved.
  KernelSpec kernel;
  Eigen::Index n_source = 0;
  Eigen::Index n_target = 0;
};

struct MmdGradient {
  Matrix source;  // n_S x d
  Matrix target;  // n_T x d
  double value = 0.0;  // unclamped biased estimate
  KernelSpec kernel;
};

struct PermutationTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_permutations = 0;
  std::vector<std::pair<double, double>> null_distribution_quantiles;
  KernelSpec kernel;
};

namespace detail {

inline void check_mmd_inputs(const FeatureMatrix& s, const FeatureMatrix& t, Eigen::Index min_n,
                             std::string_view what) {
  require_same_dim(s, t, what);
  if (s.n() < min_n || t.n() < min_n) {
    throw InputError(std::string(what) + ": each sample needs at least " + std::to_string(min_n) +
                     " rows");
  }
}

inline double block_sum(const KernelSpec& spec, const Matrix& a, const Matrix& b, bool skip_diagonal) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      acc += kernel_from_sqdist(spec, squared_distance(a.row(i), b.row(j)));
    }
  }
  return acc;
}

// Within-sample sum over all ordered pairs, using k(x_i, x_j) = k(x_j, x_i).
inline double self_sum(const KernelSpec& spec, const Matrix& a, bool include_diagonal) {
  double off = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
      off += kernel_from_sqdist(spec, squared_distance(a.row(i), a.row(j)));
    }
  }
  double diag = 0.0;
  if (include_diagonal) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) diag += kernel_from_sqdist(spec, 0.0);
  }
  return 2.0 * off + diag;
}

// k and the derivative coefficient c with dk(x,y)/dx = c * (y - x).
inline std::pair<double, double> kernel_and_slope(const KernelSpec& spec, double dist_sq) {
  double k = 0.0;
  double c = 0.0;
  for (std::size_t m = 0; m < spec.bandwidths.size(); ++m) {
    const double s2 = spec.bandwidths[m] * spec.bandwidths[m];
    const double e = spec.weights[m] * std::exp(-dist_sq / (2.0 * s2));
    k += e;
    c += e / s2;
  }
  return {k, c};
}

}  // namespace detail

/// Biased (V-statistic) estimate with diagonal terms:
///   1/nS^2 sum k(x_i,x_j) + 1/nT^2 sum k(u_i,u_j) - 2/(nS nT) sum k(x_i,u_j).
/// Rounding residue in [-1e-12, 0) is clamped to 0 in `value`.
inline MmdEstimate mmd_biased(const KernelSpec& spec, const FeatureMatrix& s, const FeatureMatrix& t) {
  detail::check_mmd_inputs(s, t, 1, "mmd_biased");
  spec.validate();
  const KernelSpec k = resolve_bandwidths(spec, s, t);
  const double ns = static_cast<double>(s.n());
  const double nt = static_cast<double>(t.n());
  const double ss = detail::self_sum(k, s.data(), true);
  const double tt = detail::self_sum(k, t.data(), true);
  const double st = detail::block_sum(k, s.data(), t.data(), false);
  const double raw = ss / (ns * ns) + tt / (nt * nt) - 2.0 * st / (ns * nt);
  MmdEstimate est{raw, raw, Estimator::biased, k, s.n(), t.n()};
  if (raw < 0.0 && raw >= -1e-12) est.value = 0.0;
  return est;
}

/// Unbiased U-statistic: within-sample sums exclude i == j and divide by n(n-1).
/// Can be negative.
inline MmdEstimate mmd_unbiased(const KernelSpec& spec, const FeatureMatrix& s,
                                const FeatureMatrix& t) {
  detail::check_mmd_inputs(s, t, 2, "mmd_unbiased");
  spec.validate();
  const KernelSpec k = resolve_bandwidths(spec, s, t);
  const double ns = static_cast<double>(s.n());
  const double nt = static_cast<double>(t.n());
  const double ss = detail::self_sum(k, s.data(), false);
  const double tt = detail::self_sum(k, t.data(), false);
  const double st = detail::block_sum(k, s.data(), t.data(), false);
  const double v = ss / (ns * (ns - 1.0)) + tt / (nt * (nt - 1.0)) - 2.0 * st / (ns * nt);
  return MmdEstimate{v, v, Estimator::unbiased, k, s.n(), t.n()};
}

inline MmdEstimate mmd(Estimator e, const KernelSpec& spec, const FeatureMatrix& s,
                       const FeatureMatrix& t) {
  return e == Estimator::biased ? mmd_biased(spec, s, t) : mmd_unbiased(spec, s, t);
}

/// Analytic gradient of the (unclamped) biased estimate with respect to every
/// entry of S and T. A median-heuristic bandwidth is resolved once and held
/// constant.
inline MmdGradient mmd_gradient(const KernelSpec& spec, const FeatureMatrix& s,
                                const FeatureMatrix& t) {
  detail::check_mmd_inputs(s, t, 1, "mmd_gradient");
  spec.validate();
  const KernelSpec k = resolve_bandwidths(spec, s, t);
  const Matrix& x = s.data();
  const Matrix& u = t.data();
  const double ns = static_cast<double>(s.n());
  const double nt = static_cast<double>(t.n());

  MmdGradient g{Matrix::Zero(x.rows(), x.cols()), Matrix::Zero(u.rows(), u.cols()), 0.0, k};
  double ss = 0.0, tt = 0.0, st = 0.0;
  const double diag = detail::kernel_from_sqdist(k, 0.0);

  // d/dx_a of 1/nS^2 sum_ij k(x_i,x_j) = 2/nS^2 sum_j c_aj (x_j - x_a)
  const double w_ss = 2.0 / (ns * ns);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    ss += diag;
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const auto [kv, c] = detail::kernel_and_slope(k, detail::squared_distance(x.row(i), x.row(j)));
      ss += 2.0 * kv;
      const RowVector diff = x.row(j) - x.row(i);
      g.source.row(i) += (w_ss * c) * diff;
      g.source.row(j) -= (w_ss * c) * diff;
    }
  }
  const double w_tt = 2.0 / (nt * nt);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    tt += diag;
    for (Eigen::Index j = i + 1; j < u.rows(); ++j) {
      const auto [kv, c] = detail::kernel_and_slope(k, detail::squared_distance(u.row(i), u.row(j)));
      tt += 2.0 * kv;
      const RowVector diff = u.row(j) - u.row(i);
      g.target.row(i) += (w_tt * c) * diff;
      g.target.row(j) -= (w_tt * c) * diff;
    }
  }
  // d/dx_a of -2/(nS nT) sum_ij k(x_i,u_j) = -2/(nS nT) sum_j c_aj (u_j - x_a)
  const double w_st = 2.0 / (ns * nt);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.rows(); ++j) {
      const auto [kv, c] = detail::kernel_and_slope(k, detail::squared_distance(x.row(i), u.row(j)));
      st += kv;
      const RowVector diff = u.row(j) - x.row(i);
      g.source.row(i) -= (w_st * c) * diff;
      g.target.row(j) += (w_st * c) * diff;
    }
  }
  g.value = ss / (ns * ns) + tt / (nt * nt) - 2.0 * st / (ns * nt);
  return g;
}

namespace detail {

// Biased statistic for a split of the pooled Gram matrix: the first n_s entries
// of `order` form the source sample.
inline double split_statistic(const Matrix& k, const std::vector<Eigen::Index>& order,
                              Eigen::Index n_s) {
  const Eigen::Index n = static_cast<Eigen::Index>(order.size());
  const Eigen::Index n_t = n - n_s;
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::Index i = order[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < n; ++b) {
      const double v = k(i, order[static_cast<std::size_t>(b)]);
      if (a < n_s && b < n_s) {
        ss += v;
      } else if (a >= n_s && b >= n_s) {
        tt += v;
      } else if (a < n_s) {
        st += v;
      }
    }
  }
  const double ds = static_cast<double>(n_s);
  const double dt = static_cast<double>(n_t);
  return ss / (ds * ds) + tt / (dt * dt) - 2.0 * st / (ds * dt);
}

// Linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Two-sample permutation test on the biased MMD^2.
///
/// Permutation r shuffles the pooled sample with its own substream of `seed`,
/// so the result is identical for any `threads`.
/// p = (1 + #{permuted >= observed}) / (1 + n_permutations).
inline PermutationTestResult permutation_test(const KernelSpec& spec, const FeatureMatrix& s,
                                              const FeatureMatrix& t, std::size_t n_permutations,
                                              std::uint64_t seed, unsigned threads = 1) {
  detail::check_mmd_inputs(s, t, 2, "permutation_test");
  if (n_permutations < 99) throw InputError("permutation_test: need at least 99 permutations");
  spec.validate();

  const FeatureMatrix pooled(vstack(s.data(), t.data()));
  const KernelSpec k = spec.bandwidth_mode == BandwidthMode::fixed
                           ? spec
                           : with_base_sigma(spec, median_heuristic(pooled));
  const Matrix gram_pooled = detail::gram_impl(k, pooled.data(), pooled.data(), true, threads).values;
  const Eigen::Index n = pooled.n();

  std::vector<Eigen::Index> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), Eigen::Index{0});
  const double observed = detail::split_statistic(gram_pooled, identity, s.n());

  std::vector<double> null(n_permutations);
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<Eigen::Index> order(identity.size());
    for (std::size_t r = begin; r < end; ++r) {
      order = identity;
      Rng rng = make_stream(seed, r + 1);
      std::shuffle(order.begin(), order.end(), rng);
      null[r] = detail::split_statistic(gram_pooled, order, s.n());
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    run(0, n_permutations);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n_permutations + threads - 1) / threads;
    for (std::size_t b = 0; b < n_permutations; b += chunk) {
      pool.emplace_back(run, b, std::min(n_permutations, b + chunk));
    }
  }

  const auto exceed = static_cast<double>(
      std::count_if(null.begin(), null.end(), [&](double v) { return v >= observed; }));
  PermutationTestResult res;
  res.statistic = observed;
  res.n_permutations = n_permutations;
  res.p_value = (1.0 + exceed) / (1.0 + static_cast<double>(n_permutations));
  res.kernel = k;
  std::sort(null.begin(), null.end());
  for (double q : {0.5, 0.9, 0.95, 0.99}) {
    res.null_distribution_quantiles.emplace_back(q, detail::quantile_sorted(null, q));
  }
  return res;
}

}  // namespace rkmmd
