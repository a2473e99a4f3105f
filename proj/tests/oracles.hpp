#pragma once

// Test-only reference implementations. Nothing here calls into the code
// paths under test: kernels, estimators and derivatives are recomputed from
// their textbook definitions.

#include "rkmmd/core.hpp"
#include "rkmmd/net.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace rkmmd::oracle {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0,
                            double shift = 0.0) {
  std::normal_distribution<double> n(shift, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

/// sum_m w_m exp(-||x-y||^2 / (2 s_m^2)), straight from the definition.
inline double gauss_mix(const RowVector& x, const RowVector& y, const std::vector<double>& sigmas,
                        const std::vector<double>& weights) {
  const double d2 = (x - y).squaredNorm();
  double k = 0.0;
  for (std::size_t m = 0; m < sigmas.size(); ++m) k += weights[m] * std::exp(-d2 / (2.0 * sigmas[m] * sigmas[m]));
  return k;
}

/// Naive triple loop over all (i, j) pairs of the three blocks.
inline double mmd_naive(const Matrix& s, const Matrix& t, const std::vector<double>& sigmas,
                        const std::vector<double>& weights, bool unbiased) {
  const double ns = static_cast<double>(s.rows());
  const double nt = static_cast<double>(t.rows());
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
      if (unbiased && i == j) continue;
      ss += gauss_mix(s.row(i), s.row(j), sigmas, weights);
    }
  }
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
      if (unbiased && i == j) continue;
      tt += gauss_mix(t.row(i), t.row(j), sigmas, weights);
    }
  }
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.rows(); ++j) st += gauss_mix(s.row(i), t.row(j), sigmas, weights);
  }
  const double as = unbiased ? ns * (ns - 1.0) : ns * ns;
  const double at = unbiased ? nt * (nt - 1.0) : nt * nt;
  return ss / as + tt / at - 2.0 * st / (ns * nt);
}

/// Central differences of f with respect to every entry of x.
inline Matrix central_diff(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = probe(i, j);
      probe(i, j) = keep + h;
      const double up = f(probe);
      probe(i, j) = keep - h;
      const double down = f(probe);
      probe(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// max_ij |a - b| / max(|a|, |b|, floor). The floor keeps entries that are
/// zero analytically from dividing rounding noise by ~0.
inline double max_rel_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j);
      const double n = numeric(i, j);
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
  }
  return worst;
}

/// Sample covariance, divisor n - 1, by explicit loops.
inline Matrix covariance_naive(const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(j)] += x(i, j);
    mean[static_cast<std::size_t>(j)] /= static_cast<double>(n);
  }
  Matrix c = Matrix::Zero(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
      }
      c(a, b) = acc / static_cast<double>(n - 1);
    }
  }
  return c;
}

inline double coral_naive(const Matrix& s, const Matrix& t) {
  const double d = static_cast<double>(s.cols());
  return (covariance_naive(s) - covariance_naive(t)).squaredNorm() / (4.0 * d * d);
}

// Independent forward pass: explicit loops, log-sum-exp cross-entropy.
struct NaiveOut {
  std::vector<Matrix> post;
};

inline NaiveOut naive_forward(const MlpModel& m, const Matrix& x) {
  NaiveOut out;
  Matrix in = x;
  for (const auto& layer : m.layers) {
    Matrix z(in.rows(), layer.weight.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        double acc = layer.bias[j];
        for (Eigen::Index k = 0; k < in.cols(); ++k) acc += in(i, k) * layer.weight(k, j);
        z(i, j) = layer.activation == Activation::relu ? std::max(acc, 0.0) : acc;
      }
    }
    out.post.push_back(z);
    in = z;
  }
  return out;
}

inline double naive_ce(const Matrix& logits, const std::vector<int>& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(i, c) - m);
    acc += (m + std::log(s)) - logits(i, y[static_cast<std::size_t>(i)]);
  }
  return acc / static_cast<double>(logits.rows());
}

inline std::vector<int> random_labels(std::mt19937_64& rng, int n, int c) {
  std::uniform_int_distribution<int> u(0, c - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = u(rng);
  return y;
}

inline MlpModel random_model(std::mt19937_64& rng, std::vector<Eigen::Index> dims) {
  // Larger output weights and nonzero biases than a fresh model, so every
  // parameter matters.
  MlpModel m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weight = random_matrix(rng, dims[l], dims[l + 1], 0.7);
    layer.bias = random_matrix(rng, dims[l + 1], 1, 0.3).col(0);
    layer.activation = l + 2 == dims.size() ? Activation::identity : Activation::relu;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

// Joint objective CE(source) + lambda * MMD(tap(source), tap(target)) recomputed
// from naive pieces, differentiated numerically in every parameter.
inline double joint_loss_naive(const MlpModel& m, const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                        std::size_t tap, double lambda, double sigma) {
  const NaiveOut fs = naive_forward(m, xs);
  const NaiveOut ft = naive_forward(m, xt);
  return naive_ce(fs.post.back(), ys) + lambda * mmd_naive(fs.post[tap], ft.post[tap], {sigma}, {1.0}, false);
}

}  // namespace rkmmd::oracle
