#include "rkmmd/kernel.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

namespace rkmmd {
namespace {

RowVector rv(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r[i++] = x;
  return r;
}

FeatureMatrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return FeatureMatrix(m);
}

TEST(EvalKernel, SelfSimilarityIsOne) {
  EXPECT_EQ(eval_kernel(KernelSpec::gaussian(1.0), rv({3.7, -2.0}), rv({3.7, -2.0})), 1.0);
}

TEST(EvalKernel, UnitBandwidthAtDistanceSqrtTwo) {
  // exp(-2 / (2 * 1^2)), evaluated independently.
  EXPECT_NEAR(eval_kernel(KernelSpec::gaussian(1.0), rv({0, 0}), rv({1, 1})), 0.36787944117144233, 1e-15);
}

TEST(EvalKernel, TwoComponentMixture) {
  // 0.5 exp(-2) + 0.5 exp(-0.5)
  const auto spec = KernelSpec::mixture({1.0, 2.0});
  EXPECT_NEAR(eval_kernel(spec, rv({0}), rv({2})), 0.37093297147462306, 1e-15);
}

TEST(EvalKernel, DimensionMismatchThrows) {
  EXPECT_THROW(eval_kernel(KernelSpec::gaussian(1.0), rv({0, 1}), rv({0})), InputError);
}

TEST(EvalKernel, UnresolvedMedianSpecThrows) {
  EXPECT_THROW(eval_kernel(KernelSpec::gaussian_median(), rv({0}), rv({1})), InputError);
}

TEST(KernelSpec, Validation) {
  EXPECT_THROW(KernelSpec::gaussian(0.0), InputError);
  EXPECT_THROW(KernelSpec::gaussian(-1.0), InputError);
  KernelSpec s;
  s.family = KernelFamily::gaussian;
  s.bandwidths = {1.0, 2.0};
  s.weights = {0.5, 0.5};
  EXPECT_THROW(s.validate(), InputError);
  s.family = KernelFamily::gaussian_mixture;
  EXPECT_NO_THROW(s.validate());
  s.weights = {0.5, 0.6};
  EXPECT_THROW(s.validate(), InputError);
  s.weights = {1.0};
  EXPECT_THROW(s.validate(), InputError);
}

TEST(EvalKernel, SymmetricAndBounded) {
  std::mt19937_64 rng(11);
  const auto spec = KernelSpec::mixture({0.3, 1.0, 2.5});
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix p = oracle::random_matrix(rng, 2, 4, 1.5);
    const double kxy = eval_kernel(spec, p.row(0), p.row(1));
    EXPECT_EQ(kxy, eval_kernel(spec, p.row(1), p.row(0)));
    EXPECT_GT(kxy, 0.0);
    EXPECT_LT(kxy, 1.0);
  }
}

TEST(Gram, SingleSample) {
  const FeatureMatrix a = column({4.2});
  const KernelMatrix k = gram(KernelSpec::gaussian(1.0), a);
  ASSERT_EQ(k.values.rows(), 1);
  EXPECT_EQ(k.values(0, 0), 1.0);
  EXPECT_TRUE(k.symmetric);
}

TEST(Gram, TwoPointsMatchesEntrywiseOracle) {
  const FeatureMatrix a = column({0.0, 2.0});
  const KernelMatrix k = gram(KernelSpec::gaussian(1.0), a);
  EXPECT_EQ(k.values(0, 0), 1.0);
  EXPECT_EQ(k.values(1, 1), 1.0);
  EXPECT_NEAR(k.values(0, 1), 0.1353352832366127, 1e-15);
  EXPECT_EQ(k.values(0, 1), k.values(1, 0));
}

TEST(Gram, CrossMatrixIsNotFlaggedSymmetric) {
  const FeatureMatrix a = column({0.0, 2.0});
  const FeatureMatrix b = column({1.0});
  const KernelMatrix k = gram(KernelSpec::gaussian(1.0), a, b);
  EXPECT_FALSE(k.symmetric);
  EXPECT_EQ(k.values.rows(), 2);
  EXPECT_EQ(k.values.cols(), 1);
  EXPECT_NEAR(k.values(1, 0), oracle::gauss_mix(rv({2.0}), rv({1.0}), {1.0}, {1.0}), 1e-15);
}

TEST(Gram, EmptyInputsGiveEmptyShapes) {
  const FeatureMatrix a = FeatureMatrix::empty(3);
  const FeatureMatrix b(Matrix::Ones(4, 3));
  EXPECT_EQ(gram(KernelSpec::gaussian(1.0), a, b).values.rows(), 0);
  EXPECT_EQ(gram(KernelSpec::gaussian(1.0), a, b).values.cols(), 4);
  EXPECT_EQ(gram(KernelSpec::gaussian(1.0), b, a).values.rows(), 4);
  EXPECT_EQ(gram(KernelSpec::gaussian(1.0), b, a).values.cols(), 0);
}

TEST(Gram, DimensionMismatchThrows) {
  EXPECT_THROW(gram(KernelSpec::gaussian(1.0), FeatureMatrix(Matrix::Zero(2, 2)), FeatureMatrix(Matrix::Zero(2, 3))),
               InputError);
}

TEST(Gram, PositiveSemidefiniteUnderMedianHeuristic) {
  std::mt19937_64 rng(5);
  const FeatureMatrix a(oracle::random_matrix(rng, 50, 5));
  const KernelMatrix k = gram(KernelSpec::gaussian_median(), a);
  ASSERT_TRUE(k.symmetric);
  EXPECT_TRUE(k.values == k.values.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(k.values, Eigen::EigenvaluesOnly);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8);
}

TEST(Gram, ScaleCovariance) {
  std::mt19937_64 rng(9);
  const Matrix x = oracle::random_matrix(rng, 20, 3);
  const FeatureMatrix a(x);
  const FeatureMatrix a2(2.0 * x);
  const KernelMatrix k1 = gram(KernelSpec::mixture({0.5, 1.5}), a);
  const KernelMatrix k2 = gram(KernelSpec::mixture({1.0, 3.0}), a2);
  EXPECT_LE((k1.values - k2.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gram, IndependentOfWorkerCount) {
  std::mt19937_64 rng(21);
  const FeatureMatrix a(oracle::random_matrix(rng, 150, 4));
  const FeatureMatrix b(oracle::random_matrix(rng, 90, 4));
  const auto spec = KernelSpec::default_mixture();
  const KernelMatrix k1 = gram(spec, a, b, 1);
  const KernelMatrix k4 = gram(spec, a, b, 4);
  EXPECT_TRUE(k1.values == k4.values);
  EXPECT_TRUE(gram(spec, a, 1).values == gram(spec, a, 3).values);
}

TEST(MedianHeuristic, ThreePoints) {
  // squared distances {1, 9, 4} -> median 4 -> sigma = sqrt(2)
  EXPECT_NEAR(median_heuristic(column({0.0, 1.0}), column({3.0})), 1.4142135623730951, 1e-15);
}

TEST(MedianHeuristic, EvenCountAveragesMiddlePair) {
  // points {0, 1, 3, 6}: squared distances {1, 9, 36, 4, 25, 9}; median (9 + 9) / 2
  EXPECT_NEAR(median_heuristic(column({0.0, 1.0, 3.0, 6.0})), std::sqrt(9.0 / 2.0), 1e-15);
  // {0, 1, 4}: {1, 16, 9} odd; {0, 1, 4, 5}: {1, 16, 25, 9, 16, 1} -> (9 + 16) / 2
  EXPECT_NEAR(median_heuristic(column({0.0, 1.0, 4.0, 5.0})), std::sqrt(12.5 / 2.0), 1e-15);
}

TEST(MedianHeuristic, TwoPoints) {
  EXPECT_NEAR(median_heuristic(column({0.0}), column({2.0})), 1.4142135623730951, 1e-15);
}

TEST(MedianHeuristic, IdenticalPointsAreDegenerate) {
  EXPECT_THROW(median_heuristic(column({1.5, 1.5}), column({1.5})), DegenerateDataError);
}

TEST(MedianHeuristic, TooFewPoints) { EXPECT_THROW(median_heuristic(column({1.0})), InputError); }

TEST(MedianHeuristic, ExponentIsMinusOneAtMedianDistance) {
  const FeatureMatrix a = column({0.0, 1.0, 3.0});
  const KernelSpec resolved = resolve_bandwidths(KernelSpec::gaussian_median(), a, a);
  // median squared distance is 4
  EXPECT_NEAR(eval_kernel(resolved, rv({0.0}), rv({2.0})), std::exp(-1.0), 1e-15);
}

}  // namespace
}  // namespace rkmmd
