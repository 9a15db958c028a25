#include <gtest/gtest.h>

#include <cmath>

#include "losslens/hessian.hpp"
#include "losslens/landscape.hpp"
#include "test_support.hpp"

using namespace losslens;
using namespace testing_support;

namespace {

const NetworkObjective& train_objective() {
  static const NetworkObjective obj(default_arch(), default_split().train);
  return obj;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Adam with a decaying learning rate, well past the usual stopping point.
const WeightVector& strict_minimizer() {
  static const WeightVector w = [] {
    const auto arch = default_arch();
    WeightVector cur = random_theta(arch, 2);
    for (auto [lr, epochs] : {std::pair{0.01, 50000u}, {0.001, 20000u}, {0.0001, 20000u}}) {
      TrainConfig c;
      c.algorithm = Algorithm::adam;
      c.learning_rate = lr;
      c.epochs = epochs;
      cur = train(arch, cur, default_split().train, c).checkpoints.back().weights;
    }
    return cur;
  }();
  return w;
}

}  // namespace

TEST(Hvp, QuadraticIsExact) {
  QuadraticObjective q{3, {2.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 4.0}};
  const WeightVector theta = {0.3, -1.2, 2.0};
  const WeightVector v = {1.0, 2.0, -0.5};
  const auto hv = hvp(q, theta, v);
  for (std::size_t i = 0; i < 3; ++i) {
    double want = 0.0;
    for (std::size_t j = 0; j < 3; ++j) want += q.a[i * 3 + j] * v[j];
    EXPECT_NEAR(hv[i], want, 1e-8);
  }
}

TEST(Hvp, ZeroDirectionRejected) {
  const WeightVector theta(31, 0.1);
  EXPECT_THROW(hvp(train_objective(), theta, WeightVector(31, 0.0)), ArgumentError);
  EXPECT_THROW(hvp(train_objective(), theta, WeightVector(30, 1.0)), DimensionError);
}

TEST(Hvp, LinearInDirection) {
  const auto theta = random_theta(default_arch(), 3);
  Rng rng(5);
  const auto u = random_unit_direction(31, rng), v = random_unit_direction(31, rng);
  WeightVector w(31);
  for (std::size_t i = 0; i < 31; ++i) w[i] = 2.0 * u[i] - 0.5 * v[i];
  const auto hu = hvp(train_objective(), theta, u), hv = hvp(train_objective(), theta, v);
  const auto hw = hvp(train_objective(), theta, w);
  for (std::size_t i = 0; i < 31; ++i) EXPECT_NEAR(hw[i], 2.0 * hu[i] - 0.5 * hv[i], 1e-4);
}

TEST(Hvp, MatchesDenseOracle) {
  const auto theta = random_theta(default_arch(), 4);
  const auto dense = dense_hessian_oracle(train_objective(), theta);
  Rng rng(6);
  const auto v = random_unit_direction(31, rng);
  const auto hv = hvp(train_objective(), theta, v);
  for (std::size_t i = 0; i < 31; ++i) {
    double want = 0.0;
    for (std::size_t j = 0; j < 31; ++j) want += dense.matrix[i * 31 + j] * v[j];
    EXPECT_NEAR(hv[i], want, 1e-4);
  }
}

TEST(Eigen, DiagonalQuadratic) {
  const auto q = diagonal_quadratic({3.0, 1.0, -1.0});
  const auto r = top_eigenpairs(q, WeightVector{0.5, 0.5, 0.5}, {.k = 2});
  EXPECT_NEAR(r.eigenvalues[0], 3.0, 1e-6);
  EXPECT_NEAR(r.lambda_max, 3.0, 1e-6);
  EXPECT_NEAR(r.lambda_min, -1.0, 1e-6);
  EXPECT_NEAR(r.convexity_ratio, 1.0 / 3.0, 1e-6);
  EXPECT_NEAR(r.eigenvectors[0][0], 1.0, 1e-6);
  EXPECT_NEAR(r.eigenvectors[0][1], 0.0, 1e-5);
  EXPECT_NEAR(std::abs(r.min_eigenvector[2]), 1.0, 1e-6);
}

TEST(Eigen, RejectsBadK) {
  const auto theta = random_theta(default_arch(), 1);
  EXPECT_THROW(top_eigenpairs(train_objective(), theta, {.k = 0}), ArgumentError);
  EXPECT_THROW(top_eigenpairs(train_objective(), theta, {.k = 32}), ArgumentError);
}

TEST(Eigen, PowerIterationAgreesWithDense) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto theta = random_theta(default_arch(), seed);
    const auto dense = dense_hessian_oracle(train_objective(), theta);
    const auto r = top_eigenpairs(train_objective(), theta);
    const double top = std::abs(dense.eigenvalues.front()) >= std::abs(dense.eigenvalues.back())
                           ? dense.eigenvalues.front()
                           : dense.eigenvalues.back();
    EXPECT_LT(rel(r.eigenvalues[0], top), 1e-3) << seed;
    EXPECT_LT(rel(r.lambda_min, dense.eigenvalues.back()), 1e-3) << seed;
    EXPECT_LT(rel(r.lambda_max, dense.eigenvalues.front()), 1e-3) << seed;
  }
}

TEST(Dense, SymmetricWithConsistentTrace) {
  const auto theta = random_theta(default_arch(), 20);
  const auto dense = dense_hessian_oracle(train_objective(), theta);
  EXPECT_LT(dense.symmetry_defect, 1e-5 * dense.max_abs);
  double sum = 0.0;
  for (double l : dense.eigenvalues) sum += l;
  EXPECT_LT(std::abs(sum - dense.trace()), 1e-8 * std::max(1.0, std::abs(dense.trace())));
  for (std::size_t i = 1; i < dense.eigenvalues.size(); ++i)
    EXPECT_GE(dense.eigenvalues[i - 1], dense.eigenvalues[i]);
}

TEST(Dense, DimensionGuard) {
  QuadraticObjective q{201, std::vector<double>(201 * 201, 0.0)};
  EXPECT_THROW(dense_hessian_oracle(q, WeightVector(201, 0.0)), CapabilityError);
}

TEST(Jacobi, KnownMatrix) {
  // [[2,1],[1,2]] has eigenvalues 3 and 1 with vectors (1,1)/sqrt2 and (1,-1)/sqrt2.
  const auto e = jacobi_eigen({2.0, 1.0, 1.0, 2.0}, 2);
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  EXPECT_NEAR(e.vectors[0][0], std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(e.vectors[0][1], std::sqrt(0.5), 1e-14);
  EXPECT_GT(e.vectors[1][0], 0.0);
  EXPECT_NEAR(e.vectors[1][1], -std::sqrt(0.5), 1e-14);
  EXPECT_THROW(jacobi_eigen({1.0, 2.0, 3.0}, 2), DimensionError);
}

TEST(Eigen, PairsAtMinimizer) {
  const auto& m = adam_minimizer(1);
  const auto r = top_eigenpairs(train_objective(), m.weights);
  ASSERT_EQ(r.eigenvalues.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_LT(r.residuals[i], 1e-3 * std::abs(r.eigenvalues[0])) << i;
    EXPECT_NEAR(l2_norm(r.eigenvectors[i]), 1.0, 1e-9);
    const auto hv = hvp(train_objective(), m.weights, r.eigenvectors[i]);
    const double rayleigh = detail::dot(r.eigenvectors[i], hv);
    EXPECT_LT(std::abs(rayleigh - r.eigenvalues[i]), 1e-3 * std::abs(r.eigenvalues[0])) << i;
    for (std::size_t j = 0; j < i; ++j)
      EXPECT_LT(std::abs(detail::dot(r.eigenvectors[i], r.eigenvectors[j])), 1e-6) << i << "," << j;
    if (i > 0) EXPECT_GE(std::abs(r.eigenvalues[i - 1]), std::abs(r.eigenvalues[i]) * (1 - 1e-6));
  }
  EXPECT_GT(r.lambda_max, 0.0);
}

TEST(Eigen, StrictMinimizerIsNearlyConvex) {
  const auto& w = strict_minimizer();
  ASSERT_LT(l2_norm(train_objective().gradient(w)), 1e-5);
  const auto r = top_eigenpairs(train_objective(), w);
  EXPECT_GT(r.lambda_min, -1e-2 * r.lambda_max);
  EXPECT_LT(r.convexity_ratio, 1e-2);
}

TEST(Eigen, ConvexityRatioIsScaleInvariant) {
  const auto theta = random_theta(default_arch(), 7);
  const NetworkObjective scaled(default_arch(), default_split().train, 10.0);
  const auto a = top_eigenpairs(train_objective(), theta);
  const auto b = top_eigenpairs(scaled, theta);
  EXPECT_NEAR(a.convexity_ratio, b.convexity_ratio, 1e-6);
  EXPECT_LT(rel(b.lambda_max, 10.0 * a.lambda_max), 1e-4);
}
