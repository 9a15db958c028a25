#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numeric>

#include "losslens/network.hpp"
#include "test_support.hpp"

using namespace losslens;
using namespace testing_support;

TEST(ParamCount, DefaultArchitecture) {
  const NetworkArch arch({2, 4, 3, 1});
  EXPECT_EQ(param_count(arch), 31u);
  EXPECT_EQ(bias_count(arch), 8u);
}

TEST(ParamCount, SmallShapes) {
  EXPECT_EQ(param_count(NetworkArch({1, 1})), 2u);
  EXPECT_EQ(param_count(NetworkArch({2, 4, 4, 2})), 42u);
}

TEST(NetworkArch, RejectsInvalidShapes) {
  EXPECT_THROW(NetworkArch({3}), ArgumentError);
  EXPECT_THROW(NetworkArch({2, 0, 1}), ArgumentError);
}

TEST(Labels, RoundTripEveryIndex) {
  for (const auto& layers : {std::vector<std::size_t>{2, 4, 3, 1}, {1, 1}, {2, 4, 4, 2}, {3, 5, 1}}) {
    const NetworkArch arch(layers);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < param_count(arch); ++i) {
      const auto label = label_of(arch, i);
      EXPECT_EQ(index_of(arch, label), i);
      names.push_back(label.str());
    }
    std::sort(names.begin(), names.end());
    EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
  }
}

TEST(Labels, DocumentedLayout) {
  const NetworkArch arch({2, 4, 3, 1});
  EXPECT_EQ(label_of(arch, 0).str(), "w0-2");
  EXPECT_EQ(label_of(arch, 1).str(), "w1-2");
  EXPECT_EQ(label_of(arch, 7).str(), "w1-5");
  EXPECT_EQ(label_of(arch, 8).str(), "b2");
  EXPECT_EQ(label_of(arch, 11).str(), "b5");
  EXPECT_EQ(label_of(arch, 12).str(), "w2-6");
  EXPECT_EQ(label_of(arch, 15).str(), "w5-6");
  EXPECT_EQ(label_of(arch, 24).str(), "b6");
  EXPECT_EQ(label_of(arch, 27).str(), "w6-9");
  EXPECT_EQ(label_of(arch, 29).str(), "w8-9");
  EXPECT_EQ(label_of(arch, 30).str(), "b9");
  EXPECT_THROW(label_of(arch, 31), DimensionError);
  std::size_t biases = 0;
  for (std::size_t i = 0; i < 31; ++i) biases += label_of(arch, i).kind == ParamLabel::Kind::bias;
  EXPECT_EQ(biases, 8u);
}

TEST(Forward, AffineMap) {
  const NetworkArch arch({2, 1});
  const WeightVector w = {1.0, 2.0, 0.5};
  const double in[2] = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(forward(arch, w, in), 3.5);
}

TEST(Forward, ZeroWeightsGiveZero) {
  const auto arch = default_arch();
  const WeightVector w(31, 0.0);
  for (double x : {-3.0, 0.0, 2.5}) {
    const double in[2] = {x, 1.0 - x};
    EXPECT_EQ(forward(arch, w, in), 0.0);
  }
}

TEST(Forward, MatchesIndependentImplementation) {
  for (auto act : {Activation::sigmoid, Activation::tanh, Activation::relu}) {
    const auto arch = default_arch(act);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto w = random_theta(arch, seed, 2.0);
      const double in[2] = {1.0, 2.0};
      EXPECT_NEAR(forward(arch, w, in), reference_forward(arch, w, 1.0, 2.0), 1e-12);
    }
  }
}

TEST(Forward, DimensionMismatch) {
  const auto arch = default_arch();
  const WeightVector w(30, 0.0);
  const double in[2] = {0.0, 0.0};
  EXPECT_THROW(forward(arch, w, in), DimensionError);
}

TEST(Forward, SigmoidStableForHugeInputs) {
  const auto arch = default_arch();
  WeightVector w(31, 0.0);
  w[0] = 1e4;
  w[27] = 1.0;
  const double in[2] = {-1.0, 0.0};
  const double out = forward(arch, w, in);
  EXPECT_TRUE(std::isfinite(out));
}

TEST(Loss, ZeroNetworkIsMeanSquaredTarget) {
  const auto split = sin_split(3, 4096);
  double expected = 0.0;
  for (double t : split.train.targets) expected += t * t;
  expected /= static_cast<double>(split.train.size());
  const double l = loss(default_arch(), WeightVector(31, 0.0), split.train);
  EXPECT_NEAR(l, expected, 1e-12);
  // Integral of (sin x + sin y)^2 over [0,5]^2 divided by 25 is about 1.096.
  EXPECT_NEAR(l, 1.096, 0.05);
}

TEST(Loss, PerfectPredictorIsZero) {
  const auto arch = default_arch();
  const auto w = random_theta(arch, 11);
  auto data = sin_split(1, 64).train;
  for (std::size_t i = 0; i < data.size(); ++i) data.targets[i] = forward(arch, w, data.input(i));
  EXPECT_EQ(loss(arch, w, data), 0.0);
}

TEST(Loss, SingleSampleMseAndMae) {
  const NetworkArch mse({2, 1}), mae({2, 1}, Activation::sigmoid, LossKind::mae);
  Dataset d;
  d.inputs = {0.0, 0.0};
  d.targets = {0.0};
  const WeightVector w = {0.0, 0.0, 2.0};
  EXPECT_DOUBLE_EQ(loss(mse, w, d), 4.0);
  EXPECT_DOUBLE_EQ(loss(mae, w, d), 2.0);
}

TEST(Loss, EmptyDatasetIsArgumentError) {
  Dataset d;
  EXPECT_THROW(loss(default_arch(), WeightVector(31, 0.0), d), ArgumentError);
}

TEST(Loss, PureAndBitwiseRepeatable) {
  const auto arch = default_arch();
  const auto w = random_theta(arch, 2);
  const auto& data = default_split().train;
  const double a = loss(arch, w, data), b = loss(arch, w, data);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
  EXPECT_EQ(gradient(arch, w, data), gradient(arch, w, data));
}

TEST(Gradient, HandComputedLinearCase) {
  const NetworkArch arch({1, 1});
  Dataset d;
  d.dim = 1;
  d.inputs = {1.0};
  d.targets = {0.0};
  const auto g = gradient(arch, WeightVector{1.0, 0.0}, d);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
}

TEST(Gradient, MatchesFiniteDifferencesSigmoid) {
  const auto arch = default_arch();
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    EXPECT_LT(max_fd_relative_error(arch, random_theta(arch, seed), default_split().train), 1e-6) << seed;
}

TEST(Gradient, MatchesFiniteDifferencesTanh) {
  const auto arch = default_arch(Activation::tanh);
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    EXPECT_LT(max_fd_relative_error(arch, random_theta(arch, seed), default_split().train), 1e-6) << seed;
}

TEST(Gradient, SubsetRowsAverageOverSubset) {
  const auto arch = default_arch();
  const auto w = random_theta(arch, 4);
  const auto& data = default_split().train;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(gradient(arch, w, data, all), gradient(arch, w, data));

  const std::size_t rows[] = {3, 17};
  Dataset sub;
  for (auto r : rows) {
    sub.inputs.insert(sub.inputs.end(), data.input(r).begin(), data.input(r).end());
    sub.targets.push_back(data.targets[r]);
  }
  const auto a = gradient(arch, w, data, rows), b = gradient(arch, w, sub);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Gradient, ReluSubgradientAtZeroIsZero) {
  const NetworkArch arch({1, 1, 1}, Activation::relu);
  Dataset d;
  d.dim = 1;
  d.inputs = {0.0};
  d.targets = {1.0};
  // Hidden pre-activation is exactly 0.
  const auto g = gradient(arch, WeightVector{1.0, 0.0, 1.0, 0.0}, d);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Gradient, MaeSubgradientAtZeroResidualIsZero) {
  const NetworkArch arch({1, 1}, Activation::sigmoid, LossKind::mae);
  Dataset d;
  d.dim = 1;
  d.inputs = {1.0};
  d.targets = {1.0};
  const auto g = gradient(arch, WeightVector{1.0, 0.0}, d);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Gradient, SmallAtConvergedMinimizer) {
  const auto& m = adam_minimizer(1);
  EXPECT_LT(l2_norm(gradient(default_arch(), m.weights, default_split().train)), 1e-3);
}

// Swapping hidden neurons 3 and 4 (rows of layer 0, columns of layer 1)
// leaves the function unchanged.
TEST(Invariance, HiddenNeuronPermutation) {
  const auto arch = default_arch();
  const auto w = random_theta(arch, 9, 2.0);
  auto p = w;
  const std::size_t a = 1, b = 2;  // local indices of neurons 3 and 4
  for (std::size_t c = 0; c < 2; ++c) std::swap(p[a * 2 + c], p[b * 2 + c]);
  std::swap(p[8 + a], p[8 + b]);
  for (std::size_t r = 0; r < 3; ++r) std::swap(p[12 + r * 4 + a], p[12 + r * 4 + b]);
  EXPECT_NE(p, w);
  const auto& data = default_split().train;
  EXPECT_NEAR(loss(arch, p, data), loss(arch, w, data), 1e-14);
}
