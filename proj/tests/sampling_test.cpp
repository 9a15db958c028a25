#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "losslens/sampling.hpp"
#include "test_support.hpp"

using namespace losslens;
using namespace testing_support;

// Unscrambled Sobol points from scipy.stats.qmc.Sobol(d, scramble=False),
// which uses the same Joe-Kuo direction numbers.
static const double kScipyD2[17][2] = {
    {0, 0},         {.5, .5},       {.75, .25},     {.25, .75},    {.375, .375},    {.875, .875},
    {.625, .125},   {.125, .625},   {.1875, .3125}, {.6875, .8125}, {.9375, .0625},  {.4375, .5625},
    {.3125, .1875}, {.8125, .6875}, {.5625, .4375}, {.0625, .9375}, {.09375, .46875},
};

static const double kScipyD5[8][5] = {
    {0, 0, 0, 0, 0},
    {.5, .5, .5, .5, .5},
    {.75, .25, .25, .25, .75},
    {.25, .75, .75, .75, .25},
    {.375, .375, .625, .875, .375},
    {.875, .875, .125, .375, .875},
    {.625, .125, .875, .625, .625},
    {.125, .625, .375, .125, .125},
};

TEST(Sobol, TwoDimensionalPrefixMatchesReference) {
  SobolSequence s(2);
  for (const auto& ref : kScipyD2) {
    const auto p = s.next();
    EXPECT_EQ(p[0], ref[0]);
    EXPECT_EQ(p[1], ref[1]);
  }
}

TEST(Sobol, FiveDimensionalPrefixMatchesReference) {
  SobolSequence s(5);
  for (const auto& ref : kScipyD5) {
    const auto p = s.next();
    for (int d = 0; d < 5; ++d) EXPECT_EQ(p[d], ref[d]) << d;
  }
}

TEST(Sobol, ElementaryIntervalsHoldExactly) {
  SobolSequence s(2);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 256; ++i) pts.push_back(s.next());
  // Every dyadic box of volume 1/16 holds 256/16 points.
  for (int a = 0; a <= 4; ++a) {
    const int b = 4 - a, nx = 1 << a, ny = 1 << b;
    std::vector<int> counts(nx * ny, 0);
    for (const auto& p : pts) counts[static_cast<int>(p[0] * nx) * ny + static_cast<int>(p[1] * ny)]++;
    for (int c : counts) EXPECT_EQ(c, 16) << "box shape " << a << "," << b;
  }
}

TEST(Sobol, HighDimensionsAreDistinctAndInUnitCube) {
  SobolSequence s(SobolSequence::max_dimension());
  EXPECT_EQ(SobolSequence::max_dimension(), 1111u);
  s.skip(1);
  std::set<std::vector<double>> seen;
  for (int i = 0; i < 64; ++i) {
    const auto p = s.next();
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
    EXPECT_TRUE(seen.insert(p).second);
  }
  // Each coordinate of the first 2^k points is a permutation of j / 2^k.
  SobolSequence t(SobolSequence::max_dimension());
  std::vector<std::vector<double>> block;
  for (int i = 0; i < 32; ++i) block.push_back(t.next());
  for (std::size_t d = 0; d < SobolSequence::max_dimension(); d += 37) {
    std::vector<double> col;
    for (const auto& p : block) col.push_back(p[d] * 32);
    std::sort(col.begin(), col.end());
    for (int j = 0; j < 32; ++j) EXPECT_EQ(col[j], j) << d;
  }
}

TEST(Sobol, TooManyDimensionsIsCapabilityError) {
  try {
    SobolSequence s(1112);
    FAIL();
  } catch (const CapabilityError& e) {
    EXPECT_NE(std::string(e.what()).find("1111"), std::string::npos);
  }
  SamplingConfig cfg;
  EXPECT_THROW(sample_around(WeightVector(2000, 0.0), cfg), CapabilityError);
}

static bool inside(const WeightVector& w, const WeightVector& c, double r) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!(w[i] >= c[i] - r && w[i] <= c[i] + r)) return false;
  return true;
}

TEST(Sampling, ContainmentForEveryAlgorithm) {
  const auto center = random_theta(default_arch(), 3, 2.0);
  for (auto alg : {SamplingAlgorithm::uniform, SamplingAlgorithm::sobol, SamplingAlgorithm::mixed}) {
    SamplingConfig cfg{alg, 301, 0.7, 5, 3};
    const auto pts = sample_around(center, cfg);
    ASSERT_EQ(pts.size(), 301u);
    for (const auto& p : pts) EXPECT_TRUE(inside(p, center, 0.7)) << to_string(alg);
  }
}

TEST(Sampling, DegenerateRangeReturnsCenter) {
  const auto center = random_theta(default_arch(), 4);
  SamplingConfig cfg{SamplingAlgorithm::uniform, 1, 1e-300, 0, 3};
  const auto pts = sample_around(center, cfg);
  ASSERT_EQ(pts.size(), 1u);
  for (std::size_t i = 0; i < center.size(); ++i) EXPECT_NEAR(pts[0][i], center[i], 1e-15);
}

TEST(Sampling, SobolAroundZeroVector) {
  SamplingConfig cfg{SamplingAlgorithm::sobol, 500, 5.0, 0, 3};
  const auto pts = sample_around(WeightVector(31, 0.0), cfg);
  ASSERT_EQ(pts.size(), 500u);
  std::set<WeightVector> unique(pts.begin(), pts.end());
  EXPECT_EQ(unique.size(), 500u);
  for (const auto& p : pts)
    for (double x : p) {
      EXPECT_GE(x, -5.0);
      EXPECT_LE(x, 5.0);
    }
  // First point is the cube centre (Sobol index 1).
  for (double x : pts[0]) EXPECT_EQ(x, 0.0);
}

TEST(Sampling, SobolIsSeedIndependent) {
  const WeightVector c(6, 1.0);
  SamplingConfig a{SamplingAlgorithm::sobol, 40, 1.0, 1, 3}, b{SamplingAlgorithm::sobol, 40, 1.0, 99, 3};
  EXPECT_EQ(sample_around(c, a), sample_around(c, b));
}

TEST(Sampling, UniformSeededAndUnbiased) {
  const WeightVector c = {1.0, -2.0, 0.5, 3.0};
  SamplingConfig cfg{SamplingAlgorithm::uniform, 20000, 2.0, 7, 3};
  const auto a = sample_around(c, cfg);
  EXPECT_EQ(a, sample_around(c, cfg));
  cfg.seed = 8;
  EXPECT_NE(a, sample_around(c, cfg));
  const double sigma = 2.0 / std::sqrt(3.0 * 20000.0);
  for (std::size_t d = 0; d < c.size(); ++d) {
    double mean = 0.0;
    for (const auto& p : a) mean += p[d];
    mean /= static_cast<double>(a.size());
    EXPECT_LT(std::abs(mean - c[d]), 3.0 * sigma) << d;
  }
}

TEST(Sampling, MixedLevelsNest) {
  const WeightVector c(31, 0.0);
  SamplingConfig cfg{SamplingAlgorithm::mixed, 500, 4.0, 0, 3};
  const auto pts = sample_around(c, cfg);
  ASSERT_EQ(pts.size(), 500u);
  // 168 at range 4, then 166 at range 2 and 166 at range 1.
  for (std::size_t i = 168; i < 334; ++i) EXPECT_TRUE(inside(pts[i], c, 2.0));
  for (std::size_t i = 334; i < 500; ++i) EXPECT_TRUE(inside(pts[i], c, 1.0));
  std::size_t in_half = 0;
  for (const auto& p : projection_2d(pts))
    in_half += std::abs(p.first) <= 2.0 && std::abs(p.second) <= 2.0;
  EXPECT_GE(in_half, 500u / 3);
  std::set<WeightVector> unique(pts.begin(), pts.end());
  EXPECT_EQ(unique.size(), 500u);
}

TEST(Sampling, InvalidConfig) {
  const WeightVector c(3, 0.0);
  EXPECT_THROW(sample_around(c, SamplingConfig{SamplingAlgorithm::sobol, 0, 1.0, 0, 3}), ArgumentError);
  EXPECT_THROW(sample_around(c, SamplingConfig{SamplingAlgorithm::sobol, 5, 0.0, 0, 3}), ArgumentError);
  EXPECT_THROW(sample_around(c, SamplingConfig{SamplingAlgorithm::mixed, 5, 1.0, 0, 0}), ArgumentError);
  EXPECT_THROW(sampling_from_string("latin"), ArgumentError);
}

TEST(FocusPoints, LossesComputedEagerly) {
  const NetworkObjective obj(default_arch(), default_split().train);
  const auto center = random_theta(default_arch(), 1);
  SamplingConfig cfg{SamplingAlgorithm::sobol, 20, 0.5, 0, 3};
  const auto pts = sample_focus_points(obj, center, cfg);
  ASSERT_EQ(pts.size(), 20u);
  for (const auto& p : pts) EXPECT_EQ(p.loss, obj.value(p.weights));
}

TEST(Projection, Basics) {
  const std::vector<WeightVector> one = {WeightVector(31, 0.0)};
  const auto p = projection_2d(one);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], std::make_pair(0.0, 0.0));

  SamplingConfig cfg{SamplingAlgorithm::sobol, 500, 3.0, 0, 3};
  const auto pts = sample_around(WeightVector(31, 0.0), cfg);
  const auto s = projection_2d(pts, 4, 30);
  ASSERT_EQ(s.size(), 500u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i].first, pts[i][4]);
    EXPECT_EQ(s[i].second, pts[i][30]);
    EXPECT_LE(std::abs(s[i].first), 3.0);
  }
  EXPECT_THROW(projection_2d(pts, 0, 31), ArgumentError);
}
