#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "losslens/hessian.hpp"
#include "losslens/landscape.hpp"
#include "losslens/sampling.hpp"
#include "test_support.hpp"

using namespace losslens;
using namespace testing_support;

namespace {

const NetworkObjective& train_objective() {
  static const NetworkObjective obj(default_arch(), default_split().train);
  return obj;
}

const NetworkObjective& test_objective() {
  static const NetworkObjective obj(default_arch(), default_split().test);
  return obj;
}

bool is_last_layer(std::size_t index) { return index >= 27; }  // w6-9, w7-9, w8-9, b9

}  // namespace

TEST(Offsets, SymmetricWithExactZero) {
  const auto off = symmetric_offsets(25.0, 81);
  ASSERT_EQ(off.size(), 81u);
  EXPECT_EQ(off[40], 0.0);
  EXPECT_EQ(off.front(), -25.0);
  EXPECT_EQ(off.back(), 25.0);
  EXPECT_EQ(off[72], 20.0);
  for (std::size_t i = 0; i < off.size(); ++i) EXPECT_EQ(off[i], -off[80 - i]);
  for (std::size_t i = 1; i < off.size(); ++i) EXPECT_LT(off[i - 1], off[i]);
}

TEST(Offsets, EvenResolutionIsRejected) {
  try {
    symmetric_offsets(1.0, 80);
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_EQ(e.field(), "resolution");
    EXPECT_NE(std::string(e.what()).find("offset 0 must be a sample node"), std::string::npos);
  }
  EXPECT_THROW(symmetric_offsets(0.0, 81), ArgumentError);
}

TEST(Alphas, DefaultGridHitsEndpoints) {
  const auto a = linear_alphas();
  EXPECT_EQ(a.front(), -0.1);
  EXPECT_EQ(a.back(), 1.1);
  EXPECT_EQ(std::count(a.begin(), a.end(), 0.0), 1);
  EXPECT_EQ(std::count(a.begin(), a.end(), 1.0), 1);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a[i - 1], a[i]);
}

TEST(AxisSlices, OffsetZeroIsOriginLoss) {
  const auto& obj = train_objective();
  const auto w = random_theta(default_arch(), 1);
  const auto off = symmetric_offsets(2.0, 9);
  for (std::size_t d = 0; d < w.size(); ++d) EXPECT_EQ(axis_slice(obj, w, d, off)[4], obj.value(w));
}

TEST(AxisSlices, OneChartPerParameterTargetFirst) {
  const auto& obj = train_objective();
  const auto center = random_theta(default_arch(), 2);
  std::vector<SliceOrigin> origins = {{"f0", sample_around(center, {SamplingAlgorithm::sobol, 2, 0.5, 0, 3})[0], false},
                                      {"tp", center, true},
                                      {"f1", sample_around(center, {SamplingAlgorithm::sobol, 2, 0.5, 0, 3})[1], false}};
  const auto charts = axis_slices(obj, origins, 1.0, 11);
  ASSERT_EQ(charts.size(), 31u);
  std::set<std::string> labels;
  for (std::size_t d = 0; d < charts.size(); ++d) {
    const auto& c = charts[d];
    EXPECT_EQ(c.param_index, d);
    EXPECT_EQ(c.label, label_of(default_arch(), d));
    labels.insert(c.label.str());
    ASSERT_EQ(c.slices.size(), 3u);
    EXPECT_TRUE(c.slices[0].is_target);
    EXPECT_EQ(c.slices[0].origin, "tp");
    EXPECT_EQ(c.slices[1].origin, "f0");
    EXPECT_EQ(c.slices[2].origin, "f1");
    EXPECT_FALSE(c.slices[1].is_target || c.slices[2].is_target);
    for (std::size_t p = 0; p < 3; ++p) {
      const auto& origin = origins[p == 0 ? 1 : (p == 1 ? 0 : 2)];
      EXPECT_EQ(c.slices[p].losses[5], obj.value(origin.weights));
      EXPECT_EQ(c.slices[p].losses, axis_slice(obj, origin.weights, d, c.slices[p].offsets));
    }
  }
  EXPECT_EQ(labels.size(), 31u);
}

TEST(AxisSlices, ExactlyOneTarget) {
  const auto& obj = train_objective();
  const WeightVector w(31, 0.0);
  std::vector<SliceOrigin> none = {{"a", w, false}};
  std::vector<SliceOrigin> two = {{"a", w, true}, {"b", w, true}};
  EXPECT_THROW(axis_slices(obj, none, 1.0, 5), ArgumentError);
  EXPECT_THROW(axis_slices(obj, two, 1.0, 5), ArgumentError);
  std::vector<SliceOrigin> one = {{"a", w, true}};
  EXPECT_THROW(axis_slices(obj, one, 1.0, 4), ArgumentError);
  std::vector<SliceOrigin> bad = {{"a", WeightVector(30, 0.0), true}};
  EXPECT_THROW(axis_slices(obj, bad, 1.0, 5), DimensionError);
}

TEST(AxisSlices, LastLayerSlicesAreParabolas) {
  const auto& obj = train_objective();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto w = seed == 0 ? WeightVector(31, 0.0) : random_theta(default_arch(), seed);
    std::vector<SliceOrigin> origins = {{"tp", w, true}};
    const auto charts = axis_slices(obj, origins, 25.0, 81);
    for (const auto& c : charts) {
      if (!is_last_layer(c.param_index)) continue;
      const auto& s = c.slices[0];
      const double peak = *std::max_element(s.losses.begin(), s.losses.end());
      EXPECT_LT(quadratic_fit_residual(s.offsets, s.losses), 1e-9 * peak) << c.label.str();
    }
  }
}

TEST(AxisSlices, ZeroVectorEarlyLayersSaturate) {
  const auto& obj = train_objective();
  std::vector<SliceOrigin> origins = {{"zero", WeightVector(31, 0.0), true}};
  const auto charts = axis_slices(obj, origins, 25.0, 81);
  for (const auto& c : charts) {
    if (is_last_layer(c.param_index)) continue;
    const auto& l = c.slices[0].losses;
    EXPECT_LT(std::abs(l[80] - l[72]), 1e-3) << c.label.str();
  }
}

TEST(AxisSlices, StationaryAtMinimizer) {
  const auto& m = adam_minimizer(1);
  const auto& obj = train_objective();
  ASSERT_LE(l2_norm(obj.gradient(m.weights)), 1e-4);
  std::vector<SliceOrigin> origins = {{"min", m.weights, true}};
  for (const auto& c : axis_slices(obj, origins, 1.0, 81)) {
    const auto& l = c.slices[0].losses;
    EXPECT_GE(l[39], l[40] - 1e-4) << c.label.str();
    EXPECT_GE(l[41], l[40] - 1e-4) << c.label.str();
  }
}

TEST(AxisSlices, Cancellation) {
  std::stop_source src;
  src.request_stop();
  std::vector<SliceOrigin> origins = {{"zero", WeightVector(31, 0.0), true}};
  EXPECT_THROW(axis_slices(train_objective(), origins, 1.0, 81, src.get_token()), Cancelled);
}

TEST(Interpolation, EndpointsExact) {
  const auto& obj = train_objective();
  const auto& test = test_objective();
  const auto a = random_theta(default_arch(), 1), b = random_theta(default_arch(), 2);
  const auto alphas = linear_alphas();
  const auto p = interpolate(obj, test, a, b, alphas);
  ASSERT_EQ(p.train_losses.size(), alphas.size());
  ASSERT_EQ(p.test_losses.size(), alphas.size());
  const auto i0 = std::find(alphas.begin(), alphas.end(), 0.0) - alphas.begin();
  const auto i1 = std::find(alphas.begin(), alphas.end(), 1.0) - alphas.begin();
  EXPECT_EQ(p.train_losses[i0], obj.value(a));
  EXPECT_EQ(p.train_losses[i1], obj.value(b));
  EXPECT_EQ(p.test_losses[i0], test.value(a));
  EXPECT_EQ(p.test_losses[i1], test.value(b));
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Interpolation, IdenticalEndpointsGiveConstantCurves) {
  const auto a = random_theta(default_arch(), 1);
  const auto p = interpolate(train_objective(), test_objective(), a, a, linear_alphas());
  for (double l : p.train_losses) EXPECT_EQ(l, p.train_losses[0]);
  for (double l : p.test_losses) EXPECT_EQ(l, p.test_losses[0]);
  EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(Interpolation, SwapReversesExactly) {
  const auto a = random_theta(default_arch(), 3), b = random_theta(default_arch(), 4);
  // Dyadic nodes symmetric about 1/2, so 1 - alpha is exact.
  std::vector<double> alphas;
  for (int i = -8; i <= 40; ++i) alphas.push_back(i / 32.0);
  const auto p = interpolate(train_objective(), test_objective(), a, b, alphas);
  const auto q = interpolate(train_objective(), test_objective(), b, a, alphas);
  std::vector<double> r = q.train_losses, rt = q.test_losses;
  std::reverse(r.begin(), r.end());
  std::reverse(rt.begin(), rt.end());
  // alphas are symmetric about 1/2 on [-1/4, 5/4].
  EXPECT_EQ(p.train_losses, r);
  EXPECT_EQ(p.test_losses, rt);
}

TEST(Interpolation, RejectsBadAlphas) {
  const auto a = random_theta(default_arch(), 3);
  EXPECT_THROW(interpolate(train_objective(), test_objective(), a, a, std::vector<double>{}), ArgumentError);
  EXPECT_THROW(interpolate(train_objective(), test_objective(), a, a, std::vector<double>{0.5, 0.2}), ArgumentError);
}

TEST(Interpolation, InitToMinimizerCrossesBarrier) {
  const auto& m = adam_minimizer(1);
  const auto& obj = train_objective();
  const auto alphas = linear_alphas();
  const auto p = interpolate(obj, test_objective(), m.start, m.weights, alphas);
  double interior = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (alphas[i] > 0.0 && alphas[i] < 1.0) interior = std::max(interior, p.train_losses[i]);
  EXPECT_GT(interior, obj.value(m.start));
  EXPECT_GT(interior, obj.value(m.weights));
}

TEST(Plane, CenterIsOriginLoss) {
  const auto& obj = train_objective();
  const auto w = random_theta(default_arch(), 5);
  const auto p = random_plane_slice(obj, w, 11, 41, 1.0);
  EXPECT_EQ(p.at(20, 20), obj.value(w));
  EXPECT_EQ(p.losses.size(), 41u * 41u);
  EXPECT_NEAR(l2_norm(p.delta), 1.0, 1e-12);
  EXPECT_NEAR(l2_norm(p.eta), 1.0, 1e-12);
  EXPECT_EQ(p.coords[20], 0.0);
}

TEST(Plane, SeededDeterminism) {
  const auto& obj = train_objective();
  const auto w = random_theta(default_arch(), 5);
  const auto a = random_plane_slice(obj, w, 11, 21, 2.0), b = random_plane_slice(obj, w, 11, 21, 2.0);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.delta, b.delta);
  const auto c = random_plane_slice(obj, w, 12, 21, 2.0);
  EXPECT_NE(a.delta, c.delta);
}

TEST(Plane, SwappingDirectionsTransposes) {
  const auto& obj = train_objective();
  const auto w = random_theta(default_arch(), 6);
  const auto a = random_plane_slice(obj, w, 3, 15, 1.5);
  const auto b = plane_slice(obj, w, a.eta, a.delta, 15, 1.5);
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t j = 0; j < 15; ++j) EXPECT_EQ(a.at(i, j), b.at(j, i));
}

TEST(Plane, Orthogonalize) {
  const auto p = random_plane_slice(train_objective(), WeightVector(31, 0.0), 3, 5, 1.0, true);
  EXPECT_NEAR(detail::dot(p.delta, p.eta), 0.0, 1e-14);
  EXPECT_NEAR(l2_norm(p.eta), 1.0, 1e-12);
}

TEST(Plane, ZeroVectorLooksFlatUpClose) {
  const auto& obj = train_objective();
  const WeightVector zero(31, 0.0);
  auto range_of = [](const PlaneSlice& p) {
    const auto [lo, hi] = std::minmax_element(p.losses.begin(), p.losses.end());
    return *hi - *lo;
  };
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const double near = range_of(random_plane_slice(obj, zero, seed, 41, 1.0));
    const double far = range_of(random_plane_slice(obj, zero, seed, 41, 20.0));
    EXPECT_LT(near / far, 0.2) << seed;
  }
}

TEST(DirectionSlices, OffsetZeroAndNormalization) {
  const auto& obj = train_objective();
  const auto w = random_theta(default_arch(), 7);
  Rng rng(1);
  const auto u0 = random_unit_direction(31, rng), u1 = random_unit_direction(31, rng);
  std::vector<WeightVector> dirs = {u0, u1};
  for (auto& x : dirs[1]) x *= 3.0;
  const auto d = direction_slices(obj, w, dirs, 1.0, 21);
  ASSERT_EQ(d.slices.size(), 2u);
  EXPECT_EQ(d.warnings.size(), 1u);
  for (const auto& s : d.slices) EXPECT_EQ(s.losses[10], obj.value(w));
  // The rescaled direction gives the same slice as its unit version.
  const std::vector<WeightVector> unit = {u1};
  const auto e = direction_slices(obj, w, unit, 1.0, 21);
  EXPECT_TRUE(e.warnings.empty());
  for (std::size_t j = 0; j < 21; ++j) EXPECT_NEAR(e.slices[0].losses[j], d.slices[1].losses[j], 1e-12);
}

TEST(DirectionSlices, CurvatureFollowsEigenvalues) {
  const auto& m = adam_minimizer(1);
  const auto& obj = train_objective();
  const auto eig = top_eigenpairs(obj, m.weights);
  const auto d = direction_slices(obj, m.weights, eig.eigenvectors, 1e-2, 21);
  double c1 = 0.0, c5 = 0.0;
  quadratic_fit_residual(d.slices[0].offsets, d.slices[0].losses, &c1);
  quadratic_fit_residual(d.slices[4].offsets, d.slices[4].losses, &c5);
  EXPECT_LT(std::abs(c1 - eig.eigenvalues[0]) / eig.eigenvalues[0], 0.2);
  EXPECT_GT(c1 / c5, 1.0);
}
