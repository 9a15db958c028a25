#pragma once

// The four landscape views: axis-parallel slice charts, linear
// interpolation paths, random 2D planes and slices along given directions
// (Hessian eigenvectors). All views sample the objective only; smoothing
// between samples is left to the renderer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "losslens/detail/parallel.hpp"
#include "losslens/errors.hpp"
#include "losslens/network.hpp"
#include "losslens/rng.hpp"

namespace losslens {

// `resolution` samples over [-range, range]; the middle one is exactly 0.
inline std::vector<double> symmetric_offsets(double range, std::size_t resolution) {
  if (resolution < 1 || resolution % 2 == 0)
    throw ArgumentError("resolution", "must be odd (offset 0 must be a sample node)");
  if (!(range > 0.0) || !std::isfinite(range)) throw ArgumentError("range", "must be a positive number");
  std::vector<double> off(resolution, 0.0);
  if (resolution == 1) return off;
  const long half = static_cast<long>(resolution / 2);
  for (long j = -half; j <= half; ++j)
    off[static_cast<std::size_t>(j + half)] = range * static_cast<double>(j) / static_cast<double>(half);
  return off;
}

// `count` nodes from lo to hi; nodes within 1e-12 of 0 or 1 are snapped so
// the path endpoints are sampled exactly.
inline std::vector<double> linear_alphas(double lo = -0.1, double hi = 1.1, std::size_t count = 121) {
  if (count < 2 || !(lo < hi)) throw ArgumentError("alphas", "need at least two increasing nodes");
  std::vector<double> a(count);
  for (std::size_t i = 0; i < count; ++i) {
    double v = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    if (std::abs(v) < 1e-12) v = 0.0;
    if (std::abs(v - 1.0) < 1e-12) v = 1.0;
    a[i] = v;
  }
  return a;
}

struct Slice1D {
  std::size_t index = 0;  // parameter index or direction number
  std::vector<double> offsets;
  std::vector<double> losses;
  std::string origin;
  bool is_target = false;
};

struct SliceChart {
  std::size_t param_index = 0;
  ParamLabel label;
  std::vector<Slice1D> slices;  // target first, then focus points in order
  double slice_range = 0.0;
  std::size_t resolution = 0;
};

struct SliceOrigin {
  std::string id;
  WeightVector weights;
  bool is_target = false;
};

// losses[j] = L(w with w[d] replaced by w[d] + offsets[j]).
template <typename Objective>
std::vector<double> axis_slice(const Objective& objective, std::span<const double> w, std::size_t d,
                               std::span<const double> offsets) {
  WeightVector probe(w.begin(), w.end());
  std::vector<double> losses(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    probe[d] = w[d] + offsets[j];
    losses[j] = objective.value(probe);
  }
  return losses;
}

// One chart per parameter, each holding one slice per origin point.
// Cost: param_count * points * resolution loss evaluations.
inline std::vector<SliceChart> axis_slices(const NetworkObjective& objective, std::span<const SliceOrigin> points,
                                           double slice_range, std::size_t resolution = 81,
                                           std::stop_token stop = {}) {
  const auto offsets = symmetric_offsets(slice_range, resolution);
  const std::size_t dim = objective.dimension();
  if (points.empty()) throw ArgumentError("points", "need at least one point to slice through");
  std::size_t targets = 0;
  for (const auto& p : points) {
    if (p.weights.size() != dim) throw DimensionError("point '" + p.id + "' has wrong dimension");
    targets += p.is_target ? 1 : 0;
  }
  if (targets != 1) throw ArgumentError("points", "exactly one point must be the target");

  std::vector<SliceChart> charts(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    auto& c = charts[d];
    c.param_index = d;
    c.label = label_of(objective.arch(), d);
    c.slice_range = slice_range;
    c.resolution = resolution;
    c.slices.resize(points.size());
  }
  detail::parallel_for(
      dim * points.size(),
      [&](std::size_t task) {
        const std::size_t d = task / points.size(), p = task % points.size();
        auto& s = charts[d].slices[p];
        s.index = d;
        s.offsets = offsets;
        s.origin = points[p].id;
        s.is_target = points[p].is_target;
        s.losses = axis_slice(objective, points[p].weights, d, offsets);
      },
      stop);
  // Target slice first in every chart.
  for (auto& c : charts)
    std::stable_partition(c.slices.begin(), c.slices.end(), [](const Slice1D& s) { return s.is_target; });
  return charts;
}

struct InterpolationPath {
  std::vector<double> alphas;
  std::vector<double> train_losses;
  std::vector<double> test_losses;
  std::vector<std::string> warnings;
};

// Loss along (1 - a) * theta0 + a * theta1 on both objectives.
template <typename Objective>
InterpolationPath interpolate(const Objective& train, const Objective& test, std::span<const double> theta0,
                              std::span<const double> theta1, std::span<const double> alphas,
                              std::stop_token stop = {}) {
  if (theta0.size() != train.dimension() || theta1.size() != train.dimension())
    throw DimensionError("interpolation endpoints have wrong dimension");
  if (alphas.empty()) throw ArgumentError("alphas", "must not be empty");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i] > alphas[i - 1])) throw ArgumentError("alphas", "must be strictly increasing");

  InterpolationPath path;
  path.alphas.assign(alphas.begin(), alphas.end());
  path.train_losses.resize(alphas.size());
  path.test_losses.resize(alphas.size());
  if (std::equal(theta0.begin(), theta0.end(), theta1.begin()))
    path.warnings.push_back("endpoints are identical; the path is constant");

  detail::parallel_for(
      alphas.size(),
      [&](std::size_t i) {
        const double a = alphas[i];
        WeightVector w(theta0.size());
        for (std::size_t k = 0; k < w.size(); ++k)
          w[k] = theta0[k] == theta1[k] ? theta0[k] : (1.0 - a) * theta0[k] + a * theta1[k];
        path.train_losses[i] = train.value(w);
        path.test_losses[i] = test.value(w);
      },
      stop);
  return path;
}

// Standard normal entries, scaled to unit Euclidean norm.
inline WeightVector random_unit_direction(std::size_t dim, Rng& rng) {
  WeightVector v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (auto& x : v) x = rng.normal();
    norm = l2_norm(v);
  }
  for (auto& x : v) x /= norm;
  return v;
}

struct PlaneSlice {
  WeightVector delta;
  WeightVector eta;
  double extent = 1.0;
  std::size_t resolution = 41;
  std::vector<double> coords;  // shared by both axes
  std::vector<double> losses;  // losses[i * resolution + j] at (coords[i], coords[j])
  std::uint64_t seed = 0;

  double at(std::size_t i, std::size_t j) const { return losses[i * resolution + j]; }
};

// Loss on origin + (alpha * delta + beta * eta) for alpha, beta on a
// symmetric grid. The inner sum is symmetric in (delta, alpha) <-> (eta,
// beta), so swapping the directions transposes the grid exactly.
template <typename Objective>
PlaneSlice plane_slice(const Objective& objective, std::span<const double> origin, std::span<const double> delta,
                       std::span<const double> eta, std::size_t resolution = 41, double extent = 1.0,
                       std::stop_token stop = {}) {
  const std::size_t dim = objective.dimension();
  if (origin.size() != dim || delta.size() != dim || eta.size() != dim)
    throw DimensionError("plane origin or directions have wrong dimension");
  PlaneSlice p;
  p.delta.assign(delta.begin(), delta.end());
  p.eta.assign(eta.begin(), eta.end());
  p.extent = extent;
  p.resolution = resolution;
  p.coords = symmetric_offsets(extent, resolution);
  p.losses.resize(resolution * resolution);
  detail::parallel_for(
      resolution * resolution,
      [&](std::size_t cell) {
        const double a = p.coords[cell / resolution], b = p.coords[cell % resolution];
        WeightVector w(dim);
        for (std::size_t k = 0; k < dim; ++k) w[k] = origin[k] + (a * delta[k] + b * eta[k]);
        p.losses[cell] = objective.value(w);
      },
      stop);
  return p;
}

// Random directions drawn from `seed`; no filter normalization. With
// `orthogonalize`, eta is made orthogonal to delta before normalizing.
template <typename Objective>
PlaneSlice random_plane_slice(const Objective& objective, std::span<const double> origin, std::uint64_t seed,
                              std::size_t resolution = 41, double extent = 1.0, bool orthogonalize = false,
                              std::stop_token stop = {}) {
  Rng rng(seed, Stream::plane);
  const auto delta = random_unit_direction(objective.dimension(), rng);
  auto eta = random_unit_direction(objective.dimension(), rng);
  if (orthogonalize && eta.size() > 1) {
    double dot = 0.0;
    for (std::size_t k = 0; k < eta.size(); ++k) dot += eta[k] * delta[k];
    for (std::size_t k = 0; k < eta.size(); ++k) eta[k] -= dot * delta[k];
    const double n = l2_norm(eta);
    for (auto& x : eta) x /= n;
  }
  auto p = plane_slice(objective, origin, delta, eta, resolution, extent, stop);
  p.seed = seed;
  return p;
}

struct DirectionSlices {
  std::vector<Slice1D> slices;
  std::vector<std::string> warnings;
};

// losses[j] = L(origin + offsets[j] * v) for each direction v. Directions
// that are not unit length are normalized (with a warning).
template <typename Objective>
DirectionSlices direction_slices(const Objective& objective, std::span<const double> origin,
                                 std::span<const WeightVector> directions, double range,
                                 std::size_t resolution = 81, std::stop_token stop = {}) {
  const auto offsets = symmetric_offsets(range, resolution);
  const std::size_t dim = objective.dimension();
  if (origin.size() != dim) throw DimensionError("origin has wrong dimension");
  DirectionSlices out;
  std::vector<WeightVector> dirs;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    if (directions[i].size() != dim) throw DimensionError("direction has wrong dimension");
    WeightVector v = directions[i];
    const double n = l2_norm(v);
    if (n == 0.0) throw ArgumentError("directions", "direction " + std::to_string(i) + " is zero");
    if (std::abs(n - 1.0) > 1e-10) {
      for (auto& x : v) x /= n;
      out.warnings.push_back("direction " + std::to_string(i) + " had norm " + std::to_string(n) +
                             " and was normalized");
    }
    dirs.push_back(std::move(v));
  }
  out.slices.resize(dirs.size());
  detail::parallel_for(
      dirs.size(),
      [&](std::size_t i) {
        auto& s = out.slices[i];
        s.index = i;
        s.offsets = offsets;
        s.losses.resize(offsets.size());
        WeightVector w(dim);
        for (std::size_t j = 0; j < offsets.size(); ++j) {
          for (std::size_t k = 0; k < dim; ++k) w[k] = origin[k] + offsets[j] * dirs[i][k];
          s.losses[j] = objective.value(w);
        }
      },
      stop);
  return out;
}

}  // namespace losslens
