#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "losslens/detail/parallel.hpp"
#include "losslens/detail/sobol_table.hpp"
#include "losslens/errors.hpp"
#include "losslens/network.hpp"
#include "losslens/rng.hpp"

namespace losslens {

// Unscrambled Sobol sequence in Gray-code order with Joe-Kuo direction
// numbers. Index 0 is the origin; index 1 is (0.5, ..., 0.5).
class SobolSequence {
 public:
  static constexpr std::size_t kBits = 32;
  static constexpr std::size_t max_dimension() { return detail::kSobolMaxDim; }

  explicit SobolSequence(std::size_t dim) : dim_(dim), directions_(dim), state_(dim, 0u) {
    if (dim == 0) throw ArgumentError("dimension", "must be at least 1");
    if (dim > max_dimension())
      throw CapabilityError("Sobol sampling supports at most " + std::to_string(max_dimension()) +
                            " dimensions, requested " + std::to_string(dim));
    for (std::size_t d = 0; d < dim; ++d) init_directions(d);
  }

  std::size_t dimension() const { return dim_; }
  std::uint64_t index() const { return index_; }

  // Writes the point at the current index into `out` and advances.
  void next(std::span<double> out) {
    if (out.size() != dim_) throw DimensionError("Sobol output buffer has wrong length");
    for (std::size_t d = 0; d < dim_; ++d) out[d] = static_cast<double>(state_[d]) * 0x1.0p-32;
    advance();
  }

  std::vector<double> next() {
    std::vector<double> p(dim_);
    next(p);
    return p;
  }

  void skip(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) advance();
  }

 private:
  void init_directions(std::size_t d) {
    std::array<std::uint32_t, kBits> m{};
    if (d == 0) {
      m.fill(1u);
    } else {
      const auto& prim = detail::kSobolTable[d];
      std::size_t degree = 0;
      while ((prim.poly >> (degree + 1)) != 0) ++degree;
      for (std::size_t j = 0; j < degree; ++j) m[j] = prim.m[j];
      for (std::size_t j = degree; j < kBits; ++j) {
        std::uint32_t v = m[j - degree];
        std::uint32_t pow2 = 1;
        for (std::size_t k = 0; k < degree; ++k) {
          pow2 <<= 1;
          if ((prim.poly >> (degree - 1 - k)) & 1u) v ^= pow2 * m[j - k - 1];
        }
        m[j] = v;
      }
    }
    for (std::size_t j = 0; j < kBits; ++j) directions_[d][j] = m[j] << (kBits - 1 - j);
  }

  void advance() {
    // Flip along the lowest zero bit of the current index.
    std::size_t c = 0;
    while ((index_ >> c) & 1u) ++c;
    if (c >= kBits) throw CapabilityError("Sobol sequence exhausted");
    for (std::size_t d = 0; d < dim_; ++d) state_[d] ^= directions_[d][c];
    ++index_;
  }

  std::size_t dim_;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint32_t> state_;
  std::uint64_t index_ = 0;
};

enum class SamplingAlgorithm { uniform, sobol, mixed };

inline std::string_view to_string(SamplingAlgorithm a) {
  switch (a) {
    case SamplingAlgorithm::uniform: return "uniform";
    case SamplingAlgorithm::sobol: return "sobol";
    case SamplingAlgorithm::mixed: return "mixed";
  }
  return "?";
}

inline SamplingAlgorithm sampling_from_string(std::string_view s) {
  if (s == "uniform") return SamplingAlgorithm::uniform;
  if (s == "sobol") return SamplingAlgorithm::sobol;
  if (s == "mixed") return SamplingAlgorithm::mixed;
  throw ArgumentError("algorithm", "unknown sampling algorithm '" + std::string(s) + "'");
}

struct SamplingConfig {
  SamplingAlgorithm algorithm = SamplingAlgorithm::sobol;
  std::size_t count = 100;
  double range = 1.0;  // half-width of the hypercube around the center
  std::uint64_t seed = 0;
  std::size_t mixed_levels = 3;

  void validate() const {
    if (count < 1) throw ArgumentError("count", "must be at least 1");
    if (!(range > 0.0) || !std::isfinite(range)) throw ArgumentError("range", "must be a positive number");
    if (algorithm == SamplingAlgorithm::mixed && mixed_levels < 1)
      throw ArgumentError("mixed_levels", "must be at least 1");
  }
};

// Points in the hypercube [center - range, center + range]^D.
//
// sobol: the Sobol sequence from index 1 (the origin at index 0 would land
// on a corner) mapped affinely into the cube.
// mixed: `mixed_levels` consecutive Sobol batches with half-widths
// range, range/2, range/4, ...; the count is split evenly and the remainder
// goes to the widest level.
inline std::vector<WeightVector> sample_around(std::span<const double> center, const SamplingConfig& cfg) {
  cfg.validate();
  const std::size_t dim = center.size();
  std::vector<WeightVector> out;
  out.reserve(cfg.count);

  auto place = [&](std::span<const double> unit, double half_width) {
    WeightVector w(dim);
    for (std::size_t i = 0; i < dim; ++i) w[i] = center[i] + half_width * (2.0 * unit[i] - 1.0);
    out.push_back(std::move(w));
  };

  std::vector<double> u(dim);
  switch (cfg.algorithm) {
    case SamplingAlgorithm::uniform: {
      Rng rng(cfg.seed, Stream::focus);
      for (std::size_t n = 0; n < cfg.count; ++n) {
        for (auto& x : u) x = rng.uniform();
        place(u, cfg.range);
      }
      break;
    }
    case SamplingAlgorithm::sobol: {
      SobolSequence seq(dim);
      seq.skip(1);
      for (std::size_t n = 0; n < cfg.count; ++n) {
        seq.next(u);
        place(u, cfg.range);
      }
      break;
    }
    case SamplingAlgorithm::mixed: {
      SobolSequence seq(dim);
      seq.skip(1);
      const std::size_t per_level = cfg.count / cfg.mixed_levels;
      double half_width = cfg.range;
      for (std::size_t level = 0; level < cfg.mixed_levels; ++level) {
        const std::size_t n_level = per_level + (level == 0 ? cfg.count % cfg.mixed_levels : 0);
        for (std::size_t n = 0; n < n_level; ++n) {
          seq.next(u);
          place(u, half_width);
        }
        half_width *= 0.5;
      }
      break;
    }
  }
  return out;
}

struct FocusPoint {
  WeightVector weights;
  double loss = 0.0;
};

// Samples around `center` and evaluates every point's loss right away.
template <typename Objective>
std::vector<FocusPoint> sample_focus_points(const Objective& objective, std::span<const double> center,
                                            const SamplingConfig& cfg, std::stop_token stop = {}) {
  if (center.size() != objective.dimension()) throw DimensionError("target point has wrong dimension");
  auto weights = sample_around(center, cfg);
  std::vector<FocusPoint> points(weights.size());
  detail::parallel_for(
      weights.size(),
      [&](std::size_t i) {
        points[i].loss = objective.value(weights[i]);
        points[i].weights = std::move(weights[i]);
      },
      stop);
  return points;
}

inline std::vector<std::pair<double, double>> projection_2d(std::span<const WeightVector> points,
                                                            std::size_t dim_a = 0, std::size_t dim_b = 1) {
  std::vector<std::pair<double, double>> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (dim_a >= p.size() || dim_b >= p.size())
      throw ArgumentError("dims", "projection dimension out of range for " + std::to_string(p.size()) +
                                      "-dimensional points");
    out.emplace_back(p[dim_a], p[dim_b]);
  }
  return out;
}

}  // namespace losslens
