#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "losslens/errors.hpp"
#include "losslens/expr.hpp"
#include "losslens/network.hpp"
#include "losslens/rng.hpp"

namespace losslens {

struct DataConfig {
  Expr expr;
  std::size_t n_train = 256;
  std::size_t n_test = 256;
  double range_lo = 0.0;
  double range_hi = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (expr.empty()) throw ArgumentError("expr", "missing target function");
    if (!(range_lo < range_hi)) throw ArgumentError("range", "lower bound must be below upper bound");
    if (n_train < 1) throw ArgumentError("n_train", "must be at least 1");
    if (n_test < 1) throw ArgumentError("n_test", "must be at least 1");
  }
};

// Square grid over [lo, hi]^2. values[i * resolution + j] holds the node at
// x = lo + i * step, y = lo + j * step.
struct Grid {
  std::size_t resolution = 32;
  double range_lo = 0.0;
  double range_hi = 5.0;
  std::vector<double> values;

  double coord(std::size_t i) const {
    if (resolution == 1) return range_lo;
    return range_lo + static_cast<double>(i) * (range_hi - range_lo) / static_cast<double>(resolution - 1);
  }
  double at(std::size_t i, std::size_t j) const { return values[i * resolution + j]; }
};

class DataGenerationError : public DomainError {
 public:
  DataGenerationError(const DomainError& cause, double x, double y)
      : DomainError(cause.node(), std::string(cause.what()) + " at (" + num(x) + ", " + num(y) + ")"),
        x_(x),
        y_(y) {}
  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }

 private:
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
  double x_, y_;
};

namespace detail {

inline Dataset sample_dataset(const DataConfig& cfg, std::size_t n, Stream stream) {
  Rng rng(cfg.seed, stream);
  Dataset d;
  d.dim = 2;
  d.inputs.reserve(2 * n);
  d.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(cfg.range_lo, cfg.range_hi);
    const double y = rng.uniform(cfg.range_lo, cfg.range_hi);
    double t;
    try {
      t = cfg.expr.eval(x, y);
    } catch (const DomainError& e) {
      throw DataGenerationError(e, x, y);
    }
    d.inputs.push_back(x);
    d.inputs.push_back(y);
    d.targets.push_back(t);
  }
  return d;
}

}  // namespace detail

struct DataSplit {
  Dataset train;
  Dataset test;
};

// Train and test points are i.i.d. uniform over the square, drawn from
// independent sub-streams of `cfg.seed`.
inline DataSplit generate(const DataConfig& cfg) {
  cfg.validate();
  return {detail::sample_dataset(cfg, cfg.n_train, Stream::train_data),
          detail::sample_dataset(cfg, cfg.n_test, Stream::test_data)};
}

inline Grid target_grid(const Expr& expr, std::size_t resolution = 32, double lo = 0.0, double hi = 5.0) {
  if (resolution < 1) throw ArgumentError("resolution", "must be at least 1");
  Grid g{resolution, lo, hi, std::vector<double>(resolution * resolution)};
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) {
      const double x = g.coord(i), y = g.coord(j);
      try {
        g.values[i * resolution + j] = expr.eval(x, y);
      } catch (const DomainError& e) {
        throw DataGenerationError(e, x, y);
      }
    }
  return g;
}

inline Grid prediction_grid(const NetworkArch& arch, std::span<const double> weights, std::size_t resolution = 32,
                            double lo = 0.0, double hi = 5.0) {
  if (resolution < 1) throw ArgumentError("resolution", "must be at least 1");
  if (arch.input_dim() != 2) throw DimensionError("prediction grid needs a 2-input network");
  Grid g{resolution, lo, hi, std::vector<double>(resolution * resolution)};
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) {
      const double in[2] = {g.coord(i), g.coord(j)};
      g.values[i * resolution + j] = forward(arch, weights, in);
    }
  return g;
}

}  // namespace losslens
