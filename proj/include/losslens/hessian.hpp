#pragma once

// Extreme Hessian eigenpairs from matrix-free Hessian-vector products.
//
// Products are central differences of the exact gradient along the unit
// direction, so only `gradient()` of the objective is needed. The dense
// oracle builds the full matrix the same way, column by column, and
// diagonalizes it with cyclic Jacobi rotations; it exists to check the
// iterative path on small networks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "losslens/errors.hpp"
#include "losslens/network.hpp"
#include "losslens/rng.hpp"

namespace losslens {

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double fd_step(std::span<const double> theta) { return 1e-5 * std::max(1.0, l2_norm(theta)); }

// First component with magnitude above 1e-12 is made positive.
inline void canonical_sign(std::vector<double>& v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0.0)
        for (auto& y : v) y = -y;
      return;
    }
  }
}

}  // namespace detail

template <typename Objective>
WeightVector hvp(const Objective& objective, std::span<const double> theta, std::span<const double> v) {
  if (theta.size() != objective.dimension() || v.size() != theta.size())
    throw DimensionError("hvp operands have wrong dimension");
  const double norm = l2_norm(v);
  if (norm == 0.0) throw ArgumentError("v", "Hessian-vector product needs a nonzero vector");
  const double eps = detail::fd_step(theta);
  WeightVector plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double step = eps * (v[i] / norm);
    plus[i] += step;
    minus[i] -= step;
  }
  const auto gp = objective.gradient(plus);
  const auto gm = objective.gradient(minus);
  WeightVector out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * eps) * norm;
  return out;
}

struct EigenSolveOptions {
  std::size_t k = 5;
  double tol = 1e-10;  // relative change of successive Rayleigh quotients
  std::size_t max_iter = 5000;
  std::uint64_t seed = 0;  // start vectors
};

struct EigenResult {
  std::vector<double> eigenvalues;  // descending
  std::vector<WeightVector> eigenvectors;
  std::vector<double> residuals;  // ||Hv - lambda v||
  std::vector<bool> pair_converged;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  WeightVector min_eigenvector;
  double convexity_ratio = 0.0;  // |lambda_min / lambda_max|
  std::size_t hvp_count = 0;
  bool converged = true;
};

namespace detail {

struct PowerResult {
  double value = 0.0;
  WeightVector vector;
  bool converged = false;
};

// Power iteration for the dominant-magnitude eigenpair of `apply`, kept
// orthogonal to `locked`.
template <typename Apply>
PowerResult power_iteration(Apply&& apply, std::size_t dim, std::span<const WeightVector> locked, Rng& rng,
                            double tol, std::size_t max_iter) {
  auto project = [&](WeightVector& x) {
    for (const auto& q : locked) {
      const double c = dot(x, q);
      for (std::size_t i = 0; i < dim; ++i) x[i] -= c * q[i];
    }
  };
  auto normalize = [&](WeightVector& x) {
    const double n = l2_norm(x);
    if (n == 0.0) return false;
    for (auto& e : x) e /= n;
    return true;
  };

  WeightVector x(dim);
  do {
    for (auto& e : x) e = rng.normal();
    project(x);
  } while (!normalize(x));

  PowerResult r;
  double previous = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    WeightVector y = apply(x);
    project(y);
    const double rho = dot(x, y);
    r.value = rho;
    r.vector = x;
    if (!normalize(y)) {  // x lies in the null space
      r.converged = true;
      break;
    }
    if (it > 0 && std::abs(rho - previous) <= tol * std::max(std::abs(rho), 1e-300)) {
      r.converged = true;
      r.vector = y;
      break;
    }
    previous = rho;
    x = std::move(y);
  }
  return r;
}

}  // namespace detail

// Top-k eigenpairs by magnitude via power iteration with deflation, then the
// opposite end of the spectrum from power iteration on H - lambda_1 I.
template <typename Objective>
EigenResult top_eigenpairs(const Objective& objective, std::span<const double> theta,
                           const EigenSolveOptions& opt = {}) {
  const std::size_t dim = objective.dimension();
  if (theta.size() != dim) throw DimensionError("point has wrong dimension");
  if (opt.k < 1 || opt.k > dim)
    throw ArgumentError("k", "must be between 1 and the parameter count " + std::to_string(dim));

  EigenResult res;
  Rng rng(opt.seed);
  auto apply_h = [&](std::span<const double> x) {
    ++res.hvp_count;
    return hvp(objective, theta, x);
  };

  std::vector<WeightVector> vecs;
  std::vector<double> vals;
  std::vector<bool> conv;
  for (std::size_t i = 0; i < opt.k; ++i) {
    // Deflation: (H - sum lambda_j v_j v_j^T) restricted to the complement.
    auto deflated = [&](const WeightVector& x) {
      WeightVector y = apply_h(x);
      for (std::size_t j = 0; j < vecs.size(); ++j) {
        const double c = vals[j] * detail::dot(vecs[j], x);
        for (std::size_t n = 0; n < dim; ++n) y[n] -= c * vecs[j][n];
      }
      return y;
    };
    auto r = detail::power_iteration(deflated, dim, vecs, rng, opt.tol, opt.max_iter);
    vals.push_back(r.value);
    vecs.push_back(std::move(r.vector));
    conv.push_back(r.converged);
  }

  const double shift = vals.front();
  auto shifted = [&](const WeightVector& x) {
    WeightVector y = apply_h(x);
    for (std::size_t n = 0; n < dim; ++n) y[n] -= shift * x[n];
    return y;
  };
  auto other_end = detail::power_iteration(shifted, dim, {}, rng, opt.tol, opt.max_iter);
  const double lambda_other = other_end.value + shift;

  // Order pairs by eigenvalue, descending.
  std::vector<std::size_t> order(vals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  for (std::size_t i : order) {
    detail::canonical_sign(vecs[i]);
    res.eigenvalues.push_back(vals[i]);
    res.eigenvectors.push_back(vecs[i]);
    res.pair_converged.push_back(conv[i]);
    res.converged = res.converged && conv[i];
  }
  for (std::size_t i = 0; i < res.eigenvectors.size(); ++i) {
    const auto hv = apply_h(res.eigenvectors[i]);
    double r2 = 0.0;
    for (std::size_t n = 0; n < dim; ++n) {
      const double d = hv[n] - res.eigenvalues[i] * res.eigenvectors[i][n];
      r2 += d * d;
    }
    res.residuals.push_back(std::sqrt(r2));
  }

  res.converged = res.converged && other_end.converged;
  res.lambda_max = std::max(res.eigenvalues.front(), lambda_other);
  res.lambda_min = std::min(res.eigenvalues.back(), lambda_other);
  if (lambda_other <= res.eigenvalues.back()) {
    res.min_eigenvector = other_end.vector;
  } else {
    res.min_eigenvector = res.eigenvectors.back();
  }
  detail::canonical_sign(res.min_eigenvector);
  res.convexity_ratio = res.lambda_max == 0.0 ? 0.0 : std::abs(res.lambda_min / res.lambda_max);
  return res;
}

// Symmetric eigendecomposition by cyclic Jacobi rotations. `a` is n x n
// row-major. Eigenvalues come back descending, vectors as rows.
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol = 1e-14,
                                   std::size_t max_sweeps = 100) {
  if (a.size() != n * n) throw DimensionError("matrix is not n x n");
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (std::sqrt(off) <= tol * std::max(scale, 1e-300)) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {  // columns p, q
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {  // rows p, q
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return at(x, x) > at(y, y); });
  SymmetricEigen out;
  for (std::size_t i : order) {
    out.values.push_back(at(i, i));
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k * n + i];
    detail::canonical_sign(col);
    out.vectors.push_back(std::move(col));
  }
  return out;
}

struct DenseHessian {
  std::size_t dim = 0;
  std::vector<double> matrix;  // symmetrized, row-major
  double symmetry_defect = 0.0;  // max |H - H^T| before symmetrizing
  double max_abs = 0.0;
  std::vector<double> eigenvalues;  // descending
  std::vector<WeightVector> eigenvectors;

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim; ++i) t += matrix[i * dim + i];
    return t;
  }
};

inline constexpr std::size_t kDenseHessianMaxDim = 200;

template <typename Objective>
DenseHessian dense_hessian_oracle(const Objective& objective, std::span<const double> theta) {
  const std::size_t n = objective.dimension();
  if (n > kDenseHessianMaxDim)
    throw CapabilityError("dense Hessian limited to " + std::to_string(kDenseHessianMaxDim) + " parameters, got " +
                          std::to_string(n));
  if (theta.size() != n) throw DimensionError("point has wrong dimension");
  const double eps = detail::fd_step(theta);
  DenseHessian h;
  h.dim = n;
  std::vector<double> raw(n * n);
  WeightVector probe(theta.begin(), theta.end());
  for (std::size_t j = 0; j < n; ++j) {
    probe[j] = theta[j] + eps;
    const auto gp = objective.gradient(probe);
    probe[j] = theta[j] - eps;
    const auto gm = objective.gradient(probe);
    probe[j] = theta[j];
    for (std::size_t i = 0; i < n; ++i) raw[i * n + j] = (gp[i] - gm[i]) / (2.0 * eps);
  }
  h.matrix.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      h.symmetry_defect = std::max(h.symmetry_defect, std::abs(raw[i * n + j] - raw[j * n + i]));
      h.matrix[i * n + j] = 0.5 * (raw[i * n + j] + raw[j * n + i]);
      h.max_abs = std::max(h.max_abs, std::abs(raw[i * n + j]));
    }
  auto eig = jacobi_eigen(h.matrix, n);
  h.eigenvalues = std::move(eig.values);
  h.eigenvectors = std::move(eig.vectors);
  return h;
}

}  // namespace losslens
