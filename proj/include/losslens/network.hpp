#pragma once

// Dense regression networks over a flat parameter vector.
//
// Flat layout of the parameter vector: for each layer l (front to back) the
// weight matrix in row-major order, rows = destination neurons and columns =
// source neurons, followed by that layer's biases ordered by destination
// neuron. Neurons are numbered globally across layers starting at 0 with the
// inputs, so a [2,4,3,1] network has inputs 0-1, hidden neurons 2-5 and 6-8,
// and the output neuron 9.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "losslens/errors.hpp"

namespace losslens {

enum class Activation { sigmoid, tanh, relu };
enum class LossKind { mse, mae };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "mae"; }

inline Activation activation_from_string(std::string_view s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ArgumentError("activation", "unknown activation '" + std::string(s) + "'");
}

inline LossKind loss_from_string(std::string_view s) {
  if (s == "mse" || s == "MSE") return LossKind::mse;
  if (s == "mae" || s == "MAE") return LossKind::mae;
  throw ArgumentError("loss", "unknown loss '" + std::string(s) + "'");
}

using WeightVector = std::vector<double>;

struct NetworkArch {
  std::vector<std::size_t> layers;
  Activation hidden = Activation::sigmoid;
  LossKind loss = LossKind::mse;
  // The output layer is always linear.

  NetworkArch() = default;
  NetworkArch(std::vector<std::size_t> sizes, Activation act = Activation::sigmoid,
              LossKind kind = LossKind::mse)
      : layers(std::move(sizes)), hidden(act), loss(kind) {
    validate();
  }

  void validate() const {
    if (layers.size() < 2) throw ArgumentError("layers", "need at least 2 layers");
    for (auto n : layers)
      if (n == 0) throw ArgumentError("layers", "every layer needs at least one neuron");
  }

  std::size_t input_dim() const { return layers.front(); }
  std::size_t output_dim() const { return layers.back(); }
  std::size_t neuron_count() const {
    std::size_t n = 0;
    for (auto s : layers) n += s;
    return n;
  }

  // "2-4-3-1" shape string used in messages.
  std::string shape() const {
    std::string s;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (i) s += '-';
      s += std::to_string(layers[i]);
    }
    return s;
  }

  friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

inline std::size_t param_count(const NetworkArch& arch) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < arch.layers.size(); ++l)
    n += arch.layers[l] * arch.layers[l + 1] + arch.layers[l + 1];
  return n;
}

inline std::size_t bias_count(const NetworkArch& arch) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < arch.layers.size(); ++l) n += arch.layers[l];
  return n;
}

struct ParamLabel {
  enum class Kind { weight, bias };
  Kind kind = Kind::weight;
  std::optional<std::size_t> src;  // absent for biases
  std::size_t dst = 0;

  // "w3-6" or "b9"
  std::string str() const {
    if (kind == Kind::bias) return "b" + std::to_string(dst);
    return "w" + std::to_string(*src) + "-" + std::to_string(dst);
  }

  friend bool operator==(const ParamLabel&, const ParamLabel&) = default;
};

namespace detail {

// Index of the first global neuron of each layer.
inline std::vector<std::size_t> neuron_offsets(const NetworkArch& arch) {
  std::vector<std::size_t> off(arch.layers.size(), 0);
  for (std::size_t l = 1; l < arch.layers.size(); ++l) off[l] = off[l - 1] + arch.layers[l - 1];
  return off;
}

}  // namespace detail

inline ParamLabel label_of(const NetworkArch& arch, std::size_t index) {
  const auto neurons = detail::neuron_offsets(arch);
  std::size_t base = 0;
  for (std::size_t l = 0; l + 1 < arch.layers.size(); ++l) {
    const std::size_t n_in = arch.layers[l], n_out = arch.layers[l + 1];
    const std::size_t block = n_in * n_out + n_out;
    if (index < base + block) {
      const std::size_t local = index - base;
      if (local < n_in * n_out)
        return {ParamLabel::Kind::weight, neurons[l] + local % n_in, neurons[l + 1] + local / n_in};
      return {ParamLabel::Kind::bias, std::nullopt, neurons[l + 1] + (local - n_in * n_out)};
    }
    base += block;
  }
  throw DimensionError("parameter index " + std::to_string(index) + " out of range " +
                       std::to_string(param_count(arch)));
}

inline std::size_t index_of(const NetworkArch& arch, const ParamLabel& label) {
  const auto neurons = detail::neuron_offsets(arch);
  std::size_t base = 0;
  for (std::size_t l = 0; l + 1 < arch.layers.size(); ++l) {
    const std::size_t n_in = arch.layers[l], n_out = arch.layers[l + 1];
    const std::size_t dst_lo = neurons[l + 1];
    if (label.dst >= dst_lo && label.dst < dst_lo + n_out) {
      const std::size_t row = label.dst - dst_lo;
      if (label.kind == ParamLabel::Kind::bias) return base + n_in * n_out + row;
      if (!label.src || *label.src < neurons[l] || *label.src >= neurons[l] + n_in) break;
      return base + row * n_in + (*label.src - neurons[l]);
    }
    base += n_in * n_out + n_out;
  }
  throw ArgumentError("label", "no parameter named " + label.str());
}

// Input rows are stored flat, row-major, `dim` values per sample.
struct Dataset {
  std::size_t dim = 2;
  std::vector<double> inputs;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * dim, dim}; }

  void validate() const {
    if (targets.empty()) throw ArgumentError("data", "dataset is empty");
    if (inputs.size() != targets.size() * dim)
      throw DimensionError("dataset inputs/targets length mismatch");
  }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
  }
  return z;
}

// Derivative expressed through the pre-activation z and output y.
inline double activate_deriv(Activation a, double z, double y) {
  switch (a) {
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

inline void check_weights(const NetworkArch& arch, std::span<const double> w) {
  if (w.size() != param_count(arch))
    throw DimensionError("weight vector has " + std::to_string(w.size()) + " entries, architecture " +
                         arch.shape() + " needs " + std::to_string(param_count(arch)));
}

inline void check_data(const NetworkArch& arch, const Dataset& data) {
  data.validate();
  if (data.dim != arch.input_dim())
    throw DimensionError("dataset input dimension " + std::to_string(data.dim) +
                         " does not match network input " + std::to_string(arch.input_dim()));
  if (arch.output_dim() != 1) throw DimensionError("loss needs a single-output network");
}

// Per-sample activations for every neuron; `pre` holds pre-activations.
struct Trace {
  std::vector<double> pre;
  std::vector<double> post;
};

inline void forward_trace(const NetworkArch& arch, const std::vector<std::size_t>& neurons,
                          std::span<const double> w, std::span<const double> x, Trace& t) {
  std::copy(x.begin(), x.end(), t.post.begin());
  std::copy(x.begin(), x.end(), t.pre.begin());
  const std::size_t last = arch.layers.size() - 1;
  std::size_t p = 0;
  for (std::size_t l = 0; l < last; ++l) {
    const std::size_t n_in = arch.layers[l], n_out = arch.layers[l + 1];
    const double* src = t.post.data() + neurons[l];
    const double* bias = w.data() + p + n_in * n_out;
    for (std::size_t j = 0; j < n_out; ++j) {
      const double* row = w.data() + p + j * n_in;
      double z = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) z += row[i] * src[i];
      z += bias[j];
      const std::size_t g = neurons[l + 1] + j;
      t.pre[g] = z;
      t.post[g] = (l + 1 == last) ? z : activate(arch.hidden, z);
    }
    p += n_in * n_out + n_out;
  }
}

}  // namespace detail

inline double forward(const NetworkArch& arch, std::span<const double> weights,
                      std::span<const double> input) {
  detail::check_weights(arch, weights);
  if (input.size() != arch.input_dim())
    throw DimensionError("input has " + std::to_string(input.size()) + " values, network expects " +
                         std::to_string(arch.input_dim()));
  const auto neurons = detail::neuron_offsets(arch);
  detail::Trace t{std::vector<double>(arch.neuron_count()), std::vector<double>(arch.neuron_count())};
  detail::forward_trace(arch, neurons, weights, input, t);
  return t.post[neurons.back()];
}

inline double loss(const NetworkArch& arch, std::span<const double> weights, const Dataset& data) {
  detail::check_weights(arch, weights);
  detail::check_data(arch, data);
  const auto neurons = detail::neuron_offsets(arch);
  detail::Trace t{std::vector<double>(arch.neuron_count()), std::vector<double>(arch.neuron_count())};
  const std::size_t out = neurons.back();
  double sum = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    detail::forward_trace(arch, neurons, weights, data.input(s), t);
    const double r = t.post[out] - data.targets[s];
    sum += arch.loss == LossKind::mse ? r * r : std::abs(r);
  }
  return sum / static_cast<double>(data.size());
}

// Backpropagation over the samples listed in `rows` (all samples if empty),
// averaged over that subset.
inline WeightVector gradient(const NetworkArch& arch, std::span<const double> weights, const Dataset& data,
                             std::span<const std::size_t> rows = {}) {
  detail::check_weights(arch, weights);
  detail::check_data(arch, data);
  const auto neurons = detail::neuron_offsets(arch);
  const std::size_t n_neurons = arch.neuron_count();
  detail::Trace t{std::vector<double>(n_neurons), std::vector<double>(n_neurons)};
  std::vector<double> delta(n_neurons);
  WeightVector grad(weights.size(), 0.0);
  const std::size_t last = arch.layers.size() - 1;
  const std::size_t count = rows.empty() ? data.size() : rows.size();
  const double inv_n = 1.0 / static_cast<double>(count);

  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = rows.empty() ? k : rows[k];
    detail::forward_trace(arch, neurons, weights, data.input(s), t);
    const double r = t.post[neurons.back()] - data.targets[s];
    double dl;
    if (arch.loss == LossKind::mse) {
      dl = 2.0 * r;
    } else {
      dl = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }
    delta[neurons.back()] = dl * inv_n;

    // Walk layers back to front; `p` is the start of layer l's block.
    std::size_t p = param_count(arch);
    for (std::size_t l = last; l-- > 0;) {
      const std::size_t n_in = arch.layers[l], n_out = arch.layers[l + 1];
      p -= n_in * n_out + n_out;
      const double* src = t.post.data() + neurons[l];
      const double* d_out = delta.data() + neurons[l + 1];
      for (std::size_t j = 0; j < n_out; ++j) {
        double* g_row = grad.data() + p + j * n_in;
        for (std::size_t i = 0; i < n_in; ++i) g_row[i] += d_out[j] * src[i];
        grad[p + n_in * n_out + j] += d_out[j];
      }
      if (l == 0) break;
      for (std::size_t i = 0; i < n_in; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n_out; ++j) acc += weights[p + j * n_in + i] * d_out[j];
        const std::size_t g = neurons[l] + i;
        delta[g] = acc * detail::activate_deriv(arch.hidden, t.pre[g], t.post[g]);
      }
    }
  }
  return grad;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Loss of one network on one dataset as a function of the weights. This is
// the objective type consumed by the sampling, landscape and hessian code;
// anything with the same three members works there too. `scale` multiplies
// both value and gradient.
class NetworkObjective {
 public:
  NetworkObjective(NetworkArch arch, const Dataset& data, double scale = 1.0)
      : arch_(std::move(arch)), data_(&data), scale_(scale) {
    detail::check_data(arch_, data);
  }

  std::size_t dimension() const { return param_count(arch_); }
  double value(std::span<const double> w) const { return scale_ * loss(arch_, w, *data_); }
  WeightVector gradient(std::span<const double> w) const {
    auto g = losslens::gradient(arch_, w, *data_);
    if (scale_ != 1.0)
      for (double& x : g) x *= scale_;
    return g;
  }

  const NetworkArch& arch() const { return arch_; }
  const Dataset& data() const { return *data_; }

 private:
  NetworkArch arch_;
  const Dataset* data_;
  double scale_;
};

}  // namespace losslens
