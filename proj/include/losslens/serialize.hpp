#pragma once

// JSON payloads for grids, views and eigen results. Every array carries its
// axis metadata (parameter labels, offsets, alpha nodes, grid coordinates)
// so clients never have to reconstruct it.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "losslens/dataset.hpp"
#include "losslens/hessian.hpp"
#include "losslens/landscape.hpp"
#include "losslens/network.hpp"
#include "losslens/optimizer.hpp"
#include "losslens/sampling.hpp"
#include "losslens/store.hpp"

namespace losslens {

using json = nlohmann::json;

inline json label_to_json(const ParamLabel& l) {
  json j = {{"name", l.str()}, {"kind", l.kind == ParamLabel::Kind::bias ? "bias" : "weight"}, {"dst", l.dst}};
  if (l.src) j["src"] = *l.src;
  return j;
}

inline json param_labels_json(const NetworkArch& arch) {
  json out = json::array();
  for (std::size_t i = 0; i < param_count(arch); ++i) out.push_back(label_to_json(label_of(arch, i)));
  return out;
}

// Row-major values with resolution and range.
inline json grid_to_json(const Grid& g) {
  return {{"resolution", g.resolution}, {"range", {g.range_lo, g.range_hi}}, {"values", g.values}};
}

inline json target_point_to_json(const TargetPoint& p, bool with_weights = true) {
  json j = {{"id", p.id},
            {"name", p.name},
            {"train_loss", p.train_loss},
            {"test_loss", p.test_loss},
            {"l2_norm", p.l2_norm},
            {"provenance", provenance_to_json(p.provenance)},
            {"arch_fingerprint", p.arch_fingerprint},
            {"created_at", p.created_at}};
  if (with_weights) j["weights"] = p.weights;
  return j;
}

inline json slice_charts_to_json(std::span<const SliceChart> charts) {
  json out = json::array();
  for (const auto& c : charts) {
    json slices = json::array();
    for (const auto& s : c.slices)
      slices.push_back({{"origin", s.origin}, {"is_target", s.is_target}, {"losses", s.losses}});
    out.push_back({{"param_index", c.param_index}, {"label", label_to_json(c.label)}, {"slices", std::move(slices)}});
  }
  return out;
}

inline json interpolation_to_json(const InterpolationPath& p) {
  return {{"alphas", p.alphas},
          {"train_losses", p.train_losses},
          {"test_losses", p.test_losses},
          {"warnings", p.warnings}};
}

inline json plane_to_json(const PlaneSlice& p) {
  return {{"seed", p.seed},         {"extent", p.extent}, {"resolution", p.resolution},
          {"coords", p.coords},     {"delta", p.delta},   {"eta", p.eta},
          {"losses", p.losses},     {"center_loss", p.at(p.resolution / 2, p.resolution / 2)}};
}

inline json eigen_to_json(const EigenResult& e) {
  json pairs_converged = json::array();
  for (bool b : e.pair_converged) pairs_converged.push_back(b);
  return {{"eigenvalues", e.eigenvalues},
          {"eigenvectors", e.eigenvectors},
          {"residuals", e.residuals},
          {"pair_converged", std::move(pairs_converged)},
          {"lambda_max", e.lambda_max},
          {"lambda_min", e.lambda_min},
          {"min_eigenvector", e.min_eigenvector},
          {"convexity_ratio", e.convexity_ratio},
          {"hvp_count", e.hvp_count},
          {"converged", e.converged}};
}

inline json direction_slices_to_json(const DirectionSlices& d, std::span<const double> eigenvalues) {
  json slices = json::array();
  for (std::size_t i = 0; i < d.slices.size(); ++i) {
    json s = {{"direction", d.slices[i].index}, {"losses", d.slices[i].losses}};
    if (i < eigenvalues.size()) s["eigenvalue"] = eigenvalues[i];
    slices.push_back(std::move(s));
  }
  return {{"offsets", d.slices.empty() ? std::vector<double>{} : d.slices.front().offsets},
          {"slices", std::move(slices)},
          {"warnings", d.warnings}};
}

inline json train_config_to_json(const TrainConfig& c) {
  json j = {{"algorithm", to_string(c.algorithm)},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"checkpoint_count", c.checkpoint_count},
            {"seed", c.seed}};
  j["loss_threshold"] = c.loss_threshold ? json(*c.loss_threshold) : json(nullptr);
  j["timeout_ms"] = c.timeout ? json(c.timeout->count()) : json(nullptr);
  return j;
}

inline json sampling_config_to_json(const SamplingConfig& c) {
  return {{"algorithm", to_string(c.algorithm)},
          {"count", c.count},
          {"range", c.range},
          {"seed", c.seed},
          {"mixed_levels", c.mixed_levels}};
}

}  // namespace losslens
