#pragma once

// Target points and their `.ftp.json` files.
//
// File layout (version 1):
//   { "version": 1,
//     "arch": {"layers": [2,4,3,1], "activation": "sigmoid", "loss": "mse",
//              "fingerprint": "..."},
//     "points": [ {"id", "name", "weights": ["0x1.8p+0", ...],
//                  "train_loss", "test_loss", "l2_norm",
//                  "provenance": {"kind", "run", "epoch"}, "created_at"} ] }
// Weights are hex-float strings so a reload is bit-exact.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "losslens/errors.hpp"
#include "losslens/network.hpp"

namespace losslens {

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

enum class ProvenanceKind { random_init, training, zero_vector, loaded };

inline std::string_view to_string(ProvenanceKind k) {
  switch (k) {
    case ProvenanceKind::random_init: return "random_init";
    case ProvenanceKind::training: return "training";
    case ProvenanceKind::zero_vector: return "zero_vector";
    case ProvenanceKind::loaded: return "loaded";
  }
  return "?";
}

inline ProvenanceKind provenance_from_string(std::string_view s) {
  if (s == "random_init") return ProvenanceKind::random_init;
  if (s == "training") return ProvenanceKind::training;
  if (s == "zero_vector") return ProvenanceKind::zero_vector;
  if (s == "loaded") return ProvenanceKind::loaded;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::random_init;
  std::string run_id;      // training only
  std::size_t epoch = 0;   // training only

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TargetPoint {
  std::string id;
  std::string name;
  WeightVector weights;
  std::string arch_fingerprint;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double l2_norm = 0.0;
  Provenance provenance;
  std::string created_at;
};

// FNV-1a over a canonical description of the architecture.
inline std::string arch_fingerprint(const NetworkArch& arch) {
  std::string canon = "layers=" + arch.shape() + ";hidden=" + std::string(to_string(arch.hidden)) +
                      ";output=linear;loss=" + std::string(to_string(arch.loss));
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::string hex_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_float(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("malformed number '" + s + "'");
  return v;
}

inline std::string arch_description(const NetworkArch& arch) {
  return arch.shape() + " " + std::string(to_string(arch.hidden)) + "/" + std::string(to_string(arch.loss));
}

inline nlohmann::json arch_to_json(const NetworkArch& arch) {
  return {{"layers", arch.layers},
          {"activation", to_string(arch.hidden)},
          {"loss", to_string(arch.loss)},
          {"fingerprint", arch_fingerprint(arch)}};
}

inline NetworkArch arch_from_json(const nlohmann::json& j) {
  return NetworkArch(j.at("layers").get<std::vector<std::size_t>>(),
                     activation_from_string(j.value("activation", std::string("sigmoid"))),
                     loss_from_string(j.value("loss", std::string("mse"))));
}

inline nlohmann::json provenance_to_json(const Provenance& p) {
  nlohmann::json j = {{"kind", to_string(p.kind)}};
  if (p.kind == ProvenanceKind::training) {
    j["run"] = p.run_id;
    j["epoch"] = p.epoch;
  }
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.kind = provenance_from_string(j.at("kind").get<std::string>());
  if (p.kind == ProvenanceKind::training) {
    p.run_id = j.at("run").get<std::string>();
    p.epoch = j.at("epoch").get<std::size_t>();
  }
  return p;
}

inline nlohmann::json points_document(std::span<const TargetPoint> points, const NetworkArch& arch) {
  const auto fp = arch_fingerprint(arch);
  nlohmann::json doc = {{"version", 1}, {"arch", arch_to_json(arch)}, {"points", nlohmann::json::array()}};
  for (const auto& p : points) {
    if (!p.arch_fingerprint.empty() && p.arch_fingerprint != fp)
      throw IncompatibleArchError("point '" + p.id + "' belongs to a different architecture");
    if (p.weights.size() != param_count(arch)) throw DimensionError("point '" + p.id + "' has wrong dimension");
    nlohmann::json w = nlohmann::json::array();
    for (double x : p.weights) w.push_back(hex_float(x));
    doc["points"].push_back({{"id", p.id},
                             {"name", p.name},
                             {"weights", std::move(w)},
                             {"train_loss", p.train_loss},
                             {"test_loss", p.test_loss},
                             {"l2_norm", p.l2_norm},
                             {"provenance", provenance_to_json(p.provenance)},
                             {"created_at", p.created_at}});
  }
  return doc;
}

namespace detail {

inline void line_column(std::string_view text, std::size_t byte, std::size_t& line, std::size_t& col) {
  line = 1;
  col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
}

inline std::mutex& path_mutex(const std::filesystem::path& path) {
  static std::mutex registry_mu;
  static std::map<std::string, std::mutex> registry;
  std::lock_guard lock(registry_mu);
  return registry[std::filesystem::absolute(path).lexically_normal().string()];
}

}  // namespace detail

// Reads a points document and checks it against `arch`.
inline std::vector<TargetPoint> points_from_document(std::string_view text, const NetworkArch& arch) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line, col;
    detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1, line, col);
    throw ParseError(line, col, "invalid JSON");
  }
  try {
    if (!doc.contains("version")) throw FormatError("missing 'version'");
    if (doc.at("version").get<int>() != 1)
      throw FormatError("unsupported version " + doc.at("version").dump());
    const NetworkArch file_arch = arch_from_json(doc.at("arch"));
    if (arch_fingerprint(file_arch) != arch_fingerprint(arch))
      throw IncompatibleArchError("file architecture " + arch_description(file_arch) +
                                  " is incompatible with session architecture " + arch_description(arch));
    const auto fp = arch_fingerprint(arch);
    std::vector<TargetPoint> out;
    for (const auto& jp : doc.at("points")) {
      TargetPoint p;
      p.id = jp.value("id", std::string{});
      p.name = jp.value("name", std::string{});
      for (const auto& w : jp.at("weights")) p.weights.push_back(parse_hex_float(w.get<std::string>()));
      if (p.weights.size() != param_count(arch))
        throw FormatError("point '" + p.id + "' has " + std::to_string(p.weights.size()) + " weights, expected " +
                          std::to_string(param_count(arch)));
      for (double x : p.weights)
        if (!std::isfinite(x)) throw FormatError("point '" + p.id + "' has a non-finite weight");
      p.arch_fingerprint = fp;
      p.train_loss = jp.at("train_loss").get<double>();
      p.test_loss = jp.at("test_loss").get<double>();
      const double stored_norm = jp.at("l2_norm").get<double>();
      p.l2_norm = l2_norm(p.weights);
      if (std::abs(p.l2_norm - stored_norm) > 1e-9 * std::max(1.0, p.l2_norm))
        throw FormatError("point '" + p.id + "' l2_norm does not match its weights");
      p.provenance = provenance_from_json(jp.at("provenance"));
      p.created_at = jp.value("created_at", std::string{});
      out.push_back(std::move(p));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed points file: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("malformed architecture: ") + e.what());
  }
}

inline void save_points(std::span<const TargetPoint> points, const NetworkArch& arch,
                        const std::filesystem::path& path) {
  const std::string text = points_document(points, arch).dump(2);
  std::lock_guard lock(detail::path_mutex(path));
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text << '\n';
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<TargetPoint> load_points(const std::filesystem::path& path, const NetworkArch& arch) {
  std::string text;
  {
    std::lock_guard lock(detail::path_mutex(path));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return points_from_document(text, arch);
}

}  // namespace losslens
