#pragma once

// HTTP-independent request handling for the experiment service.
//
// Service::handle() maps (method, path, headers, body) to (status, JSON
// text). The HTTP binding in http_server.hpp is a thin adapter, and tests
// drive the service directly.
//
// State model: one Session per experiment holds the architecture, datasets,
// target points, focus sets, runs and eigen results. Mutations take the
// session lock exclusively. View computations copy what they need under a
// shared lock and compute without holding it, so they never observe a
// half-applied mutation.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "losslens/dataset.hpp"
#include "losslens/errors.hpp"
#include "losslens/expr.hpp"
#include "losslens/hessian.hpp"
#include "losslens/jobs.hpp"
#include "losslens/landscape.hpp"
#include "losslens/network.hpp"
#include "losslens/optimizer.hpp"
#include "losslens/sampling.hpp"
#include "losslens/serialize.hpp"
#include "losslens/store.hpp"

namespace losslens::api {

struct ServiceConfig {
  std::size_t max_jobs = 2;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir = ".";
  std::size_t view_cache_size = 16;
};

struct Request {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> query;
  std::string idempotency_key;
};

struct Response {
  int status = 200;
  std::string body;  // JSON text
};

class NotFound : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "not_found"; }
};

class Conflict : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "conflict"; }
};

namespace detail {

// Typed access to request fields; errors name the offending field.
class Fields {
 public:
  Fields(const json& j, std::string prefix = {}) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ArgumentError(prefix_.empty() ? "body" : prefix_, "must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  std::string path(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  double number(const char* key, std::optional<double> def = std::nullopt) const {
    if (!has(key)) return require(key, def);
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ArgumentError(path(key), "must be a number");
    return v.get<double>();
  }

  std::uint64_t unsigned_int(const char* key, std::optional<std::uint64_t> def = std::nullopt) const {
    if (!has(key)) return require(key, def);
    const auto& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ArgumentError(path(key), "must be a nonnegative integer");
  }

  std::string string(const char* key, std::optional<std::string> def = std::nullopt) const {
    if (!has(key)) return require(key, std::move(def));
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ArgumentError(path(key), "must be a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ArgumentError(path(key), "must be true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const char* key) const {
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ArgumentError(path(key), "must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ArgumentError(path(key), "must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Fields object(const char* key) const {
    static const json empty = json::object();
    return has(key) ? Fields(j_.at(key), path(key)) : Fields(empty, path(key));
  }

  const json& raw() const { return j_; }

 private:
  template <typename T>
  T require(const char* key, std::optional<T> def) const {
    if (!def) throw ArgumentError(path(key), "is required");
    return *def;
  }

  const json& j_;
  std::string prefix_;
};

inline std::string fnv_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t start = i;
    while (i < path.size() && path[i] != '/') ++i;
    if (i > start) parts.emplace_back(path.substr(start, i - start));
  }
  return parts;
}

}  // namespace detail

struct FocusSet {
  std::string id;
  std::string target_id;
  SamplingConfig config;
  std::vector<FocusPoint> points;
};

struct RunRecord {
  std::string id;
  std::string start_id;
  std::string job_id;
  TrainConfig config;
  std::shared_ptr<TrainProgress> progress;
  std::string state = "running";  // running | completed | failed | cancelled | stale
  std::optional<TrainRun> result;
  std::vector<std::string> target_ids;
  json error;
};

struct Session {
  std::string id;
  NetworkArch arch{{2, 4, 3, 1}, Activation::sigmoid, LossKind::mse};
  std::string expr_text = "sin(x)+sin(y)";
  DataConfig data_config;
  std::shared_ptr<const DataSplit> data;
  std::uint64_t generation = 0;  // bumped by arch/data changes

  std::vector<TargetPoint> points;
  std::map<std::string, FocusSet> focus_sets;
  std::map<std::string, RunRecord> runs;
  std::map<std::string, EigenResult> eigen;  // keyed by eigen id
  std::map<std::string, std::string> eigen_target;
  std::size_t next_point = 0, next_focus = 0, next_run = 0;

  mutable std::shared_mutex mu;

  // LRU of serialized view payloads keyed by request hash.
  std::mutex cache_mu;
  std::list<std::pair<std::string, std::string>> cache;

  const TargetPoint* find_point(const std::string& pid) const {
    for (const auto& p : points)
      if (p.id == pid) return &p;
    return nullptr;
  }
};

class Service {
 public:
  explicit Service(ServiceConfig cfg = {}) : cfg_(std::move(cfg)), jobs_(cfg_.max_jobs) {}

  Response handle(const Request& req) {
    try {
      const bool mutating = req.method == "POST" || req.method == "PUT" || req.method == "DELETE";
      std::string token_key;
      std::string token = req.idempotency_key;
      if (mutating && token.empty() && req.body.find("request_token") != std::string::npos) {
        const auto j = json::parse(req.body, nullptr, false);
        if (j.is_object() && j.contains("request_token") && j["request_token"].is_string())
          token = j["request_token"].get<std::string>();
      }
      if (mutating && !token.empty()) {
        token_key = req.method + " " + req.path + " " + token;
        std::lock_guard lock(tokens_mu_);
        if (auto it = tokens_.find(token_key); it != tokens_.end()) return it->second;
      }
      Response r = route(req);
      if (!token_key.empty() && r.status < 300) {
        std::lock_guard lock(tokens_mu_);
        tokens_.emplace(token_key, r);
      }
      return r;
    } catch (const NotFound& e) {
      return error(404, e);
    } catch (const Conflict& e) {
      return error(409, e);
    } catch (const IncompatibleArchError& e) {
      return error(409, e);
    } catch (const SyntaxError& e) {
      json body = error_body(e);
      body["error"]["position"] = e.position();
      return {400, body.dump()};
    } catch (const ArgumentError& e) {
      json body = error_body(e);
      body["error"]["field"] = e.field();
      return {400, body.dump()};
    } catch (const ParseError& e) {
      json body = error_body(e);
      body["error"]["line"] = e.line();
      body["error"]["column"] = e.column();
      return {400, body.dump()};
    } catch (const Error& e) {
      return error(400, e);
    } catch (const json::exception& e) {
      return {400, json{{"error", {{"kind", "argument"}, {"message", e.what()}}}}.dump()};
    }
  }

  const ServiceConfig& config() const { return cfg_; }
  JobManager& jobs() { return jobs_; }

 private:
  static json error_body(const Error& e) { return {{"error", {{"kind", e.kind()}, {"message", e.what()}}}}; }
  static Response error(int status, const Error& e) { return {status, error_body(e).dump()}; }
  static Response ok(const json& j, int status = 200) { return {status, j.dump()}; }

  static json parse_body(const Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw ArgumentError("body", std::string("invalid JSON: ") + e.what());
    }
  }

  Response route(const Request& req) {
    const auto p = detail::split_path(req.path);
    const auto& m = req.method;
    auto is = [&](std::initializer_list<std::string_view> pattern) {
      if (pattern.size() != p.size()) return false;
      std::size_t i = 0;
      for (auto seg : pattern) {
        if (seg != "*" && seg != p[i]) return false;
        ++i;
      }
      return true;
    };

    if (m == "GET" && is({"health"})) return ok({{"status", "ok"}});
    if (is({"jobs", "*"})) {
      if (m == "GET") {
        auto j = jobs_.describe(p[1]);
        if (!j) throw NotFound("unknown job '" + p[1] + "'");
        return ok(*j);
      }
      if (m == "DELETE") {
        if (!jobs_.cancel(p[1])) throw NotFound("unknown job '" + p[1] + "'");
        return ok({{"id", p[1]}, {"cancel_requested", true}});
      }
    }
    if (m == "POST" && is({"session"})) return create_session(parse_body(req));
    if (p.size() >= 2 && p[0] == "session") {
      auto s = session(p[1]);
      const json body = (m == "POST" || m == "PUT") ? parse_body(req) : json::object();
      if (p.size() == 2) {
        if (m == "GET") return ok(describe_session(*s));
        if (m == "DELETE") return delete_session(p[1]);
      }
      if (m == "PUT" && is({"session", "*", "arch"})) return put_arch(*s, body);
      if (is({"session", "*", "data"})) {
        if (m == "PUT") return put_data(*s, body);
        if (m == "GET") return get_data(*s);
      }
      if (is({"session", "*", "targetpoints"})) {
        if (m == "POST") return create_target_point(*s, body);
        if (m == "GET") return list_target_points(*s);
      }
      if (m == "GET" && is({"session", "*", "targetpoints", "*"})) return get_target_point(*s, p[3]);
      if (m == "POST" && is({"session", "*", "train"})) return start_training(s, body);
      if (m == "GET" && is({"session", "*", "runs"})) return list_runs(*s);
      if (m == "GET" && is({"session", "*", "runs", "*"})) return get_run(*s, p[3]);
      if (m == "POST" && is({"session", "*", "focuspoints"})) return create_focus_set(*s, body);
      if (m == "GET" && is({"session", "*", "focuspoints", "*"})) return get_focus_set(*s, p[3]);
      if (m == "POST" && p.size() == 4 && p[2] == "views") return view(s, p[3], body);
      if (m == "GET" && is({"session", "*", "prediction", "*"})) return prediction(*s, p[3], req.query);
      if (m == "POST" && is({"session", "*", "export"})) return export_points(*s, body);
      if (m == "POST" && is({"session", "*", "import"})) return import_points(*s, body);
    }
    throw NotFound("no route for " + m + " " + req.path);
  }

  // ---- sessions --------------------------------------------------------

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return it->second;
  }

  static void regenerate_data(Session& s) {
    s.data_config.validate();
    s.data = std::make_shared<const DataSplit>(generate(s.data_config));
  }

  Response create_session(const json& body) {
    auto s = std::make_shared<Session>();
    s->data_config.expr = parse_expr(s->expr_text);
    s->data_config.seed = cfg_.seed;
    regenerate_data(*s);
    {
      std::lock_guard lock(sessions_mu_);
      s->id = "s" + std::to_string(++session_counter_);
      sessions_[s->id] = s;
    }
    // Optional initial configuration in the same call.
    detail::Fields f(body);
    if (f.has("arch")) put_arch(*s, body.at("arch"));
    if (f.has("data")) put_data(*s, body.at("data"));
    std::shared_lock lock(s->mu);
    return ok(describe_session(*s, false), 201);
  }

  Response delete_session(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(sessions_mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
      s = it->second;
      sessions_.erase(it);
    }
    std::unique_lock lock(s->mu);
    for (auto& [rid, run] : s->runs) jobs_.cancel(run.job_id);
    return ok({{"deleted", id}});
  }

  static json arch_json(const NetworkArch& arch) {
    json j = arch_to_json(arch);
    j["param_count"] = param_count(arch);
    j["bias_count"] = bias_count(arch);
    j["labels"] = param_labels_json(arch);
    return j;
  }

  static json data_json(const Session& s) {
    return {{"expr", s.expr_text},
            {"n_train", s.data_config.n_train},
            {"n_test", s.data_config.n_test},
            {"range", {s.data_config.range_lo, s.data_config.range_hi}},
            {"seed", s.data_config.seed}};
  }

  json describe_session(const Session& s, bool lock = true) const {
    std::shared_lock<std::shared_mutex> guard;
    if (lock) guard = std::shared_lock(s.mu);
    json points = json::array();
    for (const auto& p : s.points) points.push_back(target_point_to_json(p, false));
    json runs = json::array();
    for (const auto& [id, r] : s.runs) runs.push_back({{"id", id}, {"state", r.state}, {"job_id", r.job_id}});
    json focus = json::array();
    for (const auto& [id, f] : s.focus_sets) focus.push_back({{"id", id}, {"target_id", f.target_id}});
    return {{"session_id", s.id},   {"arch", arch_json(s.arch)}, {"data", data_json(s)},
            {"target_points", points}, {"runs", runs},           {"focus_sets", focus}};
  }

  // Everything derived from the old network or data is dropped.
  void clear_dependents(Session& s) {
    for (auto& [rid, run] : s.runs) jobs_.cancel(run.job_id);
    s.points.clear();
    s.focus_sets.clear();
    s.runs.clear();
    s.eigen.clear();
    s.eigen_target.clear();
    ++s.generation;
    std::lock_guard lock(s.cache_mu);
    s.cache.clear();
  }

  Response put_arch(Session& s, const json& body) {
    detail::Fields f(body);
    if (!f.has("layers")) throw ArgumentError("layers", "is required");
    const auto& jl = body.at("layers");
    if (!jl.is_array()) throw ArgumentError("layers", "must be an array of positive integers");
    std::vector<std::size_t> layers;
    for (const auto& x : jl) {
      if (!x.is_number_integer() || x.get<std::int64_t>() < 1)
        throw ArgumentError("layers", "must be an array of positive integers");
      layers.push_back(x.get<std::size_t>());
    }
    NetworkArch arch(layers, activation_from_string(f.string("activation", std::string("sigmoid"))),
                     loss_from_string(f.string("loss", std::string("mse"))));
    if (arch.input_dim() != 2) throw ArgumentError("layers", "first layer must have 2 inputs (x, y)");
    if (arch.output_dim() != 1) throw ArgumentError("layers", "last layer must have 1 output");
    std::unique_lock lock(s.mu);
    s.arch = arch;
    clear_dependents(s);
    return ok({{"arch", arch_json(s.arch)}});
  }

  Response put_data(Session& s, const json& body) {
    detail::Fields f(body);
    DataConfig cfg;
    std::string text;
    {
      std::shared_lock lock(s.mu);
      cfg = s.data_config;
      text = s.expr_text;
    }
    if (f.has("expr")) {
      text = f.string("expr");
      cfg.expr = parse_expr(text);
    }
    cfg.n_train = f.unsigned_int("n_train", cfg.n_train);
    cfg.n_test = f.unsigned_int("n_test", cfg.n_test);
    if (f.has("range")) {
      const auto r = f.numbers("range");
      if (r.size() != 2) throw ArgumentError("range", "must be [lo, hi]");
      cfg.range_lo = r[0];
      cfg.range_hi = r[1];
    }
    cfg.seed = f.unsigned_int("seed", cfg.seed);
    cfg.validate();
    auto split = std::make_shared<const DataSplit>(generate(cfg));
    const auto grid = target_grid(cfg.expr, 32, cfg.range_lo, cfg.range_hi);

    std::unique_lock lock(s.mu);
    s.data_config = cfg;
    s.expr_text = text;
    s.data = split;
    // Points survive a data change; their losses are recomputed.
    auto points = std::move(s.points);
    clear_dependents(s);
    for (auto& p : points) {
      p.train_loss = loss(s.arch, p.weights, s.data->train);
      p.test_loss = loss(s.arch, p.weights, s.data->test);
    }
    s.points = std::move(points);
    return ok({{"data", data_json(s)}, {"target_grid", grid_to_json(grid)}});
  }

  Response get_data(Session& s) {
    std::shared_lock lock(s.mu);
    const auto grid = target_grid(s.data_config.expr, 32, s.data_config.range_lo, s.data_config.range_hi);
    return ok({{"data", data_json(s)}, {"target_grid", grid_to_json(grid)}});
  }

  // ---- target points ---------------------------------------------------

  TargetPoint make_point(Session& s, WeightVector w, std::string name, Provenance prov) {
    TargetPoint p;
    p.id = "tp-" + std::to_string(++s.next_point);
    p.name = name.empty() ? p.id : std::move(name);
    p.train_loss = loss(s.arch, w, s.data->train);
    p.test_loss = loss(s.arch, w, s.data->test);
    p.l2_norm = l2_norm(w);
    p.weights = std::move(w);
    p.arch_fingerprint = arch_fingerprint(s.arch);
    p.provenance = std::move(prov);
    p.created_at = detail::now_iso8601();
    return p;
  }

  Response create_target_point(Session& s, const json& body) {
    detail::Fields f(body);
    const std::string kind = f.string("kind", std::string("random"));
    const double range = f.number("range", 1.0);
    const std::uint64_t seed = f.unsigned_int("seed", cfg_.seed);
    const std::string name = f.string("name", std::string{});
    if (kind != "random" && kind != "zero") throw ArgumentError("kind", "must be 'random' or 'zero'");
    if (!(range > 0.0)) throw ArgumentError("range", "must be positive");

    std::unique_lock lock(s.mu);
    WeightVector w(param_count(s.arch), 0.0);
    Provenance prov{ProvenanceKind::zero_vector, {}, 0};
    if (kind == "random") {
      Rng rng(seed, Stream::init);
      for (auto& x : w) x = rng.uniform(-range, range);
      prov.kind = ProvenanceKind::random_init;
    }
    s.points.push_back(make_point(s, std::move(w), name, prov));
    return ok(target_point_to_json(s.points.back()), 201);
  }

  Response list_target_points(Session& s) {
    std::shared_lock lock(s.mu);
    json out = json::array();
    for (const auto& p : s.points) out.push_back(target_point_to_json(p, false));
    return ok({{"target_points", out}});
  }

  Response get_target_point(Session& s, const std::string& id) {
    std::shared_lock lock(s.mu);
    const auto* p = s.find_point(id);
    if (!p) throw NotFound("unknown target point '" + id + "'");
    return ok(target_point_to_json(*p));
  }

  static const TargetPoint& point_or_404(const Session& s, const std::string& id, const char* field) {
    const auto* p = s.find_point(id);
    if (!p) throw NotFound(std::string(field) + ": unknown target point '" + id + "'");
    return *p;
  }

  // ---- training --------------------------------------------------------

  static TrainConfig train_config_from(const detail::Fields& f, std::uint64_t default_seed) {
    TrainConfig c;
    c.algorithm = algorithm_from_string(f.string("algorithm", std::string("adam")));
    c.learning_rate = f.number("learning_rate", c.learning_rate);
    c.batch_size = f.unsigned_int("batch_size", c.batch_size);
    c.epochs = f.unsigned_int("epochs", c.epochs);
    c.checkpoint_count = f.unsigned_int("checkpoint_count", c.checkpoint_count);
    c.seed = f.unsigned_int("seed", default_seed);
    if (f.has("loss_threshold")) c.loss_threshold = f.number("loss_threshold");
    if (f.has("timeout_ms")) c.timeout = std::chrono::milliseconds(f.unsigned_int("timeout_ms"));
    if (!(c.learning_rate > 0.0)) throw ArgumentError(f.path("learning_rate"), "must be positive");
    if (c.checkpoint_count < 2) throw ArgumentError(f.path("checkpoint_count"), "must be at least 2");
    return c;
  }

  Response start_training(const std::shared_ptr<Session>& s, const json& body) {
    detail::Fields f(body);
    const std::string start_id = f.string("start_id");
    const auto cfg = train_config_from(f.object("config"), cfg_.seed);

    std::unique_lock lock(s->mu);
    const auto& start = point_or_404(*s, start_id, "start_id");
    try {
      cfg.validate(s->data->train.size());
    } catch (const ArgumentError& e) {
      throw ArgumentError("config." + e.field(), e.what());
    }
    RunRecord run;
    run.id = "run-" + std::to_string(++s->next_run);
    run.start_id = start_id;
    run.config = cfg;
    run.progress = std::make_shared<TrainProgress>();

    const NetworkArch arch = s->arch;
    const auto data = s->data;
    const WeightVector w0 = start.weights;
    const std::uint64_t generation = s->generation;
    const std::string run_id = run.id;
    std::weak_ptr<Session> weak = s;
    auto progress = run.progress;

    run.job_id = jobs_.submit(
        "train",
        [this, weak, arch, data, w0, cfg, generation, run_id, progress](std::stop_token stop) {
          json error;
          std::optional<TrainRun> result;
          try {
            result = train(arch, w0, data->train, cfg, progress.get(), stop);
          } catch (const Error& e) {
            error = {{"kind", e.kind()}, {"message", e.what()}};
          }
          auto sp = weak.lock();
          if (!sp) return json{{"run_id", run_id}, {"state", "stale"}};
          std::unique_lock lock(sp->mu);
          auto it = sp->runs.find(run_id);
          if (it == sp->runs.end() || sp->generation != generation) return json{{"run_id", run_id}, {"state", "stale"}};
          auto& rec = it->second;
          if (!result) {
            rec.state = "failed";
            rec.error = error;
            throw Error(error["message"].get<std::string>());
          }
          for (const auto& cp : result->checkpoints) {
            auto p = make_point(*sp, cp.weights, run_id + " @ epoch " + std::to_string(cp.epoch),
                                Provenance{ProvenanceKind::training, run_id, cp.epoch});
            rec.target_ids.push_back(p.id);
            sp->points.push_back(std::move(p));
          }
          rec.state = result->termination == Termination::cancelled ? "cancelled" : "completed";
          rec.result = std::move(result);
          return run_json(rec);
        },
        [progress] {
          const auto snap = progress->snapshot();
          return json{{"epoch", snap.epoch}, {"total_epochs", snap.total_epochs}};
        });
    const json reply = {{"run_id", run.id}, {"job_id", run.job_id}};
    s->runs.emplace(run.id, std::move(run));
    return ok(reply, 202);
  }

  static json run_json(const RunRecord& r) {
    json j = {{"run_id", r.id},
              {"job_id", r.job_id},
              {"start_id", r.start_id},
              {"state", r.state},
              {"config", train_config_to_json(r.config)}};
    if (r.result) {
      j["epoch"] = r.result->epochs_run();
      j["initial_loss"] = r.result->initial_loss;
      j["loss_curve"] = r.result->loss_curve;
      json cps = json::array();
      for (std::size_t i = 0; i < r.result->checkpoints.size(); ++i) {
        const auto& cp = r.result->checkpoints[i];
        json c = {{"epoch", cp.epoch}, {"train_loss", cp.train_loss}};
        if (i < r.target_ids.size()) c["target_id"] = r.target_ids[i];
        cps.push_back(std::move(c));
      }
      j["checkpoints"] = std::move(cps);
      j["termination"] = to_string(r.result->termination);
      j["target_point_ids"] = r.target_ids;
    } else {
      const auto snap = r.progress->snapshot();
      j["epoch"] = snap.epoch;
      j["total_epochs"] = snap.total_epochs;
      j["loss_curve"] = snap.loss_curve;
      json cps = json::array();
      for (auto e : snap.checkpoint_epochs) cps.push_back({{"epoch", e}});
      j["checkpoints"] = std::move(cps);
      if (!r.error.is_null()) j["error"] = r.error;
    }
    return j;
  }

  Response list_runs(Session& s) {
    std::shared_lock lock(s.mu);
    json out = json::array();
    for (const auto& [id, r] : s.runs) out.push_back({{"run_id", id}, {"state", r.state}, {"job_id", r.job_id}});
    return ok({{"runs", out}});
  }

  Response get_run(Session& s, const std::string& id) {
    std::shared_lock lock(s.mu);
    auto it = s.runs.find(id);
    if (it == s.runs.end()) throw NotFound("unknown run '" + id + "'");
    return ok(run_json(it->second));
  }

  // ---- focus points ----------------------------------------------------

  static SamplingConfig sampling_config_from(const detail::Fields& f, std::uint64_t default_seed) {
    SamplingConfig c;
    c.algorithm = sampling_from_string(f.string("algorithm", std::string("sobol")));
    c.count = f.unsigned_int("count", c.count);
    c.range = f.number("range", c.range);
    c.seed = f.unsigned_int("seed", default_seed);
    c.mixed_levels = f.unsigned_int("mixed_levels", c.mixed_levels);
    try {
      c.validate();
    } catch (const ArgumentError& e) {
      throw ArgumentError(f.path(e.field().c_str()), e.what());
    }
    return c;
  }

  static json focus_set_json(const FocusSet& fs, std::size_t dim_a, std::size_t dim_b) {
    json pts = json::array();
    std::vector<WeightVector> weights;
    for (std::size_t i = 0; i < fs.points.size(); ++i) {
      pts.push_back({{"id", fs.id + "/" + std::to_string(i)}, {"loss", fs.points[i].loss},
                     {"weights", fs.points[i].weights}});
      weights.push_back(fs.points[i].weights);
    }
    json proj = json::array();
    for (const auto& [a, b] : projection_2d(weights, dim_a, dim_b)) proj.push_back({a, b});
    return {{"focus_set_id", fs.id},
            {"target_id", fs.target_id},
            {"config", sampling_config_to_json(fs.config)},
            {"points", std::move(pts)},
            {"projection", {{"dims", {dim_a, dim_b}}, {"points", std::move(proj)}}}};
  }

  Response create_focus_set(Session& s, const json& body) {
    detail::Fields f(body);
    const std::string target_id = f.string("target_id");
    const auto cfg = sampling_config_from(f, cfg_.seed);
    const std::size_t dim_a = f.unsigned_int("dim_a", 0), dim_b = f.unsigned_int("dim_b", 1);

    NetworkArch arch;
    std::shared_ptr<const DataSplit> data;
    WeightVector center;
    std::uint64_t generation;
    {
      std::shared_lock lock(s.mu);
      center = point_or_404(s, target_id, "target_id").weights;
      arch = s.arch;
      data = s.data;
      generation = s.generation;
    }
    const auto dim = center.size();
    if (dim_a >= dim || dim_b >= dim) throw ArgumentError("dim_a", "projection dimension out of range");
    FocusSet fs;
    fs.target_id = target_id;
    fs.config = cfg;
    fs.points = sample_focus_points(NetworkObjective(arch, data->train), center, cfg);

    std::unique_lock lock(s.mu);
    if (s.generation != generation) throw Conflict("session changed while sampling; retry");
    fs.id = "fs-" + std::to_string(++s.next_focus);
    auto reply = focus_set_json(fs, dim_a, dim_b);
    s.focus_sets.emplace(fs.id, std::move(fs));
    return ok(reply, 201);
  }

  Response get_focus_set(Session& s, const std::string& id) {
    std::shared_lock lock(s.mu);
    auto it = s.focus_sets.find(id);
    if (it == s.focus_sets.end()) throw NotFound("unknown focus set '" + id + "'");
    return ok(focus_set_json(it->second, 0, 1));
  }

  // ---- views -----------------------------------------------------------

  using ViewFn = std::function<json(std::stop_token)>;

  Response view(const std::shared_ptr<Session>& s, const std::string& kind, const json& body) {
    detail::Fields f(body);
    const bool async = f.boolean("async", false);
    json key_body = body;
    key_body.erase("async");
    key_body.erase("request_token");

    std::uint64_t generation;
    ViewFn compute;
    {
      std::shared_lock lock(s->mu);
      generation = s->generation;
      if (kind == "slices")
        compute = slices_view(*s, f);
      else if (kind == "interpolation")
        compute = interpolation_view(*s, f);
      else if (kind == "plane")
        compute = plane_view(*s, f, key_body);
      else if (kind == "eigen")
        compute = eigen_view(s, f, key_body);
      else if (kind == "evslices")
        compute = evslices_view(*s, f);
      else
        throw NotFound("unknown view '" + kind + "'");
    }
    const std::string key = kind + "|" + std::to_string(generation) + "|" + key_body.dump();
    if (auto hit = cache_get(*s, key)) return {200, *hit};

    if (async) {
      std::weak_ptr<Session> weak = s;
      const auto job = jobs_.submit("view:" + kind, [this, weak, key, compute](std::stop_token stop) {
        json payload = compute(stop);
        if (auto sp = weak.lock()) cache_put(*sp, key, payload.dump());
        return payload;
      });
      return ok({{"job_id", job}}, 202);
    }
    const std::string payload = compute({}).dump();
    cache_put(*s, key, payload);
    return {200, payload};
  }

  std::optional<std::string> cache_get(Session& s, const std::string& key) {
    std::lock_guard lock(s.cache_mu);
    for (auto it = s.cache.begin(); it != s.cache.end(); ++it) {
      if (it->first == key) {
        s.cache.splice(s.cache.begin(), s.cache, it);
        return s.cache.front().second;
      }
    }
    return std::nullopt;
  }

  void cache_put(Session& s, const std::string& key, std::string payload) {
    std::lock_guard lock(s.cache_mu);
    for (auto it = s.cache.begin(); it != s.cache.end(); ++it)
      if (it->first == key) {
        s.cache.erase(it);
        break;
      }
    s.cache.emplace_front(key, std::move(payload));
    while (s.cache.size() > cfg_.view_cache_size) s.cache.pop_back();
  }

  // Each *_view validates and snapshots under the caller's shared lock and
  // returns a closure that computes without touching the session.

  ViewFn slices_view(const Session& s, const detail::Fields& f) {
    const std::string target_id = f.string("target_id");
    const auto& target = point_or_404(s, target_id, "target_id");
    const double range = f.number("range", 1.0);
    const std::size_t resolution = f.unsigned_int("resolution", 81);
    if (resolution % 2 == 0) throw ArgumentError("resolution", "must be odd (offset 0 must be a sample node)");
    if (!(range > 0.0)) throw ArgumentError("range", "must be positive");

    std::vector<SliceOrigin> origins{{target.id, target.weights, true}};
    std::string focus_id;
    if (f.has("focus_set_id")) {
      focus_id = f.string("focus_set_id");
      auto it = s.focus_sets.find(focus_id);
      if (it == s.focus_sets.end()) throw NotFound("focus_set_id: unknown focus set '" + focus_id + "'");
      if (it->second.target_id != target_id)
        throw ArgumentError("focus_set_id", "focus set belongs to target point '" + it->second.target_id + "'");
      for (std::size_t i = 0; i < it->second.points.size(); ++i)
        origins.push_back({focus_id + "/" + std::to_string(i), it->second.points[i].weights, false});
    }
    return [arch = s.arch, data = s.data, origins = std::move(origins), target_id, focus_id, range,
            resolution](std::stop_token stop) {
      NetworkObjective obj(arch, data->train);
      const auto charts = axis_slices(obj, origins, range, resolution, stop);
      json j = {{"view", "slices"},
                {"target_id", target_id},
                {"range", range},
                {"resolution", resolution},
                {"offsets", symmetric_offsets(range, resolution)},
                {"charts", slice_charts_to_json(charts)}};
      j["focus_set_id"] = focus_id.empty() ? json(nullptr) : json(focus_id);
      return j;
    };
  }

  ViewFn interpolation_view(const Session& s, const detail::Fields& f) {
    const std::string id0 = f.string("theta0_id"), id1 = f.string("theta1_id");
    const auto& p0 = point_or_404(s, id0, "theta0_id");
    const auto& p1 = point_or_404(s, id1, "theta1_id");
    std::vector<double> alphas;
    if (f.has("alphas")) {
      alphas = f.numbers("alphas");
      if (alphas.empty()) throw ArgumentError("alphas", "must not be empty");
      for (std::size_t i = 1; i < alphas.size(); ++i)
        if (!(alphas[i] > alphas[i - 1])) throw ArgumentError("alphas", "must be strictly increasing");
    } else {
      alphas = linear_alphas(f.number("alpha_lo", -0.1), f.number("alpha_hi", 1.1), f.unsigned_int("count", 121));
    }
    return [arch = s.arch, data = s.data, w0 = p0.weights, w1 = p1.weights, id0, id1,
            alphas = std::move(alphas)](std::stop_token stop) {
      NetworkObjective train_obj(arch, data->train), test_obj(arch, data->test);
      const auto path = interpolate(train_obj, test_obj, w0, w1, alphas, stop);
      json j = interpolation_to_json(path);
      j["view"] = "interpolation";
      j["theta0_id"] = id0;
      j["theta1_id"] = id1;
      return j;
    };
  }

  ViewFn plane_view(const Session& s, const detail::Fields& f, json& key_body) {
    const std::string target_id = f.string("target_id");
    const auto& target = point_or_404(s, target_id, "target_id");
    const double extent = f.number("extent", 1.0);
    const std::size_t resolution = f.unsigned_int("resolution", 41);
    const bool orthogonalize = f.boolean("orthogonalize", false);
    if (resolution % 2 == 0) throw ArgumentError("resolution", "must be odd (the center must be a grid node)");
    if (!(extent > 0.0)) throw ArgumentError("extent", "must be positive");
    std::uint64_t seed;
    if (f.has("seed")) {
      seed = f.unsigned_int("seed");
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
      key_body["seed"] = seed;  // unseeded requests never hit the cache
    }
    return [arch = s.arch, data = s.data, w = target.weights, target_id, extent, resolution, orthogonalize,
            seed](std::stop_token stop) {
      NetworkObjective obj(arch, data->train);
      const auto plane = random_plane_slice(obj, w, seed, resolution, extent, orthogonalize, stop);
      json j = plane_to_json(plane);
      j["view"] = "plane";
      j["target_id"] = target_id;
      j["orthogonalize"] = orthogonalize;
      return j;
    };
  }

  ViewFn eigen_view(const std::shared_ptr<Session>& s, const detail::Fields& f, const json& key_body) {
    const std::string target_id = f.string("target_id");
    const auto& target = point_or_404(*s, target_id, "target_id");
    EigenSolveOptions opt;
    opt.k = f.unsigned_int("k", opt.k);
    opt.tol = f.number("tol", opt.tol);
    opt.max_iter = f.unsigned_int("max_iter", opt.max_iter);
    opt.seed = f.unsigned_int("seed", cfg_.seed);
    if (opt.k < 1 || opt.k > param_count(s->arch))
      throw ArgumentError("k", "must be between 1 and " + std::to_string(param_count(s->arch)));
    const std::string eigen_id = "ev-" + detail::fnv_hex(key_body.dump() + "|" + std::to_string(s->generation));
    std::weak_ptr<Session> weak = s;
    return [weak, arch = s->arch, data = s->data, w = target.weights, target_id, opt, eigen_id,
            generation = s->generation](std::stop_token) {
      NetworkObjective obj(arch, data->train);
      auto result = top_eigenpairs(obj, w, opt);
      if (auto sp = weak.lock()) {
        std::unique_lock lock(sp->mu);
        if (sp->generation == generation) {
          sp->eigen[eigen_id] = result;
          sp->eigen_target[eigen_id] = target_id;
        }
      }
      json j = eigen_to_json(result);
      j["view"] = "eigen";
      j["eigen_id"] = eigen_id;
      j["target_id"] = target_id;
      j["k"] = opt.k;
      return j;
    };
  }

  ViewFn evslices_view(const Session& s, const detail::Fields& f) {
    const std::string eigen_id = f.string("eigen_id");
    auto it = s.eigen.find(eigen_id);
    if (it == s.eigen.end())
      throw NotFound("eigen_id: unknown eigen result '" + eigen_id + "' (request views/eigen first)");
    const std::string target_id = s.eigen_target.at(eigen_id);
    const auto& target = point_or_404(s, target_id, "target_id");
    const double range = f.number("range", 1.0);
    const std::size_t resolution = f.unsigned_int("resolution", 81);
    const bool include_min = f.boolean("include_min", true);
    if (resolution % 2 == 0) throw ArgumentError("resolution", "must be odd (offset 0 must be a sample node)");
    if (!(range > 0.0)) throw ArgumentError("range", "must be positive");

    std::vector<WeightVector> dirs = it->second.eigenvectors;
    std::vector<double> values = it->second.eigenvalues;
    if (include_min && !it->second.min_eigenvector.empty() && it->second.lambda_min < values.back()) {
      dirs.push_back(it->second.min_eigenvector);
      values.push_back(it->second.lambda_min);
    }
    return [arch = s.arch, data = s.data, w = target.weights, dirs = std::move(dirs), values = std::move(values),
            eigen_id, target_id, range, resolution](std::stop_token stop) {
      NetworkObjective obj(arch, data->train);
      const auto ds = direction_slices(obj, w, dirs, range, resolution, stop);
      json j = direction_slices_to_json(ds, values);
      j["view"] = "evslices";
      j["eigen_id"] = eigen_id;
      j["target_id"] = target_id;
      j["range"] = range;
      j["resolution"] = resolution;
      return j;
    };
  }

  Response prediction(Session& s, const std::string& id, const std::map<std::string, std::string>& query) {
    std::size_t resolution = 32;
    if (auto it = query.find("resolution"); it != query.end()) {
      try {
        resolution = std::stoul(it->second);
      } catch (const std::exception&) {
        throw ArgumentError("resolution", "must be a positive integer");
      }
      if (resolution < 1 || resolution > 512) throw ArgumentError("resolution", "must be between 1 and 512");
    }
    std::shared_lock lock(s.mu);
    const auto& p = point_or_404(s, id, "target_id");
    const auto grid = prediction_grid(s.arch, p.weights, resolution, s.data_config.range_lo, s.data_config.range_hi);
    return ok({{"target_id", id}, {"grid", grid_to_json(grid)}});
  }

  // ---- store -----------------------------------------------------------

  std::filesystem::path data_file(const std::string& name) const {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
        name.front() == '.')
      throw ArgumentError("filename", "must be a plain file name");
    std::string file = name;
    if (file.size() < 9 || file.compare(file.size() - 9, 9, ".ftp.json") != 0) file += ".ftp.json";
    return cfg_.data_dir / file;
  }

  Response export_points(Session& s, const json& body) {
    detail::Fields f(body);
    std::shared_lock lock(s.mu);
    std::vector<TargetPoint> selected;
    if (f.has("ids")) {
      for (const auto& id : body.at("ids")) {
        if (!id.is_string()) throw ArgumentError("ids", "must be an array of strings");
        selected.push_back(point_or_404(s, id.get<std::string>(), "ids"));
      }
    } else {
      selected = s.points;
    }
    if (f.has("filename")) {
      const auto path = data_file(f.string("filename"));
      save_points(selected, s.arch, path);
      return ok({{"path", path.string()}, {"count", selected.size()}});
    }
    return ok({{"document", points_document(selected, s.arch)}, {"count", selected.size()}});
  }

  Response import_points(Session& s, const json& body) {
    detail::Fields f(body);
    NetworkArch arch;
    {
      std::shared_lock lock(s.mu);
      arch = s.arch;
    }
    std::vector<TargetPoint> loaded;
    if (f.has("filename"))
      loaded = load_points(data_file(f.string("filename")), arch);
    else if (f.has("document"))
      loaded = points_from_document(body.at("document").dump(), arch);
    else
      throw ArgumentError("document", "either 'filename' or 'document' is required");

    std::unique_lock lock(s.mu);
    if (s.arch != arch) throw Conflict("architecture changed during import; retry");
    json ids = json::array();
    for (auto& p : loaded) {
      auto np = make_point(s, std::move(p.weights), p.name, Provenance{ProvenanceKind::loaded, {}, 0});
      ids.push_back(np.id);
      s.points.push_back(std::move(np));
    }
    return ok({{"imported", ids}}, 201);
  }

  ServiceConfig cfg_;
  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t session_counter_ = 0;
  std::mutex tokens_mu_;
  std::unordered_map<std::string, Response> tokens_;
  JobManager jobs_;  // last: workers join before the state they touch goes away
};

}  // namespace losslens::api
