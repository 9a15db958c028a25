// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "losslens/api.hpp"
#include "losslens/dataset.hpp"
#include "losslens/hessian.hpp"
#include "losslens/http_server.hpp"
#include "losslens/landscape.hpp"
#include "losslens/network.hpp"
#include "losslens/optimizer.hpp"
#include "losslens/sampling.hpp"
#include "losslens/store.hpp"
#include "test_support.hpp"

using namespace losslens;
using json = nlohmann::json;
using testing_support::quadratic_fit_residual;

namespace {

const NetworkArch kArch({2, 4, 3, 1}, Activation::sigmoid, LossKind::mse);

const DataSplit& split() {
  static const DataSplit s = [] {
    DataConfig cfg;
    cfg.expr = parse_expr("sin(x)+sin(y)");
    cfg.n_train = 256;
    cfg.n_test = 256;
    cfg.seed = 0;
    return generate(cfg);
  }();
  return s;
}

WeightVector random_theta(std::uint64_t seed, double range = 1.0) {
  return testing_support::random_theta(kArch, seed, range);
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

bool last_layer(std::size_t index) {
  const auto label = label_of(kArch, index);
  return label.dst == 9;
}

// ---------------------------------------------------------------------------

void c1(Outcome& o) {
  o.detail << "params=" << param_count(kArch) << " biases=" << bias_count(kArch);
  o.check(param_count(kArch) == 31, "31 parameters");
  o.check(bias_count(kArch) == 8, "8 biases");
}

void c2(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    worst = std::max(worst, testing_support::max_fd_relative_error(kArch, random_theta(seed), split().train));
  o.detail << "max relative error " << worst;
  o.check(worst < 1e-6, "relative error < 1e-6");
}

void c3(Outcome& o) {
  const NetworkObjective obj(kArch, split().train);
  double worst_max = 0.0, worst_min = 0.0, worst_ratio = 0.0;
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    const auto theta = random_theta(seed);
    const auto dense = dense_hessian_oracle(obj, theta);
    const auto r = top_eigenpairs(obj, theta);
    const double d_max = dense.eigenvalues.front(), d_min = dense.eigenvalues.back();
    const double top = std::abs(d_max) >= std::abs(d_min) ? d_max : d_min;
    const double d_ratio = std::abs(d_min / d_max);
    worst_max = std::max({worst_max, std::abs(r.eigenvalues[0] - top) / std::abs(top),
                          std::abs(r.lambda_max - d_max) / std::abs(d_max)});
    worst_min = std::max(worst_min, std::abs(r.lambda_min - d_min) / std::abs(d_min));
    worst_ratio = std::max(worst_ratio, std::abs(r.convexity_ratio - d_ratio));
  }
  o.detail << "rel err lambda1 " << worst_max << ", lambda_min " << worst_min << ", ratio abs err " << worst_ratio;
  o.check(worst_max < 1e-3, "lambda1 within 1e-3");
  o.check(worst_min < 1e-3, "lambda_min within 1e-3");
  o.check(worst_ratio < 1e-2, "convexity ratio within 1e-2");
}

void c4(Outcome& o) {
  const NetworkObjective obj(kArch, split().train);
  const WeightVector zero(param_count(kArch), 0.0);

  std::vector<SliceOrigin> target = {{"zero", zero, true}};
  const auto charts = axis_slices(obj, target, 25.0, 81);
  double worst_fit = 0.0, worst_sat = 0.0;
  for (const auto& c : charts) {
    const auto& s = c.slices[0];
    if (last_layer(c.param_index)) {
      const double peak = *std::max_element(s.losses.begin(), s.losses.end());
      worst_fit = std::max(worst_fit, quadratic_fit_residual(s.offsets, s.losses) / peak);
    } else {
      worst_sat = std::max(worst_sat, std::abs(s.losses[80] - s.losses[72]));
    }
  }

  SamplingConfig cfg{SamplingAlgorithm::sobol, 500, 5.0, 0, 3};
  const auto focus = sample_around(zero, cfg);
  std::vector<SliceOrigin> origins = {{"zero", zero, true}};
  for (std::size_t i = 0; i < focus.size(); ++i) origins.push_back({"f" + std::to_string(i), focus[i], false});
  const auto all = axis_slices(obj, origins, 25.0, 81);
  std::size_t total = 0, below1 = 0, below01 = 0;
  double lowest = INFINITY;
  for (const auto& c : all)
    for (const auto& s : c.slices) {
      if (s.is_target) continue;
      const double m = *std::min_element(s.losses.begin(), s.losses.end());
      ++total;
      below1 += m < 1.0;
      below01 += m < 0.1;
      lowest = std::min(lowest, m);
    }
  const double frac = static_cast<double>(below1) / static_cast<double>(total);
  o.detail << "(a) max fit residual/max loss " << worst_fit << "; (b) max |L(25)-L(20)| " << worst_sat << "; (c) "
           << total << " focus slices, fraction of minima < 1.0 = " << frac << ", count < 0.1 = " << below01
           << ", lowest minimum " << lowest;
  o.check(worst_fit < 1e-9, "(a) quadratic last layer");
  o.check(worst_sat < 1e-3, "(b) saturation");
  o.check(frac < 0.05, "(c) fraction < 5%");
  o.check(below01 == 0, "(c) none below 0.1");
}

struct TrainedRun {
  WeightVector start, final;
  double final_loss = 0.0, grad_norm = 0.0;
};

// Adam lr 0.01 for 50k epochs from five seeded starts; computed once.
const std::vector<TrainedRun>& adam_runs() {
  static const std::vector<TrainedRun> runs = [] {
    std::vector<TrainedRun> out;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig cfg;
      cfg.algorithm = Algorithm::adam;
      cfg.learning_rate = 0.01;
      cfg.epochs = 50000;
      cfg.seed = seed;
      TrainedRun r;
      r.start = random_theta(seed);
      const auto run = train(kArch, r.start, split().train, cfg);
      r.final = run.checkpoints.back().weights;
      r.final_loss = run.loss_curve.back();
      r.grad_norm = l2_norm(gradient(kArch, r.final, split().train));
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

void c5(Outcome& o) {
  int good = 0;
  o.detail << "final losses:";
  for (const auto& r : adam_runs()) {
    good += r.final_loss <= 0.1;
    o.detail << " " << r.final_loss;
  }
  o.detail << " (" << good << "/5 <= 0.1)";
  o.check(good >= 3, ">= 3 of 5 seeds reach 0.1");
}

void c6(Outcome& o) {
  const auto& runs = adam_runs();
  const TrainedRun* chosen = nullptr;
  std::size_t index = 0;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].grad_norm <= 1e-4) {
      chosen = &runs[i];
      index = i;
      break;
    }
  if (!chosen) {
    o.check(false, "no run converged to gradient norm <= 1e-4");
    return;
  }
  const NetworkObjective obj(kArch, split().train);
  std::vector<SliceOrigin> origins = {{"min", chosen->final, true}};
  const auto charts = axis_slices(obj, origins, 1.0, 81);
  double worst = INFINITY;
  for (const auto& c : charts) {
    const auto& l = c.slices[0].losses;
    worst = std::min({worst, l[39] - l[40], l[41] - l[40]});
  }
  o.detail << "seed " << index << " |g|=" << chosen->grad_norm << ", min over slices of L(c+-1)-L(c) = " << worst;
  o.check(worst >= -1e-4, "valley property");
}

void c7(Outcome& o) {
  const NetworkObjective train_obj(kArch, split().train), test_obj(kArch, split().test);
  std::size_t checks = 0, failures = 0;
  auto expect = [&](double a, double b) {
    ++checks;
    failures += a != b;
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_theta(2 * seed, 2.0), b = random_theta(2 * seed + 1, 2.0);
    const auto alphas = linear_alphas();
    const auto path = interpolate(train_obj, test_obj, a, b, alphas);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      if (alphas[i] == 0.0) {
        expect(path.train_losses[i], train_obj.value(a));
        expect(path.test_losses[i], test_obj.value(a));
      }
      if (alphas[i] == 1.0) {
        expect(path.train_losses[i], train_obj.value(b));
        expect(path.test_losses[i], test_obj.value(b));
      }
    }
    SamplingConfig cfg{SamplingAlgorithm::sobol, 4, 0.5, 0, 3};
    std::vector<SliceOrigin> origins = {{"t", a, true}};
    for (const auto& f : sample_around(a, cfg)) origins.push_back({"f", f, false});
    for (const auto& c : axis_slices(train_obj, origins, 3.0, 41))
      for (std::size_t p = 0; p < c.slices.size(); ++p)
        expect(c.slices[p].losses[20], train_obj.value(origins[p].weights));
    const auto plane = random_plane_slice(train_obj, a, seed, 41, 1.0);
    expect(plane.at(20, 20), train_obj.value(a));
  }
  o.detail << checks << " identities, " << failures << " mismatches";
  o.check(failures == 0, "exact equality");
}

void c8(Outcome& o) {
  // scipy.stats.qmc.Sobol(2, scramble=False), rows 1..16 (row 0 is the origin).
  static const double ref[16][2] = {
      {.5, .5},       {.75, .25},     {.25, .75},   {.375, .375},  {.875, .875},   {.625, .125},
      {.125, .625},   {.1875, .3125}, {.6875, .8125}, {.9375, .0625}, {.4375, .5625}, {.3125, .1875},
      {.8125, .6875}, {.5625, .4375}, {.0625, .9375}, {.09375, .46875},
  };
  SobolSequence s(2);
  s.skip(1);
  int mismatches = 0;
  for (const auto& r : ref) {
    const auto p = s.next();
    mismatches += p[0] != r[0] || p[1] != r[1];
  }
  SobolSequence t(2);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 256; ++i) pts.push_back(t.next());
  int bad_boxes = 0;
  for (int a = 0; a <= 4; ++a) {
    const int nx = 1 << a, ny = 1 << (4 - a);
    std::vector<int> counts(nx * ny, 0);
    for (const auto& p : pts) counts[static_cast<int>(p[0] * nx) * ny + static_cast<int>(p[1] * ny)]++;
    for (int c : counts) bad_boxes += c != 16;
  }
  o.detail << "prefix mismatches " << mismatches << "/16, bad 1/16 boxes " << bad_boxes;
  o.check(mismatches == 0, "prefix");
  o.check(bad_boxes == 0, "elementary intervals");
}

void c9(Outcome& o) {
  std::vector<TargetPoint> pts;
  for (std::size_t i = 0; i < 10; ++i) {
    TargetPoint p;
    p.id = "tp-" + std::to_string(i + 1);
    p.name = p.id;
    p.weights = random_theta(1000 + i, 5.0);
    p.arch_fingerprint = arch_fingerprint(kArch);
    p.train_loss = loss(kArch, p.weights, split().train);
    p.test_loss = loss(kArch, p.weights, split().test);
    p.l2_norm = l2_norm(p.weights);
    pts.push_back(std::move(p));
  }
  const auto path = std::filesystem::temp_directory_path() / "losslens_acceptance.ftp.json";
  save_points(pts, kArch, path);
  const auto back = load_points(path, kArch);
  bool exact = back.size() == pts.size();
  for (std::size_t i = 0; exact && i < pts.size(); ++i)
    exact = std::memcmp(back[i].weights.data(), pts[i].weights.data(), pts[i].weights.size() * sizeof(double)) == 0;
  bool rejected = false;
  std::string message;
  try {
    load_points(path, NetworkArch({2, 4, 4, 1}));
  } catch (const IncompatibleArchError& e) {
    rejected = true;
    message = e.what();
  }
  std::filesystem::remove(path);
  o.detail << "10 points bitwise " << (exact ? "equal" : "DIFFERENT") << "; mismatch: " << message;
  o.check(exact, "bitwise round trip");
  o.check(rejected, "architecture mismatch rejected");
}

// One fresh service + HTTP server, a fixed seeded request script, and the raw
// view payloads it produced.
std::vector<std::string> api_script() {
  api::Service service(api::ServiceConfig{2, 0, std::filesystem::temp_directory_path(), 16});
  httplib::Server server;
  api::attach(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  struct Stopper {
    httplib::Server& s;
    std::thread& t;
    ~Stopper() {
      s.stop();
      t.join();
    }
  } stopper{server, t};
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(120, 0);
  auto post = [&](const std::string& path, const json& body) {
    auto r = client.Post(path, body.dump(), "application/json");
    if (!r) throw std::runtime_error("request failed: " + path + " (" + httplib::to_string(r.error()) + ")");
    return r->body;
  };
  std::vector<std::string> out;
  const std::string sid = json::parse(post("/session", json::object()))["session_id"];
  const std::string base = "/session/" + sid;
  const std::string a = json::parse(post(base + "/targetpoints", {{"kind", "random"}, {"seed", 11}}))["id"];
  const std::string b = json::parse(post(base + "/targetpoints", {{"kind", "random"}, {"seed", 12}}))["id"];
  const std::string fs = json::parse(post(base + "/focuspoints", {{"target_id", a}, {"count", 8}, {"range", 1.0}}))
      ["focus_set_id"];
  out.push_back(post(base + "/views/slices", {{"target_id", a}, {"focus_set_id", fs}, {"range", 2.0}}));
  out.push_back(post(base + "/views/interpolation", {{"theta0_id", a}, {"theta1_id", b}}));
  out.push_back(post(base + "/views/plane", {{"target_id", a}, {"seed", 5}, {"resolution", 21}}));
  const auto eig = post(base + "/views/eigen", {{"target_id", a}, {"k", 3}, {"seed", 2}});
  out.push_back(eig);
  out.push_back(post(base + "/views/evslices", {{"eigen_id", json::parse(eig)["eigen_id"]}, {"resolution", 21}}));
  auto pred = client.Get(base + "/prediction/" + a + "?resolution=16");
  out.push_back(pred ? pred->body : "");
  return out;
}

void c10(Outcome& o) {
  const auto first = api_script();
  const auto second = api_script();
  std::size_t same = 0, bytes = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    same += first[i] == second[i] && json::accept(first[i]) && !json::parse(first[i]).contains("error");
    bytes += first[i].size();
  }
  o.detail << same << "/" << first.size() << " view payloads byte-identical (" << bytes << " bytes)";
  o.check(same == first.size() && first.size() == second.size(), "byte-identical payloads");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"1 parameter accounting", c1}, {"2 gradient vs finite differences", c2},
      {"3 hessian oracle equivalence", c3}, {"4 zero-vector landscape", c4},
      {"5 training reaches low loss", c5}, {"6 valley property at minimizer", c6},
      {"7 endpoint identities", c7},     {"8 sobol verification", c8},
      {"9 store round trip", c9},        {"10 api determinism", c10},
  };
  // Optional arguments select criteria by number.
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const std::string number = name.substr(0, name.find(' '));
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
