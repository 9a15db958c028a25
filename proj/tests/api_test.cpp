#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "losslens/api.hpp"
#include "losslens/http_server.hpp"

using namespace losslens;
using json = nlohmann::json;

namespace {

struct Reply {
  int status;
  json body;
};

class ApiTest : public ::testing::Test {
 protected:
  api::Service service{api::ServiceConfig{2, 0, std::filesystem::temp_directory_path(), 16}};

  Reply call(const std::string& method, const std::string& path, const json& body = nullptr,
             const std::string& key = {}) {
    api::Request r;
    r.method = method;
    r.path = path;
    if (!body.is_null()) r.body = body.dump();
    r.idempotency_key = key;
    const auto out = service.handle(r);
    return {out.status, json::parse(out.body)};
  }

  std::string raw(const std::string& method, const std::string& path, const json& body) {
    api::Request r{method, path, body.dump(), {}, {}};
    return service.handle(r).body;
  }

  std::string new_session() {
    const auto r = call("POST", "/session", json::object());
    EXPECT_EQ(r.status, 201);
    return r.body["session_id"];
  }

  std::string new_point(const std::string& sid, const json& body = json::object()) {
    const auto r = call("POST", "/session/" + sid + "/targetpoints", body);
    EXPECT_EQ(r.status, 201) << r.body.dump();
    return r.body["id"];
  }

  json wait_job(const std::string& job) {
    for (int i = 0; i < 6000; ++i) {
      const auto r = call("GET", "/jobs/" + job);
      EXPECT_EQ(r.status, 200);
      const std::string st = r.body["status"];
      if (st != "queued" && st != "running") return r.body;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ADD_FAILURE() << "job did not finish";
    return {};
  }
};

}  // namespace

TEST_F(ApiTest, Health) {
  const auto r = call("GET", "/health");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
}

TEST_F(ApiTest, SessionDefaults) {
  const auto sid = new_session();
  const auto r = call("GET", "/session/" + sid);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["arch"]["param_count"], 31);
  EXPECT_EQ(r.body["arch"]["bias_count"], 8);
  EXPECT_EQ(r.body["arch"]["layers"], json({2, 4, 3, 1}));
  EXPECT_EQ(r.body["arch"]["labels"].size(), 31u);
  EXPECT_EQ(r.body["arch"]["labels"][30]["name"], "b9");
  EXPECT_EQ(r.body["data"]["expr"], "sin(x)+sin(y)");
  EXPECT_EQ(r.body["data"]["n_train"], 256);
  EXPECT_TRUE(r.body["target_points"].empty());
}

TEST_F(ApiTest, UnknownIdsAre404) {
  EXPECT_EQ(call("GET", "/session/nope").status, 404);
  EXPECT_EQ(call("GET", "/jobs/job-999").status, 404);
  EXPECT_EQ(call("GET", "/nowhere").status, 404);
  const auto sid = new_session();
  EXPECT_EQ(call("GET", "/session/" + sid + "/targetpoints/tp-9").status, 404);
  EXPECT_EQ(call("POST", "/session/" + sid + "/views/slices", {{"target_id", "tp-9"}}).status, 404);
  EXPECT_EQ(call("POST", "/session/" + sid + "/views/evslices", {{"eigen_id", "ev-0"}}).status, 404);
  EXPECT_EQ(call("DELETE", "/session/" + sid).status, 200);
  EXPECT_EQ(call("GET", "/session/" + sid).status, 404);
}

TEST_F(ApiTest, ValidationErrorsNameTheField) {
  const auto sid = new_session();
  const auto tp = new_point(sid);
  auto r = call("POST", "/session/" + sid + "/views/slices", {{"target_id", tp}, {"resolution", 80}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "resolution");

  r = call("PUT", "/session/" + sid + "/data", {{"expr", "sin(x) +"}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["position"], 8);

  r = call("POST", "/session/" + sid + "/train", {{"start_id", tp}, {"config", {{"learning_rate", -1.0}}}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "config.learning_rate");

  r = call("PUT", "/session/" + sid + "/arch", {{"layers", {3, 4, 1}}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "layers");

  r = call("POST", "/session/" + sid + "/focuspoints", {{"target_id", tp}, {"count", 0}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "count");

  api::Request bad{"POST", "/session/" + sid + "/targetpoints", "{not json", {}, {}};
  EXPECT_EQ(service.handle(bad).status, 400);
}

TEST_F(ApiTest, TargetPoints) {
  const auto sid = new_session();
  const auto zero = call("POST", "/session/" + sid + "/targetpoints", {{"kind", "zero"}, {"name", "origin"}});
  ASSERT_EQ(zero.status, 201);
  EXPECT_EQ(zero.body["name"], "origin");
  EXPECT_EQ(zero.body["l2_norm"], 0.0);
  EXPECT_EQ(zero.body["provenance"]["kind"], "zero_vector");
  EXPECT_EQ(zero.body["weights"].size(), 31u);

  const auto a = call("GET", "/session/" + sid + "/targetpoints/" + new_point(sid, {{"seed", 3}}));
  const auto b = call("GET", "/session/" + sid + "/targetpoints/" + new_point(sid, {{"seed", 3}}));
  EXPECT_EQ(a.body["weights"], b.body["weights"]);
  EXPECT_NE(a.body["id"], b.body["id"]);
  EXPECT_EQ(call("GET", "/session/" + sid + "/targetpoints").body["target_points"].size(), 3u);
}

TEST_F(ApiTest, SlicesViewIsDeterministicAndCached) {
  const auto sid = new_session();
  const auto tp = new_point(sid, {{"seed", 1}});
  const auto fs = call("POST", "/session/" + sid + "/focuspoints", {{"target_id", tp}, {"count", 3}, {"range", 0.5}});
  ASSERT_EQ(fs.status, 201);
  EXPECT_EQ(fs.body["points"].size(), 3u);
  EXPECT_EQ(fs.body["projection"]["points"].size(), 3u);
  const json req = {{"target_id", tp}, {"focus_set_id", fs.body["focus_set_id"]}, {"range", 2.0}, {"resolution", 21}};
  const auto first = raw("POST", "/session/" + sid + "/views/slices", req);
  const auto second = raw("POST", "/session/" + sid + "/views/slices", req);
  EXPECT_EQ(first, second);
  const auto j = json::parse(first);
  ASSERT_EQ(j["charts"].size(), 31u);
  EXPECT_EQ(j["charts"][0]["slices"].size(), 4u);
  EXPECT_TRUE(j["charts"][0]["slices"][0]["is_target"].get<bool>());
  EXPECT_EQ(j["offsets"][10], 0.0);
  const double center = j["charts"][5]["slices"][0]["losses"][10];
  const double target_loss = call("GET", "/session/" + sid + "/targetpoints/" + tp).body["train_loss"];
  EXPECT_EQ(center, target_loss);
}

TEST_F(ApiTest, IdempotencyToken) {
  const auto sid = new_session();
  const auto a = call("POST", "/session/" + sid + "/targetpoints", {{"request_token", "abc"}});
  const auto b = call("POST", "/session/" + sid + "/targetpoints", {{"request_token", "abc"}});
  EXPECT_EQ(a.body["id"], b.body["id"]);
  const auto c = call("POST", "/session/" + sid + "/targetpoints", json::object(), "hdr-1");
  const auto d = call("POST", "/session/" + sid + "/targetpoints", json::object(), "hdr-1");
  EXPECT_EQ(c.body["id"], d.body["id"]);
  EXPECT_NE(a.body["id"], c.body["id"]);
  EXPECT_EQ(call("GET", "/session/" + sid + "/targetpoints").body["target_points"].size(), 2u);
}

TEST_F(ApiTest, TrainingJobAddsCheckpoints) {
  const auto sid = new_session();
  const auto tp = new_point(sid, {{"seed", 1}});
  const auto r = call("POST", "/session/" + sid + "/train",
                      {{"start_id", tp}, {"config", {{"algorithm", "adam"}, {"epochs", 300}, {"learning_rate", 0.01}}}});
  ASSERT_EQ(r.status, 202) << r.body.dump();
  const auto job = wait_job(r.body["job_id"]);
  EXPECT_EQ(job["status"], "done") << job.dump();
  const auto run = call("GET", "/session/" + sid + "/runs/" + r.body["run_id"].get<std::string>());
  ASSERT_EQ(run.status, 200);
  EXPECT_EQ(run.body["state"], "completed");
  EXPECT_EQ(run.body["loss_curve"].size(), 300u);
  EXPECT_EQ(run.body["checkpoints"].size(), 10u);
  const auto ids = run.body["target_point_ids"];
  ASSERT_EQ(ids.size(), 10u);
  const auto last = call("GET", "/session/" + sid + "/targetpoints/" + ids.back().get<std::string>());
  EXPECT_EQ(last.body["provenance"]["kind"], "training");
  EXPECT_EQ(last.body["provenance"]["epoch"], 300);
  EXPECT_EQ(last.body["train_loss"], run.body["loss_curve"].back());
  EXPECT_EQ(call("GET", "/session/" + sid + "/runs").body["runs"].size(), 1u);
}

TEST_F(ApiTest, TrainingCanBeCancelled) {
  const auto sid = new_session();
  const auto tp = new_point(sid);
  const auto r = call("POST", "/session/" + sid + "/train", {{"start_id", tp}, {"config", {{"epochs", 100000000}}}});
  ASSERT_EQ(r.status, 202);
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_EQ(call("DELETE", "/jobs/" + r.body["job_id"].get<std::string>()).status, 200);
  const auto job = wait_job(r.body["job_id"]);
  EXPECT_EQ(job["status"], "cancelled");
}

TEST_F(ApiTest, AsyncViewThroughJobs) {
  const auto sid = new_session();
  const auto tp = new_point(sid);
  const json req = {{"target_id", tp}, {"seed", 4}, {"resolution", 11}};
  const auto sync = call("POST", "/session/" + sid + "/views/plane", req);
  json areq = req;
  areq["async"] = true;
  areq["extent"] = 2.0;
  const auto r = call("POST", "/session/" + sid + "/views/plane", areq);
  ASSERT_EQ(r.status, 202);
  const auto job = wait_job(r.body["job_id"]);
  ASSERT_EQ(job["status"], "done");
  EXPECT_EQ(job["result"]["resolution"], 11);
  EXPECT_EQ(job["result"]["delta"], sync.body["delta"]);
  // A completed async view is served from the cache.
  json again = areq;
  again.erase("async");
  EXPECT_EQ(call("POST", "/session/" + sid + "/views/plane", again).body, job["result"]);
}

TEST_F(ApiTest, UnseededPlaneEchoesSeed) {
  const auto sid = new_session();
  const auto tp = new_point(sid);
  const auto a = call("POST", "/session/" + sid + "/views/plane", {{"target_id", tp}, {"resolution", 5}});
  ASSERT_EQ(a.status, 200);
  const auto seed = a.body["seed"];
  const auto b = call("POST", "/session/" + sid + "/views/plane", {{"target_id", tp}, {"resolution", 5}, {"seed", seed}});
  EXPECT_EQ(a.body["losses"], b.body["losses"]);
}

TEST_F(ApiTest, InterpolationEigenAndEvSlices) {
  const auto sid = new_session();
  const auto a = new_point(sid, {{"seed", 1}}), b = new_point(sid, {{"seed", 2}});
  const auto interp = call("POST", "/session/" + sid + "/views/interpolation", {{"theta0_id", a}, {"theta1_id", b}});
  ASSERT_EQ(interp.status, 200);
  EXPECT_EQ(interp.body["alphas"].size(), 121u);
  EXPECT_EQ(interp.body["train_losses"][10], call("GET", "/session/" + sid + "/targetpoints/" + a).body["train_loss"]);

  const auto eig = call("POST", "/session/" + sid + "/views/eigen", {{"target_id", a}, {"k", 3}});
  ASSERT_EQ(eig.status, 200) << eig.body.dump();
  EXPECT_EQ(eig.body["eigenvalues"].size(), 3u);
  const auto ev = call("POST", "/session/" + sid + "/views/evslices",
                       {{"eigen_id", eig.body["eigen_id"]}, {"range", 0.5}, {"resolution", 11}});
  ASSERT_EQ(ev.status, 200) << ev.body.dump();
  EXPECT_GE(ev.body["slices"].size(), 3u);
  EXPECT_EQ(ev.body["slices"][0]["eigenvalue"], eig.body["eigenvalues"][0]);
}

TEST_F(ApiTest, PredictionGrid) {
  const auto sid = new_session();
  const auto tp = new_point(sid, {{"kind", "zero"}});
  api::Request r{"GET", "/session/" + sid + "/prediction/" + tp, "", {{"resolution", "8"}}, {}};
  const auto out = service.handle(r);
  ASSERT_EQ(out.status, 200);
  const auto j = json::parse(out.body);
  EXPECT_EQ(j["grid"]["values"].size(), 64u);
  r.query["resolution"] = "abc";
  EXPECT_EQ(service.handle(r).status, 400);
  const auto data = call("GET", "/session/" + sid + "/data");
  EXPECT_EQ(data.body["target_grid"]["values"].size(), 1024u);
}

TEST_F(ApiTest, ExportImportRoundTrip) {
  const auto sid = new_session();
  const auto tp = new_point(sid, {{"seed", 5}, {"range", 2.0}});
  const auto original = call("GET", "/session/" + sid + "/targetpoints/" + tp).body;
  const auto exp = call("POST", "/session/" + sid + "/export", {{"filename", "api_test_roundtrip"}});
  ASSERT_EQ(exp.status, 200) << exp.body.dump();

  const auto other = new_session();
  const auto imp = call("POST", "/session/" + other + "/import", {{"filename", "api_test_roundtrip"}});
  ASSERT_EQ(imp.status, 201) << imp.body.dump();
  const auto back = call("GET", "/session/" + other + "/targetpoints/" + imp.body["imported"][0].get<std::string>()).body;
  EXPECT_EQ(back["weights"], original["weights"]);
  EXPECT_EQ(back["train_loss"], original["train_loss"]);
  EXPECT_EQ(back["provenance"]["kind"], "loaded");
  std::filesystem::remove(exp.body["path"].get<std::string>());

  EXPECT_EQ(call("POST", "/session/" + other + "/export", {{"filename", "../escape"}}).status, 400);
}

TEST_F(ApiTest, ImportIntoWrongArchitectureConflicts) {
  const auto sid = new_session();
  new_point(sid);
  const auto doc = call("POST", "/session/" + sid + "/export", json::object()).body["document"];
  const auto other = new_session();
  ASSERT_EQ(call("PUT", "/session/" + other + "/arch", {{"layers", {2, 4, 4, 1}}}).status, 200);
  const auto r = call("POST", "/session/" + other + "/import", {{"document", doc}});
  EXPECT_EQ(r.status, 409);
  EXPECT_NE(r.body["error"]["message"].get<std::string>().find("2-4-3-1"), std::string::npos);
}

TEST_F(ApiTest, ArchChangeClearsState) {
  const auto sid = new_session();
  const auto tp = new_point(sid);
  call("POST", "/session/" + sid + "/focuspoints", {{"target_id", tp}, {"count", 2}});
  const auto r = call("PUT", "/session/" + sid + "/arch", {{"layers", {2, 5, 1}}, {"activation", "tanh"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["arch"]["param_count"], 21);
  const auto s = call("GET", "/session/" + sid).body;
  EXPECT_TRUE(s["target_points"].empty());
  EXPECT_TRUE(s["focus_sets"].empty());
}

TEST_F(ApiTest, DataChangeKeepsPointsWithNewLosses) {
  const auto sid = new_session();
  const auto tp = new_point(sid, {{"kind", "zero"}});
  const auto r = call("PUT", "/session/" + sid + "/data", {{"expr", "0"}});
  ASSERT_EQ(r.status, 200);
  const auto p = call("GET", "/session/" + sid + "/targetpoints/" + tp);
  ASSERT_EQ(p.status, 200);
  EXPECT_EQ(p.body["train_loss"], 0.0);
}

TEST(HttpAdapter, ServesOverTcp) {
  api::Service service;
  httplib::Server server;
  api::attach(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  auto created = client.Post("/session", "{}", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string sid = json::parse(created->body)["session_id"];
  auto tp = client.Post("/session/" + sid + "/targetpoints", R"({"kind":"zero"})", "application/json");
  ASSERT_TRUE(tp);
  EXPECT_EQ(tp->status, 201);
  EXPECT_EQ(json::parse(tp->body)["provenance"]["kind"], "zero_vector");  // body reached the service
  const std::string tp_id = json::parse(tp->body)["id"];
  auto bad = client.Post("/session/" + sid + "/views/slices", R"({"target_id":")" + tp_id + R"(","resolution":80})",
                         "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["error"]["field"], "resolution");
  auto pred = client.Get("/session/" + sid + "/prediction/" + tp_id + "?resolution=4");
  ASSERT_TRUE(pred);
  EXPECT_EQ(json::parse(pred->body)["grid"]["values"].size(), 16u);

  httplib::Headers hdr = {{"Idempotency-Key", "k1"}};
  auto a = client.Post("/session/" + sid + "/targetpoints", hdr, "{}", "application/json");
  auto b = client.Post("/session/" + sid + "/targetpoints", hdr, "{}", "application/json");
  EXPECT_EQ(a->body, b->body);

  auto missing = client.Get("/session/zzz");
  EXPECT_EQ(missing->status, 404);
  auto options = client.Options("/session");
  EXPECT_EQ(options->status, 204);

  server.stop();
  t.join();
}
