// losslens_server: HTTP/JSON front end for the landscape engine.
//
//   losslens_server --port 8080 --data-dir ./points
//
// Every flag can also come from the environment (LOSSLENS_PORT,
// LOSSLENS_HOST, LOSSLENS_MAX_JOBS, LOSSLENS_SEED, LOSSLENS_DATA_DIR).

#include <csignal>
#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>

#include "losslens/http_server.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss landscape exploration server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_jobs = 2;
  std::uint64_t seed = 0;
  std::string data_dir = ".";
  app.add_option("--host", host, "Address to bind")->envname("LOSSLENS_HOST")->capture_default_str();
  app.add_option("--port", port, "TCP port (0 picks a free one)")
      ->envname("LOSSLENS_PORT")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  app.add_option("--max-jobs", max_jobs, "Background worker threads")
      ->envname("LOSSLENS_MAX_JOBS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--seed", seed, "Default seed for requests that omit one")
      ->envname("LOSSLENS_SEED")
      ->capture_default_str();
  app.add_option("--data-dir", data_dir, "Directory for exported .ftp.json files")
      ->envname("LOSSLENS_DATA_DIR")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::error_code ec;
  std::filesystem::create_directories(data_dir, ec);
  if (ec) {
    std::fprintf(stderr, "cannot create data dir %s: %s\n", data_dir.c_str(), ec.message().c_str());
    return 1;
  }

  losslens::api::ServiceConfig cfg;
  cfg.max_jobs = max_jobs;
  cfg.seed = seed;
  cfg.data_dir = data_dir;
  losslens::api::Service service(cfg);
  httplib::Server server;
  losslens::api::attach(server, service);

  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) {
    std::fprintf(stderr, "cannot bind %s\n", host.c_str());
    return 1;
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on http://%s:%d\n", host.c_str(), port);
  std::fflush(stdout);
  return server.listen_after_bind() ? 0 : 1;
}
