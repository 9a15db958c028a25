#pragma once

// cpp-httplib adapter for api::Service. One catch-all handler per method
// forwards the request (body already read) to the service.

#include <httplib.h>

#include "losslens/api.hpp"

namespace losslens::api {

inline void attach(httplib::Server& server, Service& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.idempotency_key = req.get_header_value("Idempotency-Key");
    const auto out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  const std::string any = R"(/.*)";
  server.Get(any, forward);
  server.Post(any, forward);
  server.Put(any, forward);
  server.Delete(any, forward);
  server.Options(any, [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
    res.status = 204;
  });
}

}  // namespace losslens::api
