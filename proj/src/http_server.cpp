#include "neurongauge/http_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace ngauge {

namespace {

void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  if (r.status == 204) return;
  if (r.content_type == "application/json") {
    res.set_content(r.body.dump(), "application/json");
  } else {
    res.set_content(r.text, r.content_type);
  }
}

std::string rater_of(const httplib::Request& req, const nlohmann::json* body = nullptr) {
  if (req.has_header("X-Rater-Id")) return req.get_header_value("X-Rater-Id");
  if (req.has_param("rater")) return req.get_param_value("rater");
  if (body && body->is_object() && body->contains("rater") && (*body)["rater"].is_string()) {
    return (*body)["rater"].get<std::string>();
  }
  return {};
}

bool parse_body(const httplib::Request& req, httplib::Response& res, nlohmann::json& out) {
  try {
    out = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    return true;
  } catch (const nlohmann::json::exception& e) {
    send(res, ServiceResponse::error(400, "bad_json", e.what()));
    return false;
  }
}

}  // namespace

struct HttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {}
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type, X-Rater-Id"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (parse_body(req, res, body)) send(res, svc.create_session(body));
  });
  srv.Get("/sessions/:id", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.session_status(req.path_params.at("id")));
  });
  srv.Get("/sessions/:id/task", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.next_task(req.path_params.at("id"), rater_of(req)));
  });
  srv.Post("/sessions/:id/ratings", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    if (!parse_body(req, res, body)) return;
    const ServiceResponse r = svc.submit_ratings(req.path_params.at("id"), rater_of(req, &body), body);
    if (r.status == 422) spdlog::warn("rejected ratings payload: {}", r.body.dump());
    send(res, r);
  });
  srv.Get("/sessions/:id/estimate", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.current_estimate(req.path_params.at("id")));
  });
  srv.Get("/sessions/:id/export", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.export_ratings(req.path_params.at("id")));
  });
  srv.Get("/sessions/:id/plan", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.plan(req.path_params.at("id")));
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    send(res, ServiceResponse::error(500, "internal", what));
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) {
      send(res, ServiceResponse::error(404, "not_found", "no such route"));
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ngauge
