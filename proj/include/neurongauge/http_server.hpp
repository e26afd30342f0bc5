#pragma once

#include <memory>
#include <string>

#include "neurongauge/service.hpp"

namespace ngauge {

/// HTTP+JSON front end for an AnnotationService:
///   POST /sessions
///   GET  /sessions/:id
///   GET  /sessions/:id/task?rater=...
///   POST /sessions/:id/ratings
///   GET  /sessions/:id/estimate
///   GET  /sessions/:id/export
///   GET  /sessions/:id/plan
/// The rater id comes from the X-Rater-Id header, else the `rater` query
/// parameter or body field.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); returns false if the listener failed.
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ngauge
