#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "cneval/annotation.hpp"

namespace cneval {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  /// Directory served at "/" (the annotation UI bundle), if any.
  std::optional<std::string> static_dir;
  /// bearer token -> annotator id
  std::map<std::string, std::string> annotator_tokens;
  /// Token for progress and report endpoints.
  std::string coordinator_token;
};

/// JSON API over an AnnotationService:
///   GET  /api/health
///   GET  /api/task?annotator=ID          POST /api/choice   {task_id, choice, supersede?}
///   GET  /api/feature-task?annotator=ID  POST /api/feature  {task_id, values{...}, supersede?}
///   GET  /api/progress  GET /api/reports/iaa  GET /api/reports/human-rank?partial=1
///   GET  /api/reports/features
/// Annotator routes take an annotator token; the annotator parameter, when
/// given, must match it. Report routes take the coordinator token.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, ServerOptions options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds the socket; returns the bound port. Throws ConfigError on failure.
  int bind();
  /// Serves until stop(). bind() must have been called.
  void serve();
  /// bind() plus serve() on a background thread.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace cneval
