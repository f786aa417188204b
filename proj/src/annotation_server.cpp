#include "cneval/annotation_server.hpp"

#include <thread>

#include <httplib.h>

#include "cneval/error.hpp"

namespace cneval {

struct AnnotationServer::Impl {
  AnnotationService& service;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;

  Impl(AnnotationService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::string bearer(const httplib::Request& req) {
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (h.rfind(kPrefix, 0) != 0) return {};
    return h.substr(kPrefix.size());
  }

  // Resolves the calling annotator or writes a 401/403 reply.
  std::optional<std::string> annotator(const httplib::Request& req, httplib::Response& res) {
    auto it = options.annotator_tokens.find(bearer(req));
    if (it == options.annotator_tokens.end()) {
      reply(res, 401, {{"error", "missing or unknown annotator token"}});
      return std::nullopt;
    }
    if (req.has_param("annotator") && req.get_param_value("annotator") != it->second) {
      reply(res, 403, {{"error", "token does not belong to the requested annotator"}});
      return std::nullopt;
    }
    return it->second;
  }

  bool coordinator(const httplib::Request& req, httplib::Response& res) {
    if (options.coordinator_token.empty() || bearer(req) != options.coordinator_token) {
      reply(res, 401, {{"error", "coordinator token required"}});
      return false;
    }
    return true;
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const TaskNotAssignedError& e) {
      reply(res, 403, {{"error", e.what()}});
    } catch (const DuplicateKeyError& e) {
      reply(res, 409, {{"error", e.what()}});
    } catch (const Error& e) {
      reply(res, e.kind() == ErrorKind::kData ? 400 : 500, {{"error", e.what()}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    }
  }

  void routes() {
    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });

    server.Get("/api/task", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = annotator(req, res);
      if (!who) return;
      guarded(res, [&] { reply(res, 200, service.next_task(*who)); });
    });

    server.Post("/api/choice", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = annotator(req, res);
      if (!who) return;
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        if (body.contains("annotator") && body["annotator"].get<std::string>() != *who) {
          reply(res, 403, {{"error", "token does not belong to the requested annotator"}});
          return;
        }
        reply(res, 200,
              service.submit_choice(*who, body.at("task_id").get<std::string>(), body.at("choice").get<std::string>(),
                                    body.value("supersede", false)));
      });
    });

    server.Get("/api/feature-task", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = annotator(req, res);
      if (!who) return;
      guarded(res, [&] { reply(res, 200, service.next_feature_task(*who)); });
    });

    server.Post("/api/feature", [this](const httplib::Request& req, httplib::Response& res) {
      auto who = annotator(req, res);
      if (!who) return;
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        reply(res, 200,
              service.submit_feature(*who, body.at("task_id").get<std::string>(), body.at("values"),
                                     body.value("supersede", false)));
      });
    });

    server.Get("/api/progress", [this](const httplib::Request& req, httplib::Response& res) {
      if (!coordinator(req, res)) return;
      guarded(res, [&] { reply(res, 200, service.progress()); });
    });

    server.Get("/api/reports/iaa", [this](const httplib::Request& req, httplib::Response& res) {
      if (!coordinator(req, res)) return;
      guarded(res, [&] { reply(res, 200, service.iaa()); });
    });

    server.Get("/api/reports/human-rank", [this](const httplib::Request& req, httplib::Response& res) {
      if (!coordinator(req, res)) return;
      const auto p = req.get_param_value("partial");
      const bool partial = p == "1" || p == "true";
      guarded(res, [&] { reply(res, 200, service.human_rank(partial)); });
    });

    server.Get("/api/reports/features", [this](const httplib::Request& req, httplib::Response& res) {
      if (!coordinator(req, res)) return;
      guarded(res, [&] { reply(res, 200, service.features()); });
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  impl_->routes();
  if (impl_->options.static_dir && !impl_->server.set_mount_point("/", *impl_->options.static_dir)) {
    throw ConfigError("static directory '" + *impl_->options.static_dir + "' does not exist");
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  const auto& o = impl_->options;
  if (o.port == 0) {
    port_ = impl_->server.bind_to_any_port(o.host);
    if (port_ < 0) throw ConfigError("cannot bind " + o.host);
  } else {
    if (!impl_->server.bind_to_port(o.host, o.port)) {
      throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port));
    }
    port_ = o.port;
  }
  return port_;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::start() {
  bind();
  impl_->thread = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cneval
