#include "cneval/http_endpoint.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "cneval/error.hpp"

namespace cneval {

HttpEndpoint::HttpEndpoint(EndpointConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.retries < 0) throw ConfigError("endpoint retries must be non-negative");
}

std::string HttpEndpoint::url(const std::string& path) const { return scheme_host_port_ + path_prefix_ + path; }

nlohmann::json HttpEndpoint::post_json(const std::string& path, const nlohmann::json& body) const {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (config_.api_key_env) {
    if (const char* token = std::getenv(config_.api_key_env->c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  const std::string payload = body.dump();
  const int attempts = config_.retries + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(path_prefix_ + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status >= 400) {
      throw TransportError("POST " + url(path) + " failed with HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200),
                           attempt);
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error&) {
        last_error = "response is not JSON";
      }
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * attempt));
    }
  }
  throw TransportError("POST " + url(path) + " failed after " + std::to_string(attempts) + " attempts (" +
                           last_error + ")",
                       attempts);
}

}  // namespace cneval
