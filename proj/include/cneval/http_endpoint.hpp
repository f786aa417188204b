#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace cneval {

struct EndpointConfig {
  /// e.g. "http://127.0.0.1:8000/v1". The path part prefixes every request path.
  std::string base_url;
  std::string model;
  /// Name of the environment variable holding the bearer token, if any.
  std::optional<std::string> api_key_env;
  double timeout_s = 60.0;
  int retries = 3;
  int backoff_ms = 250;
};

/// JSON-over-HTTP POST with bounded retries. Connection errors, 429 and 5xx
/// are retried; other 4xx fail immediately.
class HttpEndpoint {
 public:
  explicit HttpEndpoint(EndpointConfig config);

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const;

  const EndpointConfig& config() const { return config_; }
  std::string url(const std::string& path) const;

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace cneval
