#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cneval/arena.hpp"
#include "cneval/corpus.hpp"
#include "cneval/genclient.hpp"
#include "cneval/metrics.hpp"
#include "cneval/promptkit.hpp"

namespace cneval {

using json = nlohmann::json;

struct DatasetConfig {
  std::string name;
  std::filesystem::path path;
  DataFormat format = DataFormat::kCsv;
  std::vector<Split> splits{Split::kTest};
  /// Keep one pair per distinct HS text before sampling.
  bool dedup = false;
  /// Seeded sample of this many HS instances (after split filtering).
  std::optional<std::size_t> hs_sample;
};

struct SystemConfig {
  SystemDescriptor descriptor;
  std::string model;
  ApiKind api = ApiKind::kCompletions;
  std::optional<MockSpec> mock;
};

struct EndpointDefaults {
  double timeout_s = 60.0;
  int retries = 3;
  int backoff_ms = 250;
  std::optional<std::string> api_key_env;
};

struct JudgeConfig {
  std::string id = "judgelm-33b";
  std::string size_tag = "33B";
  JudgeMode mode = JudgeMode::kFast;
  int retries = 2;
  std::optional<std::string> endpoint;
  std::string model;
  ApiKind api = ApiKind::kCompletions;
  std::optional<MockJudge::Kind> mock;
  bool fixed_order = false;
  /// Share of parse-failed verdicts above which the stage fails with the health exit code.
  double max_failure_rate = 0.05;
};

struct MetricsConfig {
  MetricOptions options;
  std::optional<std::string> embedding_endpoint;
  std::string embedding_model;
  /// Use the local hashed-token embeddings instead of a server.
  bool embedding_stub = false;
  Split novelty_train_split = Split::kTrain;
};

struct AnnotatorConfig {
  std::string id;
  std::string token;
};

struct AnnotationConfig {
  std::vector<AnnotatorConfig> annotators;
  std::string coordinator_token;
  double shared_fraction = 0.4;
  std::vector<std::string> feature_annotators;
  std::size_t feature_hs_count = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
  std::string guidelines_version = "v1";
};

enum class MetricPathway { kCorpus, kTournament };

struct RunConfig {
  std::filesystem::path run_root = "runs";
  std::uint64_t seed = 0;
  int parallelism = 4;
  /// fsync every store append before acknowledging it.
  bool fsync = true;
  std::vector<DatasetConfig> datasets;
  std::optional<std::filesystem::path> templates_dir;
  std::vector<SystemConfig> systems;
  DecodingParams decoding;
  EndpointDefaults endpoint;
  std::optional<std::vector<std::string>> refusal_patterns;
  JudgeConfig judge;
  MetricsConfig metrics;
  AnnotationConfig annotation;
  MetricPathway metric_pathway = MetricPathway::kCorpus;

  /// The document as loaded (after CLI overrides), used for the run snapshot.
  json source;

  EndpointConfig endpoint_for(const std::string& base_url, const std::string& model) const;
  std::vector<std::string> roster() const;
};

/// Validates everything before any network call. Unknown keys are rejected;
/// relative paths resolve against base_dir.
RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace cneval
