#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace cneval {

using json = nlohmann::json;

namespace streams {
inline constexpr std::string_view kCandidates = "candidates";
inline constexpr std::string_view kPlan = "plan";
inline constexpr std::string_view kVerdicts = "verdicts";
inline constexpr std::string_view kAnnotations = "annotations";
inline constexpr std::string_view kFeatures = "features";
}  // namespace streams

enum class FieldType { kString, kNumber, kNumberOrNull, kBool, kObject };

struct StreamSchema {
  std::string name;
  std::vector<std::pair<std::string, FieldType>> required;
  std::vector<std::string> key_fields;
  /// Records carrying "supersedes": true may repeat an existing key (latest wins on read).
  bool allow_supersede = false;
};

/// Schema of a known stream, or nullptr for free-form streams.
const StreamSchema* schema_for(std::string_view stream);

/// Throws SchemaError naming the first offending field.
void validate_record(const StreamSchema& schema, const json& record);
std::string record_key(const StreamSchema& schema, const json& record);

struct StreamLoad {
  std::vector<json> records;
  std::vector<std::string> warnings;
};

/// Parses JSONL text. A malformed final line without a terminating newline is a
/// torn write: it is excluded and reported. Malformed interior lines throw.
StreamLoad parse_stream(std::string_view content, std::string_view name = "stream");

/// Keeps the latest record per key, in order of first appearance of the key.
std::vector<json> latest_wins(const StreamSchema& schema, const std::vector<json>& records);

struct RunManifest {
  std::string run_id;
  std::string created_at;
  std::string config_hash;
  std::string dataset_fingerprint;
  std::map<std::string, std::string> component_versions;
  std::vector<std::string> artifacts;

  json to_json() const;
  static RunManifest from_json(const json& j);
};

struct StoreOptions {
  /// fsync after every acknowledged append.
  bool sync = true;
};

std::string sha256_hex(std::string_view data);
std::string utc_timestamp();

/// Per-run directory of append-only JSONL streams:
///   <root>/<run_id>/manifest.json, candidates.jsonl, plan.jsonl, verdicts.jsonl,
///   annotations.jsonl, features.jsonl, reports/
/// Appends to one stream are serialized; readers may run concurrently and see a prefix.
class RunStore {
 public:
  RunStore(std::filesystem::path root, std::string run_id, StoreOptions options = {});
  ~RunStore();
  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::string& run_id() const { return run_id_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path stream_path(std::string_view stream) const;
  std::filesystem::path reports_dir() const { return dir_ / "reports"; }

  /// Validates, checks the unique key, writes one line, and syncs before returning.
  void append(std::string_view stream, const json& record);
  /// Same contract for a batch; one sync for the whole batch. All-or-nothing on validation.
  void append_batch(std::string_view stream, std::span<const json> records);

  bool contains_key(std::string_view stream, const std::string& key);
  std::size_t count(std::string_view stream);

  bool has_stream(std::string_view stream) const;
  StreamLoad load_stream(std::string_view stream) const;  // throws when the stream is missing

  bool has_manifest() const;
  /// Writes manifest.json once and creates every listed stream file. Rewriting
  /// with different content is rejected.
  void write_manifest(const RunManifest& manifest);
  RunManifest read_manifest() const;

  /// Atomic (write-then-rename) report file under reports/.
  void write_report(std::string_view name, std::string_view content);
  std::optional<std::string> read_report(std::string_view name) const;

  /// Rewrites index.json with the current per-stream record counts.
  void write_index();
  /// Returns a list of problems: missing artifact files or count mismatches with index.json.
  std::vector<std::string> verify() const;

  void write_file(std::string_view name, std::string_view content);
  std::optional<std::string> read_file(std::string_view name) const;

 private:
  struct Appender;
  Appender& appender(std::string_view stream);

  std::filesystem::path dir_;
  std::string run_id_;
  StoreOptions options_;
  std::mutex appenders_mu_;
  std::map<std::string, std::unique_ptr<Appender>, std::less<>> appenders_;
};

/// Exclusive advisory lock on <run_dir>/.lock for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

std::vector<std::string> default_artifacts();

}  // namespace cneval
