#include "cneval/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "cneval/error.hpp"

namespace fs = std::filesystem;

namespace cneval {

namespace {

const std::vector<StreamSchema>& schemas() {
  static const std::vector<StreamSchema> all = {
      {std::string(streams::kCandidates),
       {{"id", FieldType::kString},
        {"hs_id", FieldType::kString},
        {"system_id", FieldType::kString},
        {"text", FieldType::kString},
        {"refusal_flag", FieldType::kBool},
        {"meta", FieldType::kObject}},
       {"hs_id", "system_id"},
       false},
      {std::string(streams::kPlan),
       {{"tournament_id", FieldType::kString},
        {"hs_id", FieldType::kString},
        {"system_a", FieldType::kString},
        {"system_b", FieldType::kString},
        {"cn_a", FieldType::kString},
        {"cn_b", FieldType::kString},
        {"presentation_order", FieldType::kString},
        {"order_seed", FieldType::kNumber}},
       {"tournament_id"},
       false},
      {std::string(streams::kVerdicts),
       {{"tournament_id", FieldType::kString},
        {"hs_id", FieldType::kString},
        {"system_a", FieldType::kString},
        {"system_b", FieldType::kString},
        {"judge_id", FieldType::kString},
        {"score_a", FieldType::kNumberOrNull},
        {"score_b", FieldType::kNumberOrNull},
        {"outcome", FieldType::kString},
        {"parse_status", FieldType::kString},
        {"raw_response", FieldType::kString}},
       {"tournament_id"},
       false},
      {std::string(streams::kAnnotations),
       {{"tournament_id", FieldType::kString},
        {"annotator_id", FieldType::kString},
        {"choice", FieldType::kString},
        {"timestamp", FieldType::kString},
        {"guidelines_version", FieldType::kString}},
       {"tournament_id", "annotator_id"},
       true},
      {std::string(streams::kFeatures),
       {{"hs_id", FieldType::kString},
        {"system_id", FieldType::kString},
        {"annotator_id", FieldType::kString},
        {"relatedness", FieldType::kNumber},
        {"specificity", FieldType::kNumber},
        {"richness", FieldType::kNumber},
        {"coherence", FieldType::kNumber},
        {"grammaticality", FieldType::kNumber},
        {"overall", FieldType::kNumber}},
       {"hs_id", "system_id", "annotator_id"},
       true},
  };
  return all;
}

bool type_ok(const json& v, FieldType t) {
  switch (t) {
    case FieldType::kString: return v.is_string();
    case FieldType::kNumber: return v.is_number();
    case FieldType::kNumberOrNull: return v.is_number() || v.is_null();
    case FieldType::kBool: return v.is_boolean();
    case FieldType::kObject: return v.is_object();
  }
  return false;
}

bool is_supersede(const json& record) {
  auto it = record.find("supersedes");
  return it != record.end() && it->is_boolean() && it->get<bool>();
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::kData, "write to '" + path.string() + "' failed: " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kData, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error(ErrorKind::kData, "short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

const StreamSchema* schema_for(std::string_view stream) {
  for (const auto& s : schemas()) {
    if (s.name == stream) return &s;
  }
  return nullptr;
}

void validate_record(const StreamSchema& schema, const json& record) {
  if (!record.is_object()) throw SchemaError(schema.name + ": record is not a JSON object");
  for (const auto& [field, type] : schema.required) {
    auto it = record.find(field);
    if (it == record.end()) throw SchemaError(schema.name + ": missing field '" + field + "'");
    if (!type_ok(*it, type)) throw SchemaError(schema.name + ": field '" + field + "' has the wrong type");
  }
}

std::string record_key(const StreamSchema& schema, const json& record) {
  std::string key;
  for (std::size_t i = 0; i < schema.key_fields.size(); ++i) {
    if (i) key.push_back('\x1f');
    const auto& v = record.at(schema.key_fields[i]);
    key += v.is_string() ? v.get<std::string>() : v.dump();
  }
  return key;
}

StreamLoad parse_stream(std::string_view content, std::string_view name) {
  StreamLoad out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    const auto end = terminated ? nl : content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.records.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      if (!terminated) {
        out.warnings.push_back(std::string(name) + ": torn final line " + std::to_string(line_no) + " excluded");
        break;
      }
      throw SchemaError(std::string(name) + ": corrupt record at line " + std::to_string(line_no));
    }
    if (!terminated) {
      // A complete JSON value without its newline: accept it but flag the missing terminator.
      out.warnings.push_back(std::string(name) + ": final line " + std::to_string(line_no) + " lacks a newline");
    }
  }
  return out;
}

std::vector<json> latest_wins(const StreamSchema& schema, const std::vector<json>& records) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<json> out;
  for (const auto& r : records) {
    auto key = record_key(schema, r);
    auto [it, inserted] = slot.emplace(std::move(key), out.size());
    if (inserted) {
      out.push_back(r);
    } else {
      out[it->second] = r;
    }
  }
  return out;
}

json RunManifest::to_json() const {
  return json{{"run_id", run_id},
              {"created_at", created_at},
              {"config_hash", config_hash},
              {"dataset_fingerprint", dataset_fingerprint},
              {"component_versions", component_versions},
              {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.created_at = j.at("created_at").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.dataset_fingerprint = j.value("dataset_fingerprint", "");
  m.component_versions = j.value("component_versions", std::map<std::string, std::string>{});
  m.artifacts = j.value("artifacts", std::vector<std::string>{});
  return m;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kInternal, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::vector<std::string> default_artifacts() {
  return {"candidates.jsonl", "plan.jsonl", "verdicts.jsonl", "annotations.jsonl", "features.jsonl"};
}

struct RunStore::Appender {
  std::mutex mu;
  int fd = -1;
  fs::path path;
  const StreamSchema* schema = nullptr;
  std::unordered_set<std::string> keys;
  std::size_t count = 0;

  ~Appender() {
    if (fd >= 0) ::close(fd);
  }
};

RunStore::RunStore(fs::path root, std::string run_id, StoreOptions options)
    : dir_(std::move(root) / run_id), run_id_(std::move(run_id)), options_(options) {
  if (run_id_.empty() || run_id_.find('/') != std::string::npos || run_id_ == "." || run_id_ == "..") {
    throw ConfigError("invalid run id '" + run_id_ + "'");
  }
  fs::create_directories(dir_ / "reports");
}

RunStore::~RunStore() = default;

fs::path RunStore::stream_path(std::string_view stream) const { return dir_ / (std::string(stream) + ".jsonl"); }

bool RunStore::has_stream(std::string_view stream) const { return fs::exists(stream_path(stream)); }

RunStore::Appender& RunStore::appender(std::string_view stream) {
  std::lock_guard lock(appenders_mu_);
  if (auto it = appenders_.find(stream); it != appenders_.end()) return *it->second;

  auto app = std::make_unique<Appender>();
  app->path = stream_path(stream);
  app->schema = schema_for(stream);

  if (fs::exists(app->path)) {
    const std::string content = slurp(app->path);
    auto loaded = parse_stream(content, stream);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    // Drop a torn tail so the next append starts on a fresh line.
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != content.size()) {
      if (!loaded.records.empty() && loaded.warnings.back().find("lacks a newline") != std::string::npos) {
        std::ofstream(app->path, std::ios::binary | std::ios::app) << '\n';
      } else {
        fs::resize_file(app->path, keep);
      }
    }
    for (const auto& r : loaded.records) {
      if (app->schema) app->keys.insert(record_key(*app->schema, r));
    }
    app->count = loaded.records.size();
  }
  app->fd = ::open(app->path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (app->fd < 0) throw Error(ErrorKind::kData, "cannot open '" + app->path.string() + "' for append");
  auto& ref = *app;
  appenders_.emplace(std::string(stream), std::move(app));
  return ref;
}

void RunStore::append(std::string_view stream, const json& record) { append_batch(stream, std::span(&record, 1)); }

void RunStore::append_batch(std::string_view stream, std::span<const json> records) {
  auto& app = appender(stream);
  std::lock_guard lock(app.mu);
  std::string buffer;
  std::vector<std::string> new_keys;
  std::unordered_set<std::string> batch_keys;
  for (const auto& r : records) {
    if (app.schema) {
      validate_record(*app.schema, r);
      auto key = record_key(*app.schema, r);
      const bool exists = app.keys.count(key) > 0 || batch_keys.count(key) > 0;
      if (exists && !(app.schema->allow_supersede && is_supersede(r))) {
        throw DuplicateKeyError(std::string(stream) + ": duplicate key '" + key + "'");
      }
      if (!exists && is_supersede(r)) {
        throw ValidationError(std::string(stream) + ": superseding record has no predecessor '" + key + "'");
      }
      batch_keys.insert(key);
      new_keys.push_back(std::move(key));
    } else if (!r.is_object()) {
      throw SchemaError(std::string(stream) + ": record is not a JSON object");
    }
    buffer += r.dump(-1, ' ', false, json::error_handler_t::replace);
    buffer.push_back('\n');
  }
  write_all(app.fd, buffer, app.path);
  if (options_.sync && ::fsync(app.fd) != 0) {
    throw Error(ErrorKind::kData, "fsync of '" + app.path.string() + "' failed");
  }
  for (auto& k : new_keys) app.keys.insert(std::move(k));
  app.count += records.size();
}

bool RunStore::contains_key(std::string_view stream, const std::string& key) {
  auto& app = appender(stream);
  std::lock_guard lock(app.mu);
  return app.keys.count(key) > 0;
}

std::size_t RunStore::count(std::string_view stream) {
  auto& app = appender(stream);
  std::lock_guard lock(app.mu);
  return app.count;
}

StreamLoad RunStore::load_stream(std::string_view stream) const {
  const auto path = stream_path(stream);
  if (!fs::exists(path)) throw Error(ErrorKind::kData, "stream '" + std::string(stream) + "' does not exist in run '" + run_id_ + "'");
  return parse_stream(slurp(path), stream);
}

bool RunStore::has_manifest() const { return fs::exists(dir_ / "manifest.json"); }

void RunStore::write_manifest(const RunManifest& manifest) {
  const auto path = dir_ / "manifest.json";
  const std::string content = manifest.to_json().dump(2) + "\n";
  if (fs::exists(path)) {
    if (slurp(path) != content) throw Error(ErrorKind::kData, "manifest.json is immutable once written");
    return;
  }
  for (const auto& a : manifest.artifacts) {
    const auto p = dir_ / a;
    if (!fs::exists(p)) std::ofstream(p, std::ios::binary);
  }
  atomic_write(path, content);
}

RunManifest RunStore::read_manifest() const {
  const auto path = dir_ / "manifest.json";
  if (!fs::exists(path)) throw Error(ErrorKind::kData, "run '" + run_id_ + "' has no manifest");
  return RunManifest::from_json(json::parse(slurp(path)));
}

void RunStore::write_report(std::string_view name, std::string_view content) {
  fs::create_directories(reports_dir());
  atomic_write(reports_dir() / std::string(name), content);
}

std::optional<std::string> RunStore::read_report(std::string_view name) const {
  const auto p = reports_dir() / std::string(name);
  if (!fs::exists(p)) return std::nullopt;
  return slurp(p);
}

void RunStore::write_file(std::string_view name, std::string_view content) {
  atomic_write(dir_ / std::string(name), content);
}

std::optional<std::string> RunStore::read_file(std::string_view name) const {
  const auto p = dir_ / std::string(name);
  if (!fs::exists(p)) return std::nullopt;
  return slurp(p);
}

void RunStore::write_index() {
  json idx = json::object();
  for (const auto& a : default_artifacts()) {
    const auto p = dir_ / a;
    if (!fs::exists(p)) continue;
    const auto stream = a.substr(0, a.size() - std::string(".jsonl").size());
    idx[a] = load_stream(stream).records.size();
  }
  atomic_write(dir_ / "index.json", idx.dump(2) + "\n");
}

std::vector<std::string> RunStore::verify() const {
  std::vector<std::string> problems;
  if (!has_manifest()) {
    problems.push_back("manifest.json missing");
    return problems;
  }
  const auto manifest = read_manifest();
  json idx = json::object();
  if (fs::exists(dir_ / "index.json")) idx = json::parse(slurp(dir_ / "index.json"));
  for (const auto& a : manifest.artifacts) {
    const auto p = dir_ / a;
    if (!fs::exists(p)) {
      problems.push_back("artifact '" + a + "' missing");
      continue;
    }
    if (idx.contains(a)) {
      const auto stream = a.substr(0, a.size() - std::string(".jsonl").size());
      const auto n = load_stream(stream).records.size();
      if (n != idx[a].get<std::size_t>()) {
        problems.push_back("artifact '" + a + "' has " + std::to_string(n) + " records, index says " +
                           std::to_string(idx[a].get<std::size_t>()));
      }
    }
  }
  return problems;
}

RunLock::RunLock(const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const auto path = run_dir / ".lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::kData, "cannot open lock file '" + path.string() + "'");
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorKind::kData, "run directory '" + run_dir.string() + "' is locked by another command");
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace cneval
