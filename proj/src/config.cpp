#include "cneval/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cneval/error.hpp"

namespace cneval {

namespace {

// Reads keys from one JSON object and rejects whatever was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(key);
  }

  template <typename T>
  T required(const std::string& key) {
    if (!has(key)) throw ConfigError(where() + "." + key + " is required");
    return convert<T>(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  void done() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + where() + "." + k);
    }
  }

 private:
  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto as_config_error(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ApiKind parse_api(const std::string& s, const std::string& where) {
  if (s == "completions") return ApiKind::kCompletions;
  if (s == "chat") return ApiKind::kChat;
  throw ConfigError(where + " must be 'completions' or 'chat'");
}

DatasetConfig parse_dataset(const json& j, const std::string& path, const std::filesystem::path& base) {
  Section s(j, path);
  DatasetConfig d;
  d.name = s.required<std::string>("name");
  d.path = resolve(base, s.required<std::string>("path"));
  d.format = as_config_error(path + ".format", [&] { return parse_data_format(s.get<std::string>("format", "csv")); });
  if (s.has("splits")) {
    d.splits.clear();
    for (const auto& sp : s.raw("splits")) {
      if (!sp.is_string()) throw ConfigError(path + ".splits must list split names");
      d.splits.push_back(as_config_error(path + ".splits", [&] { return parse_split(sp.get<std::string>()); }));
    }
    if (d.splits.empty()) throw ConfigError(path + ".splits is empty");
  }
  d.dedup = s.get<bool>("dedup", false);
  if (s.has("hs_sample")) {
    const auto n = s.required<long long>("hs_sample");
    if (n <= 0) throw ConfigError(path + ".hs_sample must be positive");
    d.hs_sample = static_cast<std::size_t>(n);
  }
  s.done();
  return d;
}

SystemConfig parse_system(const json& j, const std::string& path) {
  Section s(j, path);
  SystemConfig sc;
  auto& d = sc.descriptor;
  d.id = s.required<std::string>("id");
  if (d.id.empty()) throw ConfigError(path + ".id is empty");
  d.family = as_config_error(path + ".family", [&] { return parse_family(s.required<std::string>("family")); });
  const auto default_mode = d.family == Family::kGold ? std::string("gold") : std::string("zs");
  d.mode = as_config_error(path + ".mode", [&] { return parse_mode(s.get<std::string>("mode", default_mode)); });
  d.endpoint = s.opt<std::string>("endpoint");
  sc.model = s.get<std::string>("model", "");
  sc.api = parse_api(s.get<std::string>("api", "completions"), path + ".api");
  d.template_tag = s.get<std::string>("template", "");
  if (s.has("mock")) {
    sc.mock = as_config_error(path + ".mock", [&] { return MockSpec::from_json(s.raw("mock")); });
    d.has_mock = true;
  }
  s.done();
  as_config_error(path, [&] { d.validate(); });
  if (d.endpoint && !d.has_mock && sc.model.empty()) throw ConfigError(path + ".model is required with an endpoint");
  return sc;
}

JudgeConfig parse_judge(const json& j, const std::string& path) {
  Section s(j, path);
  JudgeConfig c;
  c.id = s.get<std::string>("id", c.id);
  c.size_tag = s.get<std::string>("size_tag", c.size_tag);
  c.mode = as_config_error(path + ".mode", [&] { return parse_judge_mode(s.get<std::string>("mode", "fast")); });
  c.retries = s.get<int>("retries", c.retries);
  if (c.retries < 0) throw ConfigError(path + ".retries must be non-negative");
  c.endpoint = s.opt<std::string>("endpoint");
  c.model = s.get<std::string>("model", "");
  c.api = parse_api(s.get<std::string>("api", "completions"), path + ".api");
  if (s.has("mock")) c.mock = MockJudge::parse_kind(s.required<std::string>("mock"));
  c.fixed_order = s.get<bool>("fixed_order", false);
  c.max_failure_rate = s.get<double>("max_failure_rate", c.max_failure_rate);
  if (c.max_failure_rate < 0 || c.max_failure_rate > 1) throw ConfigError(path + ".max_failure_rate must lie in [0, 1]");
  s.done();
  if (!c.endpoint && !c.mock) throw ConfigError(path + " needs an endpoint or a mock");
  if (c.endpoint && !c.mock && c.model.empty()) throw ConfigError(path + ".model is required with an endpoint");
  return c;
}

MetricsConfig parse_metrics(const json& j, const std::string& path) {
  Section s(j, path);
  MetricsConfig m;
  auto& o = m.options;
  o.bleu = s.get<bool>("bleu", o.bleu);
  o.rouge_l = s.get<bool>("rouge_l", o.rouge_l);
  o.bertscore = s.get<bool>("bertscore", o.bertscore);
  o.repetition_rate = s.get<bool>("repetition_rate", o.repetition_rate);
  o.novelty = s.get<bool>("novelty", o.novelty);
  const auto level = s.get<std::string>("level", "corpus");
  if (level == "corpus") {
    o.level = MetricLevel::kCorpus;
  } else if (level == "sentence") {
    o.level = MetricLevel::kSentence;
  } else {
    throw ConfigError(path + ".level must be 'corpus' or 'sentence'");
  }
  o.max_n = s.get<int>("max_n", o.max_n);
  if (o.max_n < 1) throw ConfigError(path + ".max_n must be at least 1");
  const auto window = s.get<long long>("rr_window", static_cast<long long>(o.rr_window));
  if (window < 1) throw ConfigError(path + ".rr_window must be positive");
  o.rr_window = static_cast<std::size_t>(window);
  m.embedding_endpoint = s.opt<std::string>("embedding_endpoint");
  m.embedding_model = s.get<std::string>("embedding_model", "");
  m.embedding_stub = s.get<bool>("embedding_stub", false);
  m.novelty_train_split = as_config_error(path + ".novelty_train_split",
                                          [&] { return parse_split(s.get<std::string>("novelty_train_split", "train")); });
  s.done();
  if (o.bertscore && !m.embedding_endpoint && !m.embedding_stub) {
    throw ConfigError(path + ".bertscore needs embedding_endpoint or embedding_stub");
  }
  return m;
}

AnnotationConfig parse_annotation(const json& j, const std::string& path, const std::filesystem::path& base) {
  Section s(j, path);
  AnnotationConfig a;
  if (s.has("annotators")) {
    std::set<std::string> ids, tokens;
    std::size_t i = 0;
    for (const auto& e : s.raw("annotators")) {
      Section as(e, path + ".annotators[" + std::to_string(i++) + "]");
      AnnotatorConfig ac{as.required<std::string>("id"), as.required<std::string>("token")};
      as.done();
      if (ac.id.empty() || ac.token.empty()) throw ConfigError(path + ": annotator id and token must be non-empty");
      if (!ids.insert(ac.id).second) throw ConfigError(path + ": annotator '" + ac.id + "' listed twice");
      if (!tokens.insert(ac.token).second) throw ConfigError(path + ": annotator tokens must be distinct");
      a.annotators.push_back(std::move(ac));
    }
  }
  a.coordinator_token = s.get<std::string>("coordinator_token", "");
  a.shared_fraction = s.get<double>("shared_fraction", a.shared_fraction);
  if (a.shared_fraction < 0 || a.shared_fraction > 1) throw ConfigError(path + ".shared_fraction must lie in [0, 1]");
  a.feature_annotators = s.get<std::vector<std::string>>("feature_annotators", {});
  const auto k = s.get<long long>("feature_hs_count", 0);
  if (k < 0) throw ConfigError(path + ".feature_hs_count must be non-negative");
  a.feature_hs_count = static_cast<std::size_t>(k);
  a.host = s.get<std::string>("host", a.host);
  a.port = s.get<int>("port", a.port);
  if (a.port < 0 || a.port > 65535) throw ConfigError(path + ".port out of range");
  if (auto d = s.opt<std::string>("static_dir")) a.static_dir = resolve(base, *d);
  a.guidelines_version = s.get<std::string>("guidelines_version", a.guidelines_version);
  s.done();
  for (const auto& f : a.feature_annotators) {
    bool known = false;
    for (const auto& an : a.annotators) known = known || an.id == f;
    if (!known) throw ConfigError(path + ".feature_annotators names unknown annotator '" + f + "'");
  }
  return a;
}

}  // namespace

EndpointConfig RunConfig::endpoint_for(const std::string& base_url, const std::string& model) const {
  EndpointConfig e;
  e.base_url = base_url;
  e.model = model;
  e.api_key_env = endpoint.api_key_env;
  e.timeout_s = endpoint.timeout_s;
  e.retries = endpoint.retries;
  e.backoff_ms = endpoint.backoff_ms;
  return e;
}

std::vector<std::string> RunConfig::roster() const {
  std::vector<std::string> out;
  for (const auto& s : systems) out.push_back(s.descriptor.id);
  return out;
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  Section s(doc, "");
  RunConfig c;
  c.source = doc;
  c.run_root = resolve(base_dir, s.get<std::string>("run_root", "runs"));
  c.seed = s.get<std::uint64_t>("seed", 0);
  c.parallelism = s.get<int>("parallelism", c.parallelism);
  if (c.parallelism < 1) throw ConfigError("config.parallelism must be at least 1");
  c.fsync = s.get<bool>("fsync", true);

  if (!s.has("datasets")) throw ConfigError("config.datasets is required");
  {
    std::size_t i = 0;
    std::set<std::string> names;
    for (const auto& d : s.raw("datasets")) {
      c.datasets.push_back(parse_dataset(d, "config.datasets[" + std::to_string(i++) + "]", base_dir));
      if (!names.insert(c.datasets.back().name).second) {
        throw ConfigError("dataset '" + c.datasets.back().name + "' listed twice");
      }
    }
    if (c.datasets.empty()) throw ConfigError("config.datasets is empty");
  }

  if (auto t = s.opt<std::string>("templates_dir")) c.templates_dir = resolve(base_dir, *t);

  if (!s.has("systems")) throw ConfigError("config.systems is required");
  {
    std::size_t i = 0;
    std::set<std::string> ids;
    for (const auto& sys : s.raw("systems")) {
      c.systems.push_back(parse_system(sys, "config.systems[" + std::to_string(i++) + "]"));
      if (!ids.insert(c.systems.back().descriptor.id).second) {
        throw ConfigError("system '" + c.systems.back().descriptor.id + "' listed twice");
      }
    }
    if (c.systems.empty()) throw ConfigError("config.systems is empty: the roster needs at least one system");
  }

  if (s.has("decoding")) {
    c.decoding = as_config_error("config.decoding", [&] { return DecodingParams::from_json(s.raw("decoding")); });
  }
  if (s.has("endpoint")) {
    Section e(s.raw("endpoint"), "config.endpoint");
    c.endpoint.timeout_s = e.get<double>("timeout_s", c.endpoint.timeout_s);
    c.endpoint.retries = e.get<int>("retries", c.endpoint.retries);
    c.endpoint.backoff_ms = e.get<int>("backoff_ms", c.endpoint.backoff_ms);
    c.endpoint.api_key_env = e.opt<std::string>("api_key_env");
    e.done();
    if (c.endpoint.timeout_s <= 0 || c.endpoint.retries < 0 || c.endpoint.backoff_ms < 0) {
      throw ConfigError("config.endpoint values must be positive");
    }
  }
  c.refusal_patterns = s.opt<std::vector<std::string>>("refusal_patterns");
  if (s.has("judge")) {
    c.judge = parse_judge(s.raw("judge"), "config.judge");
  } else {
    c.judge.mock = MockJudge::Kind::kLength;
  }
  if (s.has("metrics")) c.metrics = parse_metrics(s.raw("metrics"), "config.metrics");
  if (s.has("annotation")) c.annotation = parse_annotation(s.raw("annotation"), "config.annotation", base_dir);
  if (s.has("correlate")) {
    Section cs(s.raw("correlate"), "config.correlate");
    const auto p = cs.get<std::string>("metric_pathway", "corpus");
    cs.done();
    if (p == "corpus") {
      c.metric_pathway = MetricPathway::kCorpus;
    } else if (p == "tournament") {
      c.metric_pathway = MetricPathway::kTournament;
    } else {
      throw ConfigError("config.correlate.metric_pathway must be 'corpus' or 'tournament'");
    }
  }
  s.done();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(doc, base);
}

}  // namespace cneval
