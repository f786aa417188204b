#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cneval/corpus.hpp"
#include "cneval/error.hpp"
#include "cneval/http_endpoint.hpp"
#include "cneval/promptkit.hpp"

namespace cneval {

class RunStore;
using json = nlohmann::json;

inline constexpr std::string_view kGoldSystemId = "gold standard";

struct DecodingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_new_tokens = 256;
  std::vector<std::string> stop = {"\n"};

  json to_json() const;
  static DecodingParams from_json(const json& j);
};

struct CnCandidate {
  std::string id;
  std::string hs_id;
  std::string system_id;
  std::string text;
  bool refusal_flag = false;
  json meta = json::object();

  json to_json() const;
  static CnCandidate from_json(const json& j);
};

/// Case-insensitive substring patterns marking a safety refusal.
class RefusalPatterns {
 public:
  RefusalPatterns();  // default list
  explicit RefusalPatterns(std::vector<std::string> patterns);

  bool matches(std::string_view text) const;
  const std::vector<std::string>& patterns() const { return patterns_; }

 private:
  std::vector<std::string> patterns_;
  std::vector<std::string> folded_;
};

/// Raises on an empty result; the message says whether the model said nothing
/// or only produced text after the first line break.
class EmptyOutputError : public Error {
 public:
  explicit EmptyOutputError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Applies the inference-time stopping rule: cut at the first line break, then trim.
std::string postprocess_completion(std::string_view raw);

/// A text-completion backend.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string complete(const std::string& prompt, const DecodingParams& decoding) = 0;
  virtual std::string label() const = 0;
};

struct MockSpec {
  enum class Kind { kRandom, kFixed, kRefuse };
  Kind kind = Kind::kRandom;
  std::uint64_t seed = 0;
  std::string text;  // kFixed
  int min_words = 6;
  int max_words = 24;

  static MockSpec from_json(const json& j);
  json to_json() const;
};

/// Deterministic offline generator. Output is a pure function of (spec, prompt).
/// Random completions carry a trailing second line so the stopping rule is exercised.
class MockGenerator final : public TextGenerator {
 public:
  explicit MockGenerator(MockSpec spec) : spec_(std::move(spec)) {}
  std::string complete(const std::string& prompt, const DecodingParams& decoding) override;
  std::string label() const override { return "mock"; }

 private:
  MockSpec spec_;
};

enum class ApiKind { kCompletions, kChat };

/// OpenAI-compatible client. kCompletions posts the rendered prompt to
/// /completions verbatim; kChat posts it as a single user message to /chat/completions.
class OpenAiGenerator final : public TextGenerator {
 public:
  OpenAiGenerator(EndpointConfig endpoint, ApiKind api = ApiKind::kCompletions);
  std::string complete(const std::string& prompt, const DecodingParams& decoding) override;
  std::string label() const override;

 private:
  HttpEndpoint endpoint_;
  ApiKind api_;
};

CnCandidate generate(const TemplateRegistry& registry, const SystemDescriptor& system, TextGenerator& generator,
                     const HsInstance& hs, const DecodingParams& decoding, const RefusalPatterns& refusals);

/// Picks one reference (uniformly by seed when several exist). Internal line
/// breaks are collapsed so the candidate stays single-line.
CnCandidate gold_candidate(const HsInstance& hs, std::span<const ReferenceCn* const> references, std::uint64_t seed,
                           std::string_view system_id = kGoldSystemId);

std::string candidate_id(std::string_view hs_id, std::string_view system_id);

struct GenerationFailure {
  std::string system_id;
  std::string hs_id;
  std::string error;
  int attempts = 1;
};

struct GenerationRun {
  std::string run_id;
  std::size_t expected = 0;
  std::size_t completed = 0;  // candidates in the store after this call
  std::size_t generated = 0;  // produced by this call
  std::vector<GenerationFailure> failures;
  json config_snapshot = json::object();

  bool complete() const { return completed == expected && failures.empty(); }
};

struct GenerationJob {
  std::vector<SystemDescriptor> systems;
  std::vector<HsInstance> hs_set;
  /// hs_id -> references, used by gold systems.
  std::function<std::vector<const ReferenceCn*>(const std::string&)> references;
  /// system_id -> backend; gold systems need none.
  std::map<std::string, std::shared_ptr<TextGenerator>> generators;
  const TemplateRegistry* registry = nullptr;
  DecodingParams decoding;
  RefusalPatterns refusals;
  std::uint64_t seed = 0;
  int parallelism = 1;
  json config_snapshot = json::object();
};

/// Produces every missing (system, hs) candidate into the store's candidates
/// stream. Already-stored pairs are skipped, so re-running resumes. Per-item
/// failures are collected, not thrown.
GenerationRun run_generation(const GenerationJob& job, RunStore& store);

/// Runs fn(i) for i in [0, n) on at most `parallelism` threads.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn);

}  // namespace cneval
