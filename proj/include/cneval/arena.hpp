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

#include "cneval/error.hpp"
#include "cneval/genclient.hpp"
#include "cneval/http_endpoint.hpp"
#include "cneval/promptkit.hpp"

namespace cneval {

class RunStore;
using json = nlohmann::json;

enum class PresentationOrder { kAsIs, kSwapped };
enum class Outcome { kA, kB, kTie };
enum class ParseStatus { kOk, kRecovered, kFailed };

std::string_view to_string(PresentationOrder o);
std::string_view to_string(Outcome o);
std::string_view to_string(ParseStatus s);
PresentationOrder parse_presentation_order(std::string_view s);
Outcome parse_outcome(std::string_view s);
ParseStatus parse_parse_status(std::string_view s);

struct Side {
  std::string system_id;
  std::string text;
};

/// One A-vs-B comparison. side_a is always the system listed earlier in the
/// roster; presentation_order says whether the judge sees it first.
struct Tournament {
  std::string id;
  std::string hs_id;
  std::string hs_text;
  std::string dataset;  // stratum tag, may be empty
  Side side_a;
  Side side_b;
  PresentationOrder presentation_order = PresentationOrder::kAsIs;
  std::uint64_t order_seed = 0;

  const Side& first_shown() const { return presentation_order == PresentationOrder::kAsIs ? side_a : side_b; }
  const Side& second_shown() const { return presentation_order == PresentationOrder::kAsIs ? side_b : side_a; }

  json to_json() const;
  static Tournament from_json(const json& j);
};

struct TournamentPlan {
  std::size_t n_systems = 0;
  std::size_t h_instances = 0;
  std::vector<Tournament> tournaments;
};

/// n(n-1)/2 * h.
std::size_t plan_size(std::size_t n_systems, std::size_t h_instances);

struct PlanHs {
  std::string id;
  std::string text;
  std::string dataset;
};

/// Returns the candidate text of (system_id, hs_id), if any.
using CandidateLookup = std::function<std::optional<std::string>(const std::string&, const std::string&)>;

class PlanError : public ValidationError {
 public:
  PlanError(const std::string& what, std::vector<std::pair<std::string, std::string>> missing)
      : ValidationError(what), missing_(std::move(missing)) {}
  const std::vector<std::pair<std::string, std::string>>& missing() const { return missing_; }

 private:
  std::vector<std::pair<std::string, std::string>> missing_;
};

std::string tournament_id(std::size_t index);

/// Every unordered system pair for every HS. The presentation order of
/// tournament i is a coin flip seeded by derive_seed(order_seed, i); with
/// fixed_order every tournament is shown as-is.
TournamentPlan schedule(const std::vector<std::string>& systems, const std::vector<PlanHs>& hs_set,
                        const CandidateLookup& candidates, std::uint64_t order_seed, bool fixed_order = false);

struct ParsedScores {
  std::optional<double> first;
  std::optional<double> second;
  ParseStatus status = ParseStatus::kFailed;
};

/// A line qualifies when it splits on whitespace into exactly two plain
/// decimals, each in [1, 10]. The first line qualifying gives kOk, a later
/// line gives kRecovered, none gives kFailed.
ParsedScores parse_verdict(std::string_view raw);

struct JudgeVerdict {
  std::string tournament_id;
  std::string hs_id;
  std::string system_a;
  std::string system_b;
  std::string judge_id;
  std::optional<double> score_a;
  std::optional<double> score_b;
  Outcome outcome = Outcome::kTie;
  std::optional<std::string> rationale;
  std::string raw_response;
  ParseStatus parse_status = ParseStatus::kFailed;
  PresentationOrder presentation_order = PresentationOrder::kAsIs;
  int attempts = 1;

  json to_json() const;
  static JudgeVerdict from_json(const json& j);
};

Outcome outcome_from_scores(double score_a, double score_b);

struct JudgeRequest {
  std::string prompt;
  std::string hs;
  std::string first;
  std::string second;
};

/// Returns the raw judge response. Transport problems raise TransportError.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string respond(const JudgeRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Offline judges with documented rules:
///   length  - the side with more whitespace words gets 8, the other 3; equal counts give "5 5"
///   hash    - each side scores 1 + fnv1a64(text) % 10, independently of position
///   first   - always "9 3" (prefers whatever is shown first)
///   garbage - never emits a parseable line
class MockJudge final : public Judge {
 public:
  enum class Kind { kLength, kHash, kFirst, kGarbage };
  explicit MockJudge(Kind kind, std::string id = {});
  static Kind parse_kind(std::string_view s);

  std::string respond(const JudgeRequest& request) override;
  std::string id() const override { return id_; }

 private:
  Kind kind_;
  std::string id_;
};

/// Wraps a callable, for scripted tests.
class FunctionJudge final : public Judge {
 public:
  FunctionJudge(std::string id, std::function<std::string(const JudgeRequest&)> fn)
      : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string respond(const JudgeRequest& request) override { return fn_(request); }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  std::function<std::string(const JudgeRequest&)> fn_;
};

enum class JudgeMode { kFast, kNormal };
JudgeMode parse_judge_mode(std::string_view s);
std::string_view to_string(JudgeMode m);

/// Judge served by an OpenAI-compatible endpoint. Fast mode asks for the score
/// line only; normal mode lets the model continue with its explanation.
class RemoteJudge final : public Judge {
 public:
  RemoteJudge(std::string id, EndpointConfig endpoint, ApiKind api, JudgeMode mode);
  std::string respond(const JudgeRequest& request) override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
  OpenAiGenerator client_;
  JudgeMode mode_;
};

struct Adjudication {
  /// Absent when every attempt failed in transport.
  std::optional<JudgeVerdict> verdict;
  std::string error;
  int attempts = 0;
};

/// Renders the judge prompt in presentation order, asks the judge up to
/// retries + 1 times until a score line parses, and maps the scores back to
/// canonical sides. An unparseable final answer becomes a flagged tie.
Adjudication adjudicate(const Tournament& t, Judge& judge, const TemplateRegistry& registry, int retries,
                        JudgeMode mode = JudgeMode::kFast);

struct TournamentJob {
  const TemplateRegistry* registry = nullptr;
  std::shared_ptr<Judge> judge;
  int retries = 2;
  int parallelism = 1;
  JudgeMode mode = JudgeMode::kFast;
};

struct RunHealth {
  std::size_t planned = 0;
  std::size_t judged = 0;         // verdicts in the store after this call
  std::size_t new_verdicts = 0;   // produced by this call
  std::size_t parse_ok = 0;
  std::size_t parse_recovered = 0;
  std::size_t parse_failed = 0;
  std::size_t transport_failures = 0;
  std::vector<std::string> errors;

  bool complete() const { return judged == planned && transport_failures == 0; }
  double parse_failure_rate() const {
    return judged ? static_cast<double>(parse_failed) / static_cast<double>(judged) : 0.0;
  }
  json to_json() const;
};

/// Writes any missing plan records, then adjudicates every tournament without
/// a stored verdict. Safe to re-run.
RunHealth run_tournaments(const TournamentPlan& plan, const TournamentJob& job, RunStore& store);

/// Minimal input to scoring: who met whom and how it ended.
struct Match {
  std::string system_a;
  std::string system_b;
  Outcome outcome = Outcome::kTie;
};

struct ScoreBoard {
  std::map<std::string, double> points;
  std::size_t total_tournaments = 0;
  std::map<std::string, double> normalized_share;

  /// Treats the given values as points (e.g. a published score column).
  static ScoreBoard from_scores(const std::map<std::string, double>& scores);
  json to_json() const;
};

/// Win 1, loss 0, tie 0.5 each; shares are 100 * points / total points.
ScoreBoard score(std::span<const Match> matches);
ScoreBoard score(std::span<const JudgeVerdict> verdicts);

struct RankEntry {
  int rank = 0;
  std::string system_id;
  double points = 0.0;
  double share = 0.0;
};

/// Descending by points; exact ties share the smaller rank and are listed by system_id.
std::vector<RankEntry> rank(const ScoreBoard& board);
json rank_to_json(const std::vector<RankEntry>& ranking);

}  // namespace cneval
