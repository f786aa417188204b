#include "cneval/arena.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <unordered_set>

#include "cneval/rng.hpp"
#include "cneval/store.hpp"
#include "cneval/text.hpp"

namespace cneval {

std::string_view to_string(PresentationOrder o) { return o == PresentationOrder::kAsIs ? "as-is" : "swapped"; }

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kA: return "A";
    case Outcome::kB: return "B";
    case Outcome::kTie: return "Tie";
  }
  return "Tie";
}

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::kOk: return "ok";
    case ParseStatus::kRecovered: return "recovered";
    case ParseStatus::kFailed: return "failed";
  }
  return "failed";
}

std::string_view to_string(JudgeMode m) { return m == JudgeMode::kFast ? "fast" : "normal"; }

PresentationOrder parse_presentation_order(std::string_view s) {
  if (s == "as-is") return PresentationOrder::kAsIs;
  if (s == "swapped") return PresentationOrder::kSwapped;
  throw SchemaError("presentation_order must be 'as-is' or 'swapped', got '" + std::string(s) + "'");
}

Outcome parse_outcome(std::string_view s) {
  if (s == "A") return Outcome::kA;
  if (s == "B") return Outcome::kB;
  if (s == "Tie") return Outcome::kTie;
  throw SchemaError("outcome must be A, B or Tie, got '" + std::string(s) + "'");
}

ParseStatus parse_parse_status(std::string_view s) {
  if (s == "ok") return ParseStatus::kOk;
  if (s == "recovered") return ParseStatus::kRecovered;
  if (s == "failed") return ParseStatus::kFailed;
  throw SchemaError("parse_status must be ok, recovered or failed, got '" + std::string(s) + "'");
}

JudgeMode parse_judge_mode(std::string_view s) {
  if (s == "fast") return JudgeMode::kFast;
  if (s == "normal") return JudgeMode::kNormal;
  throw ConfigError("judge mode must be 'fast' or 'normal', got '" + std::string(s) + "'");
}

json Tournament::to_json() const {
  json j{{"tournament_id", id},
         {"hs_id", hs_id},
         {"hs_text", hs_text},
         {"system_a", side_a.system_id},
         {"system_b", side_b.system_id},
         {"cn_a", side_a.text},
         {"cn_b", side_b.text},
         {"presentation_order", to_string(presentation_order)},
         {"order_seed", order_seed}};
  if (!dataset.empty()) j["dataset"] = dataset;
  return j;
}

Tournament Tournament::from_json(const json& j) {
  Tournament t;
  try {
    t.id = j.at("tournament_id").get<std::string>();
    t.hs_id = j.at("hs_id").get<std::string>();
    t.hs_text = j.value("hs_text", std::string());
    t.dataset = j.value("dataset", std::string());
    t.side_a = {j.at("system_a").get<std::string>(), j.at("cn_a").get<std::string>()};
    t.side_b = {j.at("system_b").get<std::string>(), j.at("cn_b").get<std::string>()};
    t.presentation_order = parse_presentation_order(j.at("presentation_order").get<std::string>());
    t.order_seed = j.at("order_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("plan record: ") + e.what());
  }
  return t;
}

std::size_t plan_size(std::size_t n_systems, std::size_t h_instances) {
  return n_systems < 2 ? 0 : n_systems * (n_systems - 1) / 2 * h_instances;
}

std::string tournament_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%07zu", index);
  return buf;
}

TournamentPlan schedule(const std::vector<std::string>& systems, const std::vector<PlanHs>& hs_set,
                        const CandidateLookup& candidates, std::uint64_t order_seed, bool fixed_order) {
  if (systems.size() < 2) throw ValidationError("a tournament plan needs at least 2 systems");
  if (hs_set.empty()) throw ValidationError("a tournament plan needs at least 1 hate-speech instance");
  {
    std::unordered_set<std::string> seen;
    for (const auto& s : systems) {
      if (!seen.insert(s).second) throw ValidationError("system '" + s + "' listed twice in the roster");
    }
    seen.clear();
    for (const auto& h : hs_set) {
      if (!seen.insert(h.id).second) throw ValidationError("hs '" + h.id + "' listed twice in the plan input");
    }
  }

  std::vector<std::vector<std::string>> texts(hs_set.size(), std::vector<std::string>(systems.size()));
  std::vector<std::pair<std::string, std::string>> missing;
  for (std::size_t h = 0; h < hs_set.size(); ++h) {
    for (std::size_t s = 0; s < systems.size(); ++s) {
      auto c = candidates(systems[s], hs_set[h].id);
      if (c) {
        texts[h][s] = std::move(*c);
      } else {
        missing.emplace_back(systems[s], hs_set[h].id);
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing candidates for " + std::to_string(missing.size()) + " (system, hs) pairs:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
      msg += " (" + missing[i].first + ", " + missing[i].second + ")";
    }
    if (missing.size() > 10) msg += " ...";
    throw PlanError(msg, std::move(missing));
  }

  TournamentPlan plan;
  plan.n_systems = systems.size();
  plan.h_instances = hs_set.size();
  plan.tournaments.reserve(plan_size(systems.size(), hs_set.size()));
  std::size_t index = 0;
  for (std::size_t h = 0; h < hs_set.size(); ++h) {
    for (std::size_t i = 0; i < systems.size(); ++i) {
      for (std::size_t j = i + 1; j < systems.size(); ++j) {
        Tournament t;
        t.id = tournament_id(index);
        t.hs_id = hs_set[h].id;
        t.hs_text = hs_set[h].text;
        t.dataset = hs_set[h].dataset;
        t.side_a = {systems[i], texts[h][i]};
        t.side_b = {systems[j], texts[h][j]};
        t.order_seed = derive_seed(order_seed, static_cast<std::uint64_t>(index));
        if (!fixed_order && Rng(t.order_seed).coin()) t.presentation_order = PresentationOrder::kSwapped;
        plan.tournaments.push_back(std::move(t));
        ++index;
      }
    }
  }
  return plan;
}

namespace {

// Plain decimal: digits with an optional fractional part.
std::optional<double> strict_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  bool digits = false;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
    ++i;
    digits = true;
  }
  if (!digits) return std::nullopt;
  if (i < s.size() && s[i] == '.') {
    ++i;
    bool frac = false;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
      ++i;
      frac = true;
    }
    if (!frac) return std::nullopt;
  }
  if (i != s.size()) return std::nullopt;
  return std::stod(std::string(s));
}

std::optional<std::pair<double, double>> score_line(std::string_view line) {
  const auto parts = text::split_whitespace(line);
  if (parts.size() != 2) return std::nullopt;
  const auto a = strict_decimal(parts[0]);
  const auto b = strict_decimal(parts[1]);
  if (!a || !b) return std::nullopt;
  if (*a < 1.0 || *a > 10.0 || *b < 1.0 || *b > 10.0) return std::nullopt;
  return std::make_pair(*a, *b);
}

}  // namespace

ParsedScores parse_verdict(std::string_view raw) {
  ParsedScores out;
  std::size_t pos = 0;
  bool first = true;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto line = raw.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto s = score_line(line)) {
      out.first = s->first;
      out.second = s->second;
      out.status = first ? ParseStatus::kOk : ParseStatus::kRecovered;
      return out;
    }
    first = false;
    pos = nl + 1;
  }
  return out;
}

Outcome outcome_from_scores(double score_a, double score_b) {
  if (score_a > score_b) return Outcome::kA;
  if (score_b > score_a) return Outcome::kB;
  return Outcome::kTie;
}

json JudgeVerdict::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j{{"tournament_id", tournament_id},
         {"hs_id", hs_id},
         {"system_a", system_a},
         {"system_b", system_b},
         {"judge_id", judge_id},
         {"score_a", opt(score_a)},
         {"score_b", opt(score_b)},
         {"outcome", to_string(outcome)},
         {"parse_status", to_string(parse_status)},
         {"raw_response", raw_response},
         {"presentation_order", to_string(presentation_order)},
         {"attempts", attempts}};
  if (rationale) j["rationale"] = *rationale;
  return j;
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
  JudgeVerdict v;
  try {
    v.tournament_id = j.at("tournament_id").get<std::string>();
    v.hs_id = j.at("hs_id").get<std::string>();
    v.system_a = j.at("system_a").get<std::string>();
    v.system_b = j.at("system_b").get<std::string>();
    v.judge_id = j.at("judge_id").get<std::string>();
    if (!j.at("score_a").is_null()) v.score_a = j.at("score_a").get<double>();
    if (!j.at("score_b").is_null()) v.score_b = j.at("score_b").get<double>();
    v.outcome = parse_outcome(j.at("outcome").get<std::string>());
    v.parse_status = parse_parse_status(j.at("parse_status").get<std::string>());
    v.raw_response = j.at("raw_response").get<std::string>();
    if (j.contains("rationale")) v.rationale = j["rationale"].get<std::string>();
    if (j.contains("presentation_order")) {
      v.presentation_order = parse_presentation_order(j["presentation_order"].get<std::string>());
    }
    v.attempts = j.value("attempts", 1);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("verdict record: ") + e.what());
  }
  return v;
}

MockJudge::MockJudge(Kind kind, std::string id) : kind_(kind), id_(std::move(id)) {
  if (id_.empty()) {
    static constexpr std::string_view kNames[] = {"mock-length", "mock-hash", "mock-first", "mock-garbage"};
    id_ = std::string(kNames[static_cast<int>(kind)]);
  }
}

MockJudge::Kind MockJudge::parse_kind(std::string_view s) {
  if (s == "length") return Kind::kLength;
  if (s == "hash") return Kind::kHash;
  if (s == "first") return Kind::kFirst;
  if (s == "garbage") return Kind::kGarbage;
  throw ConfigError("unknown mock judge '" + std::string(s) + "' (length, hash, first, garbage)");
}

std::string MockJudge::respond(const JudgeRequest& request) {
  switch (kind_) {
    case Kind::kLength: {
      const auto a = text::split_whitespace(request.first).size();
      const auto b = text::split_whitespace(request.second).size();
      if (a == b) return "5 5";
      return a > b ? "8 3" : "3 8";
    }
    case Kind::kHash: {
      const auto a = 1 + fnv1a64(request.first) % 10;
      const auto b = 1 + fnv1a64(request.second) % 10;
      return std::to_string(a) + " " + std::to_string(b);
    }
    case Kind::kFirst:
      return "9 3";
    case Kind::kGarbage:
      return "I would rather not score these answers.";
  }
  return {};
}

RemoteJudge::RemoteJudge(std::string id, EndpointConfig endpoint, ApiKind api, JudgeMode mode)
    : id_(std::move(id)), client_(std::move(endpoint), api), mode_(mode) {}

std::string RemoteJudge::respond(const JudgeRequest& request) {
  DecodingParams d;
  d.temperature = 0.0;
  if (mode_ == JudgeMode::kFast) {
    d.max_new_tokens = 16;
    d.stop = {"\n"};
  } else {
    d.max_new_tokens = 512;
    d.stop.clear();
  }
  return client_.complete(request.prompt, d);
}

Adjudication adjudicate(const Tournament& t, Judge& judge, const TemplateRegistry& registry, int retries,
                        JudgeMode mode) {
  JudgeRequest req;
  req.hs = t.hs_text;
  req.first = t.first_shown().text;
  req.second = t.second_shown().text;
  req.prompt = render_judge_prompt(registry, req.hs, req.first, req.second);

  Adjudication out;
  std::optional<std::string> raw;
  ParsedScores parsed;
  const int attempts = std::max(0, retries) + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    out.attempts = attempt;
    try {
      raw = judge.respond(req);
    } catch (const TransportError& e) {
      out.error = e.what();
      continue;
    }
    parsed = parse_verdict(*raw);
    if (parsed.status != ParseStatus::kFailed) break;
  }
  if (!raw) return out;

  JudgeVerdict v;
  v.tournament_id = t.id;
  v.hs_id = t.hs_id;
  v.system_a = t.side_a.system_id;
  v.system_b = t.side_b.system_id;
  v.judge_id = judge.id();
  v.raw_response = *raw;
  v.parse_status = parsed.status;
  v.presentation_order = t.presentation_order;
  v.attempts = out.attempts;
  if (parsed.status != ParseStatus::kFailed) {
    const bool swapped = t.presentation_order == PresentationOrder::kSwapped;
    v.score_a = swapped ? parsed.second : parsed.first;
    v.score_b = swapped ? parsed.first : parsed.second;
    v.outcome = outcome_from_scores(*v.score_a, *v.score_b);
    if (mode == JudgeMode::kNormal) {
      const auto nl = raw->find('\n');
      if (nl != std::string::npos) {
        auto rest = text::trim(std::string_view(*raw).substr(nl + 1));
        if (!rest.empty()) v.rationale = std::move(rest);
      }
    }
  } else {
    v.outcome = Outcome::kTie;
  }
  out.error.clear();
  out.verdict = std::move(v);
  return out;
}

json RunHealth::to_json() const {
  return json{{"planned", planned},
              {"judged", judged},
              {"new_verdicts", new_verdicts},
              {"parse_ok", parse_ok},
              {"parse_recovered", parse_recovered},
              {"parse_failed", parse_failed},
              {"parse_failure_rate", parse_failure_rate()},
              {"transport_failures", transport_failures},
              {"complete", complete()},
              {"errors", errors}};
}

RunHealth run_tournaments(const TournamentPlan& plan, const TournamentJob& job, RunStore& store) {
  if (!job.registry || !job.judge) throw ConfigError("tournament job needs a template registry and a judge");
  RunHealth health;
  health.planned = plan.tournaments.size();

  std::vector<json> plan_records;
  for (const auto& t : plan.tournaments) {
    if (!store.contains_key(streams::kPlan, t.id)) plan_records.push_back(t.to_json());
  }
  if (!plan_records.empty()) store.append_batch(streams::kPlan, plan_records);

  std::vector<const Tournament*> todo;
  for (const auto& t : plan.tournaments) {
    if (!store.contains_key(streams::kVerdicts, t.id)) todo.push_back(&t);
  }

  std::mutex mu;
  parallel_for(todo.size(), job.parallelism, [&](std::size_t i) {
    const auto& t = *todo[i];
    auto adj = adjudicate(t, *job.judge, *job.registry, job.retries, job.mode);
    if (!adj.verdict) {
      std::lock_guard lock(mu);
      ++health.transport_failures;
      if (health.errors.size() < 20) health.errors.push_back(t.id + ": " + adj.error);
      return;
    }
    store.append(streams::kVerdicts, adj.verdict->to_json());
    std::lock_guard lock(mu);
    ++health.new_verdicts;
  });

  std::unordered_set<std::string> planned;
  for (const auto& t : plan.tournaments) planned.insert(t.id);
  for (const auto& r : store.load_stream(streams::kVerdicts).records) {
    if (!planned.count(r.at("tournament_id").get<std::string>())) continue;
    ++health.judged;
    const auto status = parse_parse_status(r.at("parse_status").get<std::string>());
    if (status == ParseStatus::kOk) ++health.parse_ok;
    if (status == ParseStatus::kRecovered) ++health.parse_recovered;
    if (status == ParseStatus::kFailed) ++health.parse_failed;
  }
  return health;
}

ScoreBoard ScoreBoard::from_scores(const std::map<std::string, double>& scores) {
  if (scores.empty()) throw ValidationError("empty scoreboard");
  ScoreBoard b;
  b.points = scores;
  double total = 0.0;
  for (const auto& [_, v] : scores) total += v;
  for (const auto& [k, v] : scores) b.normalized_share[k] = total != 0.0 ? 100.0 * v / total : 0.0;
  return b;
}

json ScoreBoard::to_json() const {
  return json{{"points", points}, {"total_tournaments", total_tournaments}, {"normalized_share", normalized_share}};
}

ScoreBoard score(std::span<const Match> matches) {
  if (matches.empty()) throw ValidationError("empty scoreboard: no judged tournaments");
  ScoreBoard b;
  for (const auto& m : matches) {
    if (m.system_a == m.system_b) throw ValidationError("system '" + m.system_a + "' paired with itself");
    auto& pa = b.points[m.system_a];
    auto& pb = b.points[m.system_b];
    switch (m.outcome) {
      case Outcome::kA: pa += 1.0; break;
      case Outcome::kB: pb += 1.0; break;
      case Outcome::kTie:
        pa += 0.5;
        pb += 0.5;
        break;
    }
  }
  b.total_tournaments = matches.size();
  // Points are multiples of 0.5, so the sum is exact and order independent.
  const double total = static_cast<double>(matches.size());
  for (const auto& [k, v] : b.points) b.normalized_share[k] = 100.0 * v / total;
  return b;
}

ScoreBoard score(std::span<const JudgeVerdict> verdicts) {
  std::vector<Match> m;
  m.reserve(verdicts.size());
  for (const auto& v : verdicts) m.push_back({v.system_a, v.system_b, v.outcome});
  return score(std::span<const Match>(m));
}

std::vector<RankEntry> rank(const ScoreBoard& board) {
  std::vector<RankEntry> out;
  for (const auto& [k, v] : board.points) {
    auto it = board.normalized_share.find(k);
    out.push_back({0, k, v, it == board.normalized_share.end() ? 0.0 : it->second});
  }
  std::sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.points != b.points) return a.points > b.points;
    return a.system_id < b.system_id;
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].rank = (i > 0 && out[i].points == out[i - 1].points) ? out[i - 1].rank : static_cast<int>(i + 1);
  }
  return out;
}

json rank_to_json(const std::vector<RankEntry>& ranking) {
  json arr = json::array();
  for (const auto& e : ranking) {
    arr.push_back({{"rank", e.rank}, {"system_id", e.system_id}, {"points", e.points}, {"share", e.share}});
  }
  return arr;
}

}  // namespace cneval
