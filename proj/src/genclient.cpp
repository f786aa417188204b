#include "cneval/genclient.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "cneval/error.hpp"
#include "cneval/rng.hpp"
#include "cneval/store.hpp"
#include "cneval/text.hpp"

namespace cneval {

json DecodingParams::to_json() const {
  return json{{"temperature", temperature}, {"top_p", top_p}, {"max_new_tokens", max_new_tokens}, {"stop", stop}};
}

DecodingParams DecodingParams::from_json(const json& j) {
  DecodingParams d;
  for (const auto& [key, value] : j.items()) {
    if (key == "temperature") {
      d.temperature = value.get<double>();
    } else if (key == "top_p") {
      d.top_p = value.get<double>();
    } else if (key == "max_new_tokens") {
      d.max_new_tokens = value.get<int>();
    } else if (key == "stop") {
      d.stop = value.get<std::vector<std::string>>();
    } else {
      throw ConfigError("unknown decoding key '" + key + "'");
    }
  }
  if (d.max_new_tokens <= 0) throw ConfigError("decoding.max_new_tokens must be positive");
  if (d.temperature < 0) throw ConfigError("decoding.temperature must be non-negative");
  return d;
}

json CnCandidate::to_json() const {
  return json{{"id", id},       {"hs_id", hs_id},
              {"system_id", system_id}, {"text", text},
              {"refusal_flag", refusal_flag}, {"meta", meta}};
}

CnCandidate CnCandidate::from_json(const json& j) {
  CnCandidate c;
  c.id = j.at("id").get<std::string>();
  c.hs_id = j.at("hs_id").get<std::string>();
  c.system_id = j.at("system_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.refusal_flag = j.value("refusal_flag", false);
  c.meta = j.value("meta", json::object());
  return c;
}

namespace {

std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // U+2019 RIGHT SINGLE QUOTATION MARK folds to an ASCII apostrophe.
    if (s.compare(i, 3, "\xE2\x80\x99") == 0) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    const char c = s[i];
    out.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c);
  }
  return out;
}

}  // namespace

RefusalPatterns::RefusalPatterns()
    : RefusalPatterns({"I cannot fulfill your request", "I can't fulfill your request",
                       "I cannot provide a counter-narrative", "I'm just an AI"}) {}

RefusalPatterns::RefusalPatterns(std::vector<std::string> patterns) : patterns_(std::move(patterns)) {
  for (const auto& p : patterns_) folded_.push_back(fold(p));
}

bool RefusalPatterns::matches(std::string_view text) const {
  const auto t = fold(text);
  return std::any_of(folded_.begin(), folded_.end(),
                     [&](const std::string& p) { return !p.empty() && t.find(p) != std::string::npos; });
}

std::string postprocess_completion(std::string_view raw) {
  const auto nl = raw.find_first_of("\r\n");
  const auto first = raw.substr(0, nl);
  auto out = text::trim(first);
  if (out.empty()) {
    throw EmptyOutputError(nl == std::string_view::npos || text::trim(raw).empty()
                               ? "model returned an empty completion"
                               : "model output is empty before the first line break");
  }
  return out;
}

MockSpec MockSpec::from_json(const json& j) {
  MockSpec m;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      const auto k = value.get<std::string>();
      if (k == "random") {
        m.kind = Kind::kRandom;
      } else if (k == "fixed") {
        m.kind = Kind::kFixed;
      } else if (k == "refuse") {
        m.kind = Kind::kRefuse;
      } else {
        throw ConfigError("unknown mock kind '" + k + "'");
      }
    } else if (key == "seed") {
      m.seed = value.get<std::uint64_t>();
    } else if (key == "text") {
      m.text = value.get<std::string>();
    } else if (key == "min_words") {
      m.min_words = value.get<int>();
    } else if (key == "max_words") {
      m.max_words = value.get<int>();
    } else {
      throw ConfigError("unknown mock key '" + key + "'");
    }
  }
  if (m.min_words < 1 || m.max_words < m.min_words) throw ConfigError("mock word bounds are invalid");
  if (m.kind == Kind::kFixed && text::trim(m.text).empty()) throw ConfigError("fixed mock needs non-empty text");
  return m;
}

json MockSpec::to_json() const {
  const char* k = kind == Kind::kRandom ? "random" : (kind == Kind::kFixed ? "fixed" : "refuse");
  return json{{"kind", k}, {"seed", seed}, {"text", text}, {"min_words", min_words}, {"max_words", max_words}};
}

std::string MockGenerator::complete(const std::string& prompt, const DecodingParams&) {
  switch (spec_.kind) {
    case MockSpec::Kind::kFixed:
      return spec_.text;
    case MockSpec::Kind::kRefuse:
      return "I apologize, but I cannot fulfill your request. I'm just an AI and it's not within my "
             "programming or ethical guidelines to provide counter-narratives that promote hate speech.";
    case MockSpec::Kind::kRandom:
      break;
  }
  static constexpr std::string_view kWords[] = {
      "people",   "community", "respect",  "facts",     "history",   "diversity", "every",    "religion",
      "share",    "values",    "peace",    "neighbours", "work",     "together",  "many",     "contribute",
      "society",  "culture",   "evidence", "shows",     "hate",      "helps",     "nobody",   "families",
      "doctors",  "teachers",  "friends",  "country",   "rights",    "equal",     "dignity",  "stories",
      "research", "economy",   "kindness", "schools",   "learn",     "listen",    "differences", "strength"};
  constexpr std::size_t kVocab = sizeof(kWords) / sizeof(kWords[0]);
  Rng rng(derive_seed(spec_.seed, prompt));
  const auto span = static_cast<std::uint64_t>(spec_.max_words - spec_.min_words + 1);
  const auto n = static_cast<std::size_t>(spec_.min_words) + rng.below(span);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    std::string w(kWords[rng.below(kVocab)]);
    if (i == 0) w[0] = static_cast<char>(w[0] - 32);
    out += w;
  }
  out += ".\n###Input:\n";
  return out;
}

OpenAiGenerator::OpenAiGenerator(EndpointConfig endpoint, ApiKind api) : endpoint_(std::move(endpoint)), api_(api) {}

std::string OpenAiGenerator::label() const {
  return endpoint_.url(api_ == ApiKind::kChat ? "/chat/completions" : "/completions");
}

std::string OpenAiGenerator::complete(const std::string& prompt, const DecodingParams& decoding) {
  json body{{"model", endpoint_.config().model},
            {"max_tokens", decoding.max_new_tokens},
            {"temperature", decoding.temperature},
            {"top_p", decoding.top_p}};
  if (!decoding.stop.empty()) body["stop"] = decoding.stop;
  json res;
  if (api_ == ApiKind::kChat) {
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    res = endpoint_.post_json("/chat/completions", body);
  } else {
    body["prompt"] = prompt;
    res = endpoint_.post_json("/completions", body);
  }
  try {
    const auto& choice = res.at("choices").at(0);
    if (api_ == ApiKind::kChat) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("malformed completion response from " + label());
  }
}

std::string candidate_id(std::string_view hs_id, std::string_view system_id) {
  return std::string(hs_id) + "@" + std::string(system_id);
}

CnCandidate generate(const TemplateRegistry& registry, const SystemDescriptor& system, TextGenerator& generator,
                     const HsInstance& hs, const DecodingParams& decoding, const RefusalPatterns& refusals) {
  const auto prompt = render_generation_prompt(registry, system, hs);
  const auto& tmpl = registry.get(system.effective_template_tag());
  const auto t0 = std::chrono::steady_clock::now();
  const auto raw = generator.complete(prompt, decoding);
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  CnCandidate c;
  c.hs_id = hs.id;
  c.system_id = system.id;
  c.id = candidate_id(hs.id, system.id);
  c.text = postprocess_completion(raw);
  c.refusal_flag = refusals.matches(c.text);
  c.meta = json{{"latency_ms", ms},
                {"endpoint", generator.label()},
                {"template", tmpl.tag},
                {"template_version", tmpl.version}};
  return c;
}

CnCandidate gold_candidate(const HsInstance& hs, std::span<const ReferenceCn* const> references, std::uint64_t seed,
                           std::string_view system_id) {
  if (references.empty()) throw ValidationError("no reference counter-narrative for hs '" + hs.id + "'");
  Rng rng(seed);
  const auto pick = references.size() == 1 ? 0 : static_cast<std::size_t>(rng.below(references.size()));
  CnCandidate c;
  c.hs_id = hs.id;
  c.system_id = std::string(system_id);
  c.id = candidate_id(hs.id, system_id);
  c.text = text::trim(text::collapse_newlines(references[pick]->text));
  c.refusal_flag = false;
  c.meta = json{{"reference_index", pick}, {"reference_count", references.size()}};
  return c;
}

void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

GenerationRun run_generation(const GenerationJob& job, RunStore& store) {
  if (job.parallelism < 1) throw ConfigError("parallelism must be a positive integer");
  if (!job.registry) throw ConfigError("generation job has no template registry");
  for (const auto& s : job.systems) {
    s.validate();
    if (s.mode != GenMode::kGold && !job.generators.count(s.id)) {
      throw ConfigError("no generator configured for system '" + s.id + "'");
    }
  }
  const auto* schema = schema_for(streams::kCandidates);

  struct Item {
    const SystemDescriptor* system;
    const HsInstance* hs;
  };
  std::vector<Item> todo;
  for (const auto& s : job.systems) {
    for (const auto& hs : job.hs_set) {
      const auto key = record_key(*schema, json{{"hs_id", hs.id}, {"system_id", s.id}});
      if (!store.contains_key(streams::kCandidates, key)) todo.push_back({&s, &hs});
    }
  }

  GenerationRun run;
  run.run_id = store.run_id();
  run.expected = job.systems.size() * job.hs_set.size();
  run.config_snapshot = job.config_snapshot;
  std::mutex mu;
  std::atomic<std::size_t> generated{0};

  parallel_for(todo.size(), job.parallelism, [&](std::size_t i) {
    const auto& item = todo[i];
    try {
      CnCandidate c;
      if (item.system->mode == GenMode::kGold) {
        const auto refs = job.references ? job.references(item.hs->id) : std::vector<const ReferenceCn*>{};
        c = gold_candidate(*item.hs, refs, derive_seed(job.seed, "gold:" + item.hs->id), item.system->id);
      } else {
        auto& gen = *job.generators.at(item.system->id);
        c = generate(*job.registry, *item.system, gen, *item.hs, job.decoding, job.refusals);
      }
      store.append(streams::kCandidates, c.to_json());
      generated.fetch_add(1);
    } catch (const TransportError& e) {
      std::lock_guard lock(mu);
      run.failures.push_back({item.system->id, item.hs->id, e.what(), e.attempts()});
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      run.failures.push_back({item.system->id, item.hs->id, e.what(), 1});
    }
  });

  run.generated = generated.load();
  run.completed = store.count(streams::kCandidates);
  std::sort(run.failures.begin(), run.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.system_id, a.hs_id) < std::tie(b.system_id, b.hs_id);
  });
  return run;
}

}  // namespace cneval
