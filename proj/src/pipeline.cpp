#include "cneval/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "cneval/error.hpp"
#include "cneval/rng.hpp"
#include "cneval/text.hpp"

namespace cneval {

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using CandidateMap = std::map<std::pair<std::string, std::string>, CnCandidate>;  // (system, hs) -> candidate

CandidateMap load_candidates(const RunStore& store) {
  CandidateMap out;
  if (!store.has_stream(streams::kCandidates)) return out;
  for (const auto& r : store.load_stream(streams::kCandidates).records) {
    auto c = CnCandidate::from_json(r);
    out.emplace(std::make_pair(c.system_id, c.hs_id), std::move(c));
  }
  return out;
}

std::vector<JudgeVerdict> load_verdicts(const RunStore& store) {
  std::vector<JudgeVerdict> out;
  if (!store.has_stream(streams::kVerdicts)) return out;
  for (const auto& r : store.load_stream(streams::kVerdicts).records) out.push_back(JudgeVerdict::from_json(r));
  return out;
}

std::vector<Tournament> load_plan(const RunStore& store) {
  std::vector<Tournament> out;
  if (!store.has_stream(streams::kPlan)) return out;
  for (const auto& r : store.load_stream(streams::kPlan).records) out.push_back(Tournament::from_json(r));
  return out;
}

std::unique_ptr<RunStore> existing_run(const RunConfig& config, const std::string& run_id) {
  if (!std::filesystem::exists(config.run_root / run_id / "manifest.json")) {
    throw Error(ErrorKind::kData, "run '" + run_id + "' does not exist under " + config.run_root.string());
  }
  return std::make_unique<RunStore>(config.run_root, run_id, StoreOptions{config.fsync});
}

std::shared_ptr<TextGenerator> make_generator(const RunConfig& config, const SystemConfig& s) {
  if (s.mock) return std::make_shared<MockGenerator>(*s.mock);
  if (s.descriptor.endpoint) {
    return std::make_shared<OpenAiGenerator>(config.endpoint_for(*s.descriptor.endpoint, s.model), s.api);
  }
  return nullptr;
}

std::shared_ptr<Judge> make_judge(const RunConfig& config) {
  const auto& j = config.judge;
  if (j.mock) return std::make_shared<MockJudge>(*j.mock, j.id);
  return std::make_shared<RemoteJudge>(j.id, config.endpoint_for(*j.endpoint, j.model), j.api, j.mode);
}

std::optional<ScoreBoard> human_board(const RunConfig& config, const RunStore& store,
                                      const std::vector<Tournament>& plan, std::ostream& log) {
  if (config.annotation.annotators.empty() || plan.empty() || !store.has_stream(streams::kAnnotations)) {
    return std::nullopt;
  }
  const auto latest =
      latest_wins(*schema_for(streams::kAnnotations), store.load_stream(streams::kAnnotations).records);
  if (latest.empty()) return std::nullopt;
  const auto settings = annotation_settings(config);
  std::vector<PlanItem> items;
  for (const auto& t : plan) items.push_back({t.id, t.dataset});
  const auto assignment = plan_assignments(items, settings.annotators, settings.shared_fraction, settings.seed);
  const auto records = annotation_records(latest);
  try {
    return human_scoreboard(plan, assignment, records, false);
  } catch (const ValidationError& e) {
    log << "warning: human evaluation incomplete (" << e.what() << "); using the partial scoreboard\n";
    return human_scoreboard(plan, assignment, records, true);
  }
}

}  // namespace

void apply_overrides(RunConfig& config, const CliOverrides& o) {
  if (o.seed) {
    config.seed = *o.seed;
    config.source["seed"] = *o.seed;
  }
  if (o.parallelism) {
    if (*o.parallelism < 1) throw ConfigError("--parallelism must be at least 1");
    config.parallelism = *o.parallelism;
    config.source["parallelism"] = *o.parallelism;
  }
  if (o.judge_mode) {
    config.judge.mode = *o.judge_mode;
    config.source["judge"]["mode"] = std::string(to_string(*o.judge_mode));
  }
  if (o.fixed_order) {
    config.judge.fixed_order = true;
    config.source["judge"]["fixed_order"] = true;
  }
}

std::vector<const ReferenceCn*> LoadedData::references(const std::string& hs_id) const {
  auto it = origin.find(hs_id);
  if (it == origin.end()) return {};
  return datasets[it->second.first].references_for(it->second.second);
}

std::vector<std::string> LoadedData::cn_texts(Split split) const {
  std::vector<std::string> out;
  for (const auto& d : datasets) {
    for (const auto& p : d.pairs) {
      if (d.instances[p.hs].split == split) out.push_back(d.references[p.ref].text);
    }
  }
  return out;
}

LoadedData load_data(const RunConfig& config) {
  LoadedData out;
  const bool qualify = config.datasets.size() > 1;
  std::string fingerprint_src;
  for (std::size_t di = 0; di < config.datasets.size(); ++di) {
    const auto& dc = config.datasets[di];
    const auto content = slurp(dc.path);
    fingerprint_src += dc.name + ":" + sha256_hex(content) + "\n";
    auto ds = parse_dataset(content, dc.format, dc.name);
    if (dc.dedup) ds = dedup(ds, derive_seed(config.seed, "dedup:" + dc.name));
    std::vector<const HsInstance*> chosen;
    for (const auto& inst : ds.instances) {
      if (std::find(dc.splits.begin(), dc.splits.end(), inst.split) != dc.splits.end()) chosen.push_back(&inst);
    }
    if (chosen.empty()) throw EmptyDatasetError("dataset '" + dc.name + "' has no instances in the selected splits");
    if (dc.hs_sample && *dc.hs_sample < chosen.size()) {
      std::vector<std::size_t> idx(chosen.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng(derive_seed(config.seed, "sample:" + dc.name)).shuffle(idx);
      idx.resize(*dc.hs_sample);
      std::sort(idx.begin(), idx.end());
      std::vector<const HsInstance*> sampled;
      for (auto i : idx) sampled.push_back(chosen[i]);
      chosen = std::move(sampled);
    }
    for (const auto* inst : chosen) {
      HsInstance h = *inst;
      h.dataset = dc.name;
      h.id = qualify ? dc.name + ":" + inst->id : inst->id;
      out.origin[h.id] = {di, inst->id};
      out.hs_set.push_back(std::move(h));
    }
    out.datasets.push_back(std::move(ds));
  }
  out.fingerprint = sha256_hex(fingerprint_src);
  return out;
}

TemplateRegistry load_templates(const RunConfig& config) {
  auto reg = TemplateRegistry::builtin();
  if (config.templates_dir) {
    for (const auto& [_, t] : TemplateRegistry::load_dir(*config.templates_dir).all()) reg.add(t);
  }
  return reg;
}

std::unique_ptr<RunStore> open_run(const RunConfig& config, const std::string& run_id, const LoadedData& data,
                                   std::ostream& log) {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw ConfigError("invalid run id '" + run_id + "'");
  }
  auto store = std::make_unique<RunStore>(config.run_root, run_id, StoreOptions{config.fsync});
  const auto snapshot = config.source.dump(2);
  const auto hash = sha256_hex(config.source.dump());
  if (!store->has_manifest()) {
    store->write_file("config.json", snapshot + "\n");
    RunManifest m;
    m.run_id = run_id;
    m.created_at = utc_timestamp();
    m.config_hash = hash;
    m.dataset_fingerprint = data.fingerprint;
    m.component_versions["cneval"] = std::string(kToolVersion);
    m.component_versions["tokenizer"] = std::string(text::Tokenizer::kPolicyId);
    for (const auto& [tag, version] : load_templates(config).versions()) m.component_versions["template:" + tag] = version;
    m.artifacts = default_artifacts();
    store->write_manifest(m);
  } else {
    const auto m = store->read_manifest();
    if (m.dataset_fingerprint != data.fingerprint) {
      throw ConfigError("run '" + run_id + "' was created from different dataset files");
    }
    if (m.config_hash != hash) {
      log << "note: config differs from the run snapshot; this command's config is saved under reports/\n";
    }
  }
  return store;
}

GenerationRun cmd_generate(const RunConfig& config, const std::string& run_id, std::ostream& log) {
  const auto data = load_data(config);
  const auto registry = load_templates(config);
  for (const auto& s : config.systems) {
    if (s.descriptor.mode != GenMode::kGold) registry.get(s.descriptor.effective_template_tag());
  }
  auto store = open_run(config, run_id, data, log);
  RunLock lock(store->dir());
  store->write_report("config.generate.json", config.source.dump(2));

  GenerationJob job;
  for (const auto& s : config.systems) {
    job.systems.push_back(s.descriptor);
    if (auto g = make_generator(config, s)) job.generators[s.descriptor.id] = std::move(g);
  }
  job.hs_set = data.hs_set;
  job.references = [&data](const std::string& id) { return data.references(id); };
  job.registry = &registry;
  job.decoding = config.decoding;
  if (config.refusal_patterns) job.refusals = RefusalPatterns(*config.refusal_patterns);
  job.seed = derive_seed(config.seed, "generate");
  job.parallelism = config.parallelism;
  job.config_snapshot = config.source;

  auto run = run_generation(job, *store);
  store->write_index();
  log << "generate: " << run.completed << "/" << run.expected << " candidates (" << run.generated << " new)";
  if (!run.failures.empty()) log << ", " << run.failures.size() << " failures";
  log << "\n";
  for (std::size_t i = 0; i < run.failures.size() && i < 10; ++i) {
    const auto& f = run.failures[i];
    log << "  " << f.system_id << " / " << f.hs_id << ": " << f.error << "\n";
  }
  return run;
}

TournamentResult cmd_tournament(const RunConfig& config, const std::string& run_id, std::ostream& log) {
  const auto data = load_data(config);
  const auto registry = load_templates(config);
  registry.get(kJudgeTemplateTag);
  auto store = open_run(config, run_id, data, log);
  RunLock lock(store->dir());
  store->write_report("config.tournament.json", config.source.dump(2));

  const auto candidates = load_candidates(*store);
  TournamentResult res;
  const auto roster = config.roster();
  res.plan_size = plan_size(roster.size(), data.hs_set.size());

  TournamentPlan plan;
  auto stored = load_plan(*store);
  if (!stored.empty()) {
    if (stored.size() != res.plan_size) {
      throw ConfigError("stored plan has " + std::to_string(stored.size()) + " tournaments but the config implies " +
                        std::to_string(res.plan_size));
    }
    plan.n_systems = roster.size();
    plan.h_instances = data.hs_set.size();
    plan.tournaments = std::move(stored);
  } else {
    std::vector<PlanHs> hs;
    for (const auto& h : data.hs_set) hs.push_back({h.id, h.text, h.dataset});
    plan = schedule(
        roster, hs,
        [&](const std::string& sys, const std::string& hs_id) -> std::optional<std::string> {
          auto it = candidates.find({sys, hs_id});
          if (it == candidates.end()) return std::nullopt;
          return it->second.text;
        },
        derive_seed(config.seed, "presentation-order"), config.judge.fixed_order);
  }

  TournamentJob job;
  job.registry = &registry;
  job.judge = make_judge(config);
  job.retries = config.judge.retries;
  job.parallelism = config.parallelism;
  job.mode = config.judge.mode;
  res.health = run_tournaments(plan, job, *store);
  store->write_index();

  for (const auto& [_, c] : candidates) res.refusals += c.refusal_flag ? 1 : 0;

  std::set<std::string> planned;
  for (const auto& t : plan.tournaments) planned.insert(t.id);
  std::vector<JudgeVerdict> verdicts;
  for (auto& v : load_verdicts(*store)) {
    if (planned.count(v.tournament_id)) verdicts.push_back(std::move(v));
  }
  json report{{"judge", config.judge.id},
              {"size_tag", config.judge.size_tag},
              {"mode", to_string(config.judge.mode)},
              {"fixed_order", config.judge.fixed_order},
              {"plan_size", res.plan_size},
              {"health", res.health.to_json()},
              {"refusals", res.refusals}};
  if (!verdicts.empty()) {
    res.board = score(std::span<const JudgeVerdict>(verdicts));
    res.ranking = rank(*res.board);
    report["scoreboard"] = res.board->to_json();
    report["ranking"] = rank_to_json(res.ranking);
  }
  store->write_report("judge_scoreboard.json", report.dump(2));

  const auto& h = res.health;
  log << "tournament: plan " << res.plan_size << ", judged " << h.judged << " (" << h.new_verdicts << " new)\n"
      << "  parse ok " << h.parse_ok << ", recovered " << h.parse_recovered << ", failed " << h.parse_failed
      << "; transport failures " << h.transport_failures << "; refusals among candidates " << res.refusals << "\n";
  for (const auto& e : res.ranking) log << "  " << e.rank << ". " << e.system_id << "  " << e.share << "\n";

  if (h.parse_failure_rate() > config.judge.max_failure_rate) {
    throw HealthError("judge parse-failure rate " + std::to_string(h.parse_failure_rate()) + " exceeds the limit " +
                      std::to_string(config.judge.max_failure_rate));
  }
  return res;
}

std::vector<MetricReport> cmd_metrics(const RunConfig& config, const std::string& run_id, std::ostream& log) {
  const auto data = load_data(config);
  auto store = open_run(config, run_id, data, log);
  RunLock lock(store->dir());
  store->write_report("config.metrics.json", config.source.dump(2));
  const auto candidates = load_candidates(*store);

  std::unique_ptr<EmbeddingProvider> provider;
  const auto& mc = config.metrics;
  if (mc.options.bertscore) {
    if (mc.embedding_endpoint) {
      provider = std::make_unique<HttpEmbeddingProvider>(config.endpoint_for(*mc.embedding_endpoint, mc.embedding_model));
    } else {
      provider = std::make_unique<HashedTokenEmbeddings>();
    }
  }
  const auto train = mc.options.novelty ? data.cn_texts(mc.novelty_train_split) : std::vector<std::string>{};
  if (mc.options.novelty && train.empty()) log << "note: no training CNs in the configured split; novelty omitted\n";

  std::vector<MetricReport> reports;
  for (const auto& sys : config.roster()) {
    std::vector<ScoredItem> items;
    std::size_t missing = 0;
    for (const auto& h : data.hs_set) {
      auto it = candidates.find({sys, h.id});
      if (it == candidates.end()) {
        ++missing;
        continue;
      }
      ScoredItem item{it->second.text, {}};
      for (const auto* r : data.references(h.id)) item.references.push_back(text::collapse_newlines(r->text));
      items.push_back(std::move(item));
    }
    if (missing) log << "warning: " << sys << " lacks " << missing << " candidates\n";
    if (items.empty()) continue;
    reports.push_back(compute_metric_report(sys, items, train, mc.options, provider.get()));
  }
  if (reports.empty()) throw ValidationError("no candidates to score; run generate first");

  json arr = json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  store->write_report("metrics.json", arr.dump(2));
  for (const auto& r : reports) log << "metrics: " << r.to_json().dump() << "\n";
  return reports;
}

std::vector<std::pair<std::string, std::map<std::string, double>>> collect_methods(
    const RunConfig& config, const std::vector<std::string>& run_ids, std::ostream& log) {
  if (run_ids.empty()) throw ConfigError("correlate needs at least one run");
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, double>> pooled_points;  // tournament-style methods
  std::map<std::string, std::map<std::string, std::pair<double, int>>> averaged;  // corpus metrics
  auto note = [&](const std::string& m) {
    if (std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);
  };

  const auto data = load_data(config);
  for (const auto& run_id : run_ids) {
    auto store = existing_run(config, run_id);
    const auto plan = load_plan(*store);

    const auto verdicts = load_verdicts(*store);
    if (!verdicts.empty()) {
      const auto b = score(std::span<const JudgeVerdict>(verdicts));
      note(config.judge.id);
      for (const auto& [s, p] : b.points) pooled_points[config.judge.id][s] += p;
    }
    if (auto hb = human_board(config, *store, plan, log)) {
      note(std::string(kHumanLabel));
      for (const auto& [s, p] : hb->points) pooled_points[std::string(kHumanLabel)][s] += p;
    }

    const auto& opts = config.metrics.options;
    if (config.metric_pathway == MetricPathway::kCorpus) {
      auto text = store->read_report("metrics.json");
      if (!text) {
        log << "note: run '" << run_id << "' has no metrics report; computing it\n";
        cmd_metrics(config, run_id, log);
        text = store->read_report("metrics.json");
      }
      for (const auto& r : json::parse(*text)) {
        const auto sys = r.at("system_id").get<std::string>();
        auto add = [&](const char* key, const std::string& method, double sign) {
          if (!r.contains(key) || r[key].is_null()) return;
          note(method);
          auto& slot = averaged[method][sys];
          slot.first += sign * r[key].get<double>();
          ++slot.second;
        };
        add("bleu", "BLEU", 1.0);
        add("rouge_l_f", "ROUGE-L", 1.0);
        add("bertscore_f1", "BERTScore", 1.0);
        add("repetition_rate", "RR", -1.0);
        add("novelty", "Novelty", 1.0);
      }
    } else {
      // Each tournament is won by the side with the better sentence-level metric.
      std::unique_ptr<EmbeddingProvider> provider;
      if (opts.bertscore) {
        const auto& mc = config.metrics;
        if (mc.embedding_endpoint) {
          provider =
              std::make_unique<HttpEmbeddingProvider>(config.endpoint_for(*mc.embedding_endpoint, mc.embedding_model));
        } else {
          provider = std::make_unique<HashedTokenEmbeddings>();
        }
      }
      const auto train = opts.novelty ? data.cn_texts(config.metrics.novelty_train_split) : std::vector<std::string>{};
      std::map<std::string, std::vector<Match>> matches;
      for (const auto& t : plan) {
        std::vector<std::string> refs;
        for (const auto* r : data.references(t.hs_id)) refs.push_back(text::collapse_newlines(r->text));
        auto duel = [&](const std::string& method, auto&& fn, bool lower_is_better) {
          std::optional<double> a, b;
          try {
            a = fn(t.side_a.text);
            b = fn(t.side_b.text);
          } catch (const Error&) {
            a.reset();
            b.reset();
          }
          Outcome o = Outcome::kTie;
          if (a && b) {
            double x = *a, y = *b;
            if (lower_is_better) std::swap(x, y);
            o = outcome_from_scores(x, y);
          }
          matches[method].push_back({t.side_a.system_id, t.side_b.system_id, o});
        };
        if (refs.empty()) continue;
        if (opts.bleu) duel("BLEU", [&](const std::string& s) { return sentence_bleu(s, refs, opts.max_n).score; }, false);
        if (opts.rouge_l) duel("ROUGE-L", [&](const std::string& s) { return rouge_l(s, refs).f1; }, false);
        if (provider) duel("BERTScore", [&](const std::string& s) { return bertscore_f1(s, refs, *provider); }, false);
        if (opts.repetition_rate) {
          duel("RR", [&](const std::string& s) {
            const std::vector<std::string> one{s};
            return repetition_rate(std::span<const std::string>(one), opts.max_n, opts.rr_window);
          }, true);
        }
        if (opts.novelty && !train.empty()) {
          duel("Novelty", [&](const std::string& s) {
            const std::vector<std::string> one{s};
            return novelty(std::span<const std::string>(one), std::span<const std::string>(train), opts.max_n).novelty;
          }, false);
        }
      }
      for (const auto& [method, ms] : matches) {
        if (ms.empty()) continue;
        note(method);
        for (const auto& [s, p] : score(std::span<const Match>(ms)).points) pooled_points[method][s] += p;
      }
    }
  }

  std::vector<std::pair<std::string, std::map<std::string, double>>> out;
  for (const auto& m : order) {
    std::map<std::string, double> values;
    if (auto it = pooled_points.find(m); it != pooled_points.end()) {
      values = ScoreBoard::from_scores(it->second).normalized_share;
    } else {
      for (const auto& [s, acc] : averaged[m]) values[s] = acc.first / acc.second;
    }
    out.emplace_back(m, std::move(values));
  }
  return out;
}

CorrelationReport cmd_correlate(const RunConfig& config, const std::vector<std::string>& run_ids, std::ostream& log) {
  const auto methods = collect_methods(config, run_ids, log);
  auto rep = correlation_matrix(methods);
  auto store = existing_run(config, run_ids.front());
  json j = rep.to_json();
  j["metric_pathway"] = config.metric_pathway == MetricPathway::kCorpus ? "corpus" : "tournament";
  j["runs"] = run_ids;
  json scores = json::object();
  for (const auto& [m, v] : methods) scores[m] = v;
  j["scores"] = scores;
  store->write_report("correlation.json", j.dump(2));
  store->write_report("correlation.csv", rep.to_csv());
  store->write_report("correlation.txt", rep.to_heatmap());
  log << rep.to_heatmap();
  return rep;
}

std::vector<std::pair<std::string, std::map<std::string, double>>> load_method_fixture(
    const std::filesystem::path& path) {
  const auto rows = parse_csv(slurp(path));
  if (rows.size() < 2) throw ValidationError("fixture " + path.string() + " has no data rows");
  const auto& header = rows.front().fields;
  if (header.size() < 2 || header[0] != "system") throw SchemaError("fixture header must start with 'system'");
  std::vector<std::pair<std::string, std::map<std::string, double>>> out;
  for (std::size_t c = 1; c < header.size(); ++c) out.emplace_back(header[c], std::map<std::string, double>{});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() == 1 && text::trim(f[0]).empty()) continue;
    if (f.size() != header.size()) {
      throw SchemaError("fixture line " + std::to_string(rows[r].line) + " has " + std::to_string(f.size()) +
                        " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 1; c < f.size(); ++c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(f[c], &used);
        if (used != f[c].size()) throw std::invalid_argument(f[c]);
        out[c - 1].second[f[0]] = v;
      } catch (const std::exception&) {
        throw SchemaError("fixture line " + std::to_string(rows[r].line) + ": '" + f[c] + "' is not a number");
      }
    }
  }
  return out;
}

CorrelationReport correlate_fixture(const std::filesystem::path& path) {
  return correlation_matrix(load_method_fixture(path));
}

AnnotationSettings annotation_settings(const RunConfig& config) {
  AnnotationSettings s;
  for (const auto& a : config.annotation.annotators) s.annotators.push_back(a.id);
  s.shared_fraction = config.annotation.shared_fraction;
  s.seed = derive_seed(config.seed, "annotation");
  s.feature_annotators = config.annotation.feature_annotators;
  s.feature_hs_count = config.annotation.feature_hs_count;
  s.guidelines_version = config.annotation.guidelines_version;
  return s;
}

std::string cmd_export(const RunConfig& config, const std::string& run_id, const std::string& format) {
  if (format != "csv" && format != "json") throw ConfigError("--export must be csv or json");
  auto store = existing_run(config, run_id);
  std::ostringstream log;
  std::vector<std::pair<std::string, std::vector<RankEntry>>> rankings;
  const auto verdicts = load_verdicts(*store);
  if (!verdicts.empty()) rankings.emplace_back(config.judge.id, rank(score(std::span<const JudgeVerdict>(verdicts))));
  if (auto hb = human_board(config, *store, load_plan(*store), log)) rankings.emplace_back("Human", rank(*hb));
  json metrics = json::array();
  if (auto m = store->read_report("metrics.json")) metrics = json::parse(*m);

  if (format == "json") {
    json j{{"run_id", run_id}, {"rankings", json::object()}, {"metrics", metrics}};
    for (const auto& [k, r] : rankings) j["rankings"][k] = rank_to_json(r);
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "source,system_id,rank,points,share\n";
  for (const auto& [k, r] : rankings) {
    for (const auto& e : r) {
      out << csv_escape(k) << ',' << csv_escape(e.system_id) << ',' << e.rank << ',' << e.points << ',' << e.share
          << '\n';
    }
  }
  if (!metrics.empty()) {
    static constexpr const char* kCols[] = {"bleu", "rouge_l_f", "bertscore_f1", "repetition_rate", "novelty",
                                            "mean_generation_length"};
    out << "\nsystem_id";
    for (auto c : kCols) out << ',' << c;
    out << '\n';
    for (const auto& r : metrics) {
      out << csv_escape(r.at("system_id").get<std::string>());
      for (auto c : kCols) {
        out << ',';
        if (r.contains(c) && !r[c].is_null()) out << r[c].get<double>();
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace cneval
