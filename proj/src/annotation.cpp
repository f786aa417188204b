#include "cneval/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "cneval/rng.hpp"
#include "cneval/store.hpp"

namespace cneval {

bool AssignmentPlan::is_shared(const std::string& id) const {
  return std::find(shared.begin(), shared.end(), id) != shared.end();
}

json AssignmentPlan::to_json() const {
  return json{{"annotators", annotators}, {"shared", shared},   {"partition", partition},
              {"queues", queues},         {"seed", seed},       {"shared_fraction", shared_fraction}};
}

AssignmentPlan plan_assignments(std::span<const PlanItem> items, const std::vector<std::string>& annotators,
                                double shared_fraction, std::uint64_t seed) {
  if (annotators.empty()) throw ValidationError("assignment plan needs at least one annotator");
  if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) {
    throw ValidationError("shared fraction must lie in [0, 1]");
  }
  {
    std::unordered_set<std::string> seen;
    for (const auto& a : annotators) {
      if (!seen.insert(a).second) throw ValidationError("annotator '" + a + "' listed twice");
    }
    seen.clear();
    for (const auto& it : items) {
      if (!seen.insert(it.id).second) throw ValidationError("tournament '" + it.id + "' listed twice");
    }
  }

  AssignmentPlan plan;
  plan.annotators = annotators;
  plan.seed = seed;
  plan.shared_fraction = shared_fraction;
  const std::size_t total = items.size();
  const auto shared_n = static_cast<std::size_t>(std::llround(shared_fraction * static_cast<double>(total)));

  // Strata in order of first appearance.
  std::vector<std::string> strata;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& m = members[items[i].stratum];
    if (m.empty()) strata.push_back(items[i].stratum);
    m.push_back(i);
  }

  std::vector<std::size_t> quota(strata.size(), 0);
  if (total > 0) {
    std::vector<double> frac(strata.size());
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
      const double exact = static_cast<double>(shared_n) * static_cast<double>(members[strata[s]].size()) /
                           static_cast<double>(total);
      quota[s] = static_cast<std::size_t>(std::floor(exact));
      frac[s] = exact - static_cast<double>(quota[s]);
      assigned += quota[s];
    }
    std::vector<std::size_t> order(strata.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < shared_n; ++k, ++assigned) ++quota[order[k % order.size()]];
  }

  std::vector<bool> is_shared(items.size(), false);
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto pool = members[strata[s]];
    Rng(derive_seed(seed, "shared:" + strata[s])).shuffle(pool);
    for (std::size_t k = 0; k < quota[s]; ++k) is_shared[pool[k]] = true;
  }

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (is_shared[i]) {
      plan.shared.push_back(items[i].id);
    } else {
      rest.push_back(i);
    }
  }
  Rng(derive_seed(seed, "deal")).shuffle(rest);
  std::map<std::string, std::vector<std::size_t>> dealt;
  for (std::size_t k = 0; k < rest.size(); ++k) dealt[annotators[k % annotators.size()]].push_back(rest[k]);

  for (const auto& a : annotators) {
    auto idx = dealt[a];
    std::sort(idx.begin(), idx.end());
    auto& part = plan.partition[a];
    for (auto i : idx) part.push_back(items[i].id);
    auto queue = plan.shared;
    queue.insert(queue.end(), part.begin(), part.end());
    Rng(derive_seed(seed, "queue:" + a)).shuffle(queue);
    plan.queues[a] = std::move(queue);
  }
  return plan;
}

void FeatureRating::check_values(const json& values) {
  if (!values.is_object()) throw ValidationError("feature values must be an object");
  for (auto it = values.begin(); it != values.end(); ++it) {
    if (std::find(std::begin(kFeatureNames), std::end(kFeatureNames), it.key()) == std::end(kFeatureNames)) {
      throw ValidationError("unknown feature '" + it.key() + "'");
    }
  }
  for (auto name : kFeatureNames) {
    const std::string key(name);
    if (!values.contains(key)) throw ValidationError("feature '" + key + "' is missing");
    const auto& v = values[key];
    if (!v.is_number_integer()) throw ValidationError("feature '" + key + "' must be an integer");
    const auto x = v.get<int>();
    const int lo = key == "overall" ? 1 : 0;
    if (x < lo || x > 5) {
      throw ValidationError("feature '" + key + "' must lie in [" + std::to_string(lo) + ", 5], got " +
                            std::to_string(x));
    }
  }
}

json FeatureRating::to_json() const {
  json j{{"hs_id", hs_id}, {"system_id", system_id}, {"annotator_id", annotator_id}};
  for (const auto& [k, v] : values) j[k] = v;
  return j;
}

FeatureRating FeatureRating::from_json(const json& j) {
  FeatureRating r;
  try {
    r.hs_id = j.at("hs_id").get<std::string>();
    r.system_id = j.at("system_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    for (auto name : kFeatureNames) r.values[std::string(name)] = j.at(std::string(name)).get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("feature record: ") + e.what());
  }
  return r;
}

std::vector<AnnotationRecord> annotation_records(const std::vector<json>& latest) {
  std::vector<AnnotationRecord> out;
  out.reserve(latest.size());
  for (const auto& j : latest) {
    AnnotationRecord r;
    try {
      r.tournament_id = j.at("tournament_id").get<std::string>();
      r.annotator_id = j.at("annotator_id").get<std::string>();
      r.choice = parse_outcome(j.at("choice").get<std::string>());
      r.timestamp = j.at("timestamp").get<std::string>();
      r.guidelines_version = j.at("guidelines_version").get<std::string>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("annotation record: ") + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

using ChoiceIndex = std::unordered_map<std::string, std::map<std::string, Outcome>>;  // tid -> annotator -> choice

ChoiceIndex index_choices(const AssignmentPlan& plan, const std::vector<AnnotationRecord>& records) {
  std::unordered_set<std::string> known(plan.annotators.begin(), plan.annotators.end());
  ChoiceIndex idx;
  for (const auto& r : records) {
    if (known.count(r.annotator_id)) idx[r.tournament_id][r.annotator_id] = r.choice;
  }
  return idx;
}

}  // namespace

ScoreBoard human_scoreboard(const std::vector<Tournament>& tournaments, const AssignmentPlan& plan,
                            const std::vector<AnnotationRecord>& records, bool partial) {
  const auto idx = index_choices(plan, records);
  const std::unordered_set<std::string> shared(plan.shared.begin(), plan.shared.end());
  std::vector<Match> matches;
  std::size_t incomplete = 0;
  for (const auto& t : tournaments) {
    const std::size_t required = shared.count(t.id) ? plan.annotators.size() : 1;
    auto it = idx.find(t.id);
    const std::size_t have = it == idx.end() ? 0 : it->second.size();
    if (have < required) ++incomplete;
    if (have == 0) continue;
    std::vector<std::string> labels;
    for (const auto& [_, c] : it->second) labels.emplace_back(to_string(c));
    matches.push_back({t.side_a.system_id, t.side_b.system_id, parse_outcome(majority_vote(labels))});
  }
  if (incomplete && !partial) {
    throw ValidationError(std::to_string(incomplete) +
                          " tournaments are not fully annotated; request a partial report to score them anyway");
  }
  return score(std::span<const Match>(matches));
}

json IaaReport::to_json() const {
  json p = json::array();
  for (const auto& k : pairs) p.push_back(k.to_json());
  return json{{"pairs", p}, {"means", means}, {"undefined", undefined}};
}

IaaReport iaa_report(const std::vector<Tournament>& tournaments, const AssignmentPlan& plan,
                     const std::vector<AnnotationRecord>& records) {
  const auto idx = index_choices(plan, records);
  std::map<std::string, std::string> stratum_of;
  for (const auto& t : tournaments) stratum_of[t.id] = t.dataset;

  IaaReport rep;
  std::map<std::string, std::vector<double>> per_group;
  bool any_items = false;
  const auto& ann = plan.annotators;
  for (std::size_t i = 0; i < ann.size(); ++i) {
    for (std::size_t j = i + 1; j < ann.size(); ++j) {
      std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> groups;
      for (const auto& tid : plan.shared) {
        auto it = idx.find(tid);
        if (it == idx.end()) continue;
        auto a = it->second.find(ann[i]);
        auto b = it->second.find(ann[j]);
        if (a == it->second.end() || b == it->second.end()) continue;
        std::vector<std::string> keys{"all"};
        if (const auto& stratum = stratum_of[tid]; !stratum.empty() && stratum != "all") keys.push_back(stratum);
        for (const auto& g : keys) {
          groups[g].first.emplace_back(to_string(a->second));
          groups[g].second.emplace_back(to_string(b->second));
        }
      }
      for (const auto& [g, labels] : groups) {
        any_items = true;
        try {
          auto k = cohens_kappa(labels.first, labels.second);
          k.annotator_a = ann[i];
          k.annotator_b = ann[j];
          k.group = g;
          per_group[g].push_back(k.kappa);
          rep.pairs.push_back(std::move(k));
        } catch (const UndefinedStatisticError&) {
          rep.undefined.push_back(ann[i] + "/" + ann[j] + "/" + g);
        }
      }
    }
  }
  if (!any_items) throw ValidationError("no shared tournament has been annotated by two annotators");
  for (const auto& [g, ks] : per_group) {
    rep.means[g] = std::accumulate(ks.begin(), ks.end(), 0.0) / static_cast<double>(ks.size());
  }
  return rep;
}

std::map<std::string, std::map<std::string, double>> feature_report(const std::vector<FeatureRating>& ratings) {
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& r : ratings) {
    for (const auto& [k, v] : r.values) {
      auto& slot = acc[r.system_id][k];
      slot.first += v;
      ++slot.second;
    }
  }
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [sys, feats] : acc) {
    for (const auto& [k, s] : feats) out[sys][k] = s.first / static_cast<double>(s.second);
  }
  return out;
}

AnnotationService::AnnotationService(RunStore& store, AnnotationSettings settings)
    : store_(store), settings_(std::move(settings)) {
  if (!store_.has_stream(streams::kPlan)) throw ValidationError("run has no tournament plan; run the tournament stage first");
  for (const auto& r : store_.load_stream(streams::kPlan).records) tournaments_.push_back(Tournament::from_json(r));
  if (tournaments_.empty()) throw ValidationError("tournament plan is empty");
  std::vector<PlanItem> items;
  for (std::size_t i = 0; i < tournaments_.size(); ++i) {
    by_id_[tournaments_[i].id] = i;
    items.push_back({tournaments_[i].id, tournaments_[i].dataset});
  }
  plan_ = plan_assignments(items, settings_.annotators, settings_.shared_fraction, settings_.seed);
  store_.write_report("assignment_plan.json", plan_.to_json().dump(2));

  if (settings_.feature_hs_count > 0 && !settings_.feature_annotators.empty()) {
    std::vector<std::string> hs_order;
    std::map<std::string, std::string> hs_text;
    for (const auto& t : tournaments_) {
      if (!hs_text.count(t.hs_id)) {
        hs_order.push_back(t.hs_id);
        hs_text[t.hs_id] = t.hs_text;
      }
    }
    if (hs_order.size() > settings_.feature_hs_count) hs_order.resize(settings_.feature_hs_count);
    std::map<std::string, std::map<std::string, std::string>> cands;  // hs -> system -> text
    for (const auto& t : tournaments_) {
      cands[t.hs_id][t.side_a.system_id] = t.side_a.text;
      cands[t.hs_id][t.side_b.system_id] = t.side_b.text;
    }
    for (const auto& hs : hs_order) {
      for (const auto& [sys, txt] : cands[hs]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "f%06zu", feature_tasks_.size());
        feature_by_id_[buf] = feature_tasks_.size();
        feature_tasks_.push_back({buf, hs, hs_text[hs], sys, txt});
      }
    }
    for (const auto& a : settings_.feature_annotators) {
      std::vector<std::string> q;
      for (const auto& f : feature_tasks_) q.push_back(f.id);
      Rng(derive_seed(settings_.seed, "features:" + a)).shuffle(q);
      feature_queues_[a] = std::move(q);
    }
  }

  if (store_.has_stream(streams::kAnnotations)) {
    for (const auto& r : store_.load_stream(streams::kAnnotations).records) {
      answered_.emplace(r.at("annotator_id").get<std::string>(), r.at("tournament_id").get<std::string>());
    }
  }
  if (store_.has_stream(streams::kFeatures)) {
    std::map<std::pair<std::string, std::string>, std::string> fid;
    for (const auto& f : feature_tasks_) fid[{f.hs_id, f.system_id}] = f.id;
    for (const auto& r : store_.load_stream(streams::kFeatures).records) {
      auto it = fid.find({r.at("hs_id").get<std::string>(), r.at("system_id").get<std::string>()});
      if (it != fid.end()) feature_answered_.emplace(r.at("annotator_id").get<std::string>(), it->second);
    }
  }
}

bool AnnotationService::has_annotator(const std::string& id) const { return plan_.queues.count(id) > 0; }

bool AnnotationService::has_feature_annotator(const std::string& id) const {
  return feature_queues_.count(id) > 0;
}

json AnnotationService::next_task(const std::string& annotator) {
  std::lock_guard lock(mu_);
  auto q = plan_.queues.find(annotator);
  if (q == plan_.queues.end()) throw TaskNotAssignedError("unknown annotator");
  std::size_t done = 0;
  const Tournament* next = nullptr;
  for (const auto& tid : q->second) {
    if (answered_.count({annotator, tid})) {
      ++done;
    } else if (!next) {
      next = &tournaments_[by_id_.at(tid)];
    }
  }
  if (!next) return json{{"done", true}, {"answered", done}, {"total", q->second.size()}};
  return json{{"done", false},
              {"task_id", next->id},
              {"hs", next->hs_text},
              {"cn_a", next->first_shown().text},
              {"cn_b", next->second_shown().text},
              {"position", done + 1},
              {"total", q->second.size()},
              {"guidelines_version", settings_.guidelines_version}};
}

json AnnotationService::submit_choice(const std::string& annotator, const std::string& task_id,
                                      const std::string& choice, bool supersede) {
  Outcome shown;
  try {
    shown = parse_outcome(choice);
  } catch (const SchemaError&) {
    throw ValidationError("choice must be A, B or Tie");
  }
  std::lock_guard lock(mu_);
  auto q = plan_.queues.find(annotator);
  if (q == plan_.queues.end() || std::find(q->second.begin(), q->second.end(), task_id) == q->second.end()) {
    throw TaskNotAssignedError("task '" + task_id + "' is not assigned to this annotator");
  }
  const bool exists = answered_.count({annotator, task_id}) > 0;
  if (exists && !supersede) throw DuplicateKeyError("task '" + task_id + "' already answered; set supersede to correct it");
  if (!exists && supersede) throw ValidationError("nothing to supersede for task '" + task_id + "'");

  const auto& t = tournaments_[by_id_.at(task_id)];
  Outcome canonical = shown;
  if (t.presentation_order == PresentationOrder::kSwapped && shown != Outcome::kTie) {
    canonical = shown == Outcome::kA ? Outcome::kB : Outcome::kA;
  }
  json rec{{"tournament_id", task_id},
           {"annotator_id", annotator},
           {"choice", to_string(canonical)},
           {"shown_choice", to_string(shown)},
           {"timestamp", utc_timestamp()},
           {"guidelines_version", settings_.guidelines_version}};
  if (supersede) rec["supersedes"] = true;
  store_.append(streams::kAnnotations, rec);
  answered_.emplace(annotator, task_id);
  return json{{"ok", true}, {"task_id", task_id}, {"choice", to_string(shown)}};
}

json AnnotationService::next_feature_task(const std::string& annotator) {
  std::lock_guard lock(mu_);
  auto q = feature_queues_.find(annotator);
  if (q == feature_queues_.end()) throw TaskNotAssignedError("no feature tasks for this annotator");
  std::size_t done = 0;
  const FeatureTask* next = nullptr;
  for (const auto& fid : q->second) {
    if (feature_answered_.count({annotator, fid})) {
      ++done;
    } else if (!next) {
      next = &feature_tasks_[feature_by_id_.at(fid)];
    }
  }
  if (!next) return json{{"done", true}, {"answered", done}, {"total", q->second.size()}};
  json scales = json::object();
  for (auto name : kFeatureNames) scales[std::string(name)] = {name == "overall" ? 1 : 0, 5};
  return json{{"done", false},          {"task_id", next->id},     {"hs", next->hs_text},
              {"cn", next->text},       {"position", done + 1},    {"total", q->second.size()},
              {"scales", scales},       {"guidelines_version", settings_.guidelines_version}};
}

json AnnotationService::submit_feature(const std::string& annotator, const std::string& task_id, const json& values,
                                       bool supersede) {
  FeatureRating::check_values(values);
  std::lock_guard lock(mu_);
  auto q = feature_queues_.find(annotator);
  if (q == feature_queues_.end() || std::find(q->second.begin(), q->second.end(), task_id) == q->second.end()) {
    throw TaskNotAssignedError("feature task '" + task_id + "' is not assigned to this annotator");
  }
  const bool exists = feature_answered_.count({annotator, task_id}) > 0;
  if (exists && !supersede) throw DuplicateKeyError("feature task '" + task_id + "' already rated");
  if (!exists && supersede) throw ValidationError("nothing to supersede for feature task '" + task_id + "'");
  const auto& f = feature_tasks_[feature_by_id_.at(task_id)];
  FeatureRating r;
  r.hs_id = f.hs_id;
  r.system_id = f.system_id;
  r.annotator_id = annotator;
  for (auto name : kFeatureNames) r.values[std::string(name)] = values.at(std::string(name)).get<int>();
  auto rec = r.to_json();
  rec["timestamp"] = utc_timestamp();
  rec["guidelines_version"] = settings_.guidelines_version;
  if (supersede) rec["supersedes"] = true;
  store_.append(streams::kFeatures, rec);
  feature_answered_.emplace(annotator, task_id);
  return json{{"ok", true}, {"task_id", task_id}};
}

std::vector<AnnotationRecord> AnnotationService::records_locked() {
  if (!store_.has_stream(streams::kAnnotations)) return {};
  const auto* schema = schema_for(streams::kAnnotations);
  return annotation_records(latest_wins(*schema, store_.load_stream(streams::kAnnotations).records));
}

json AnnotationService::progress() {
  std::lock_guard lock(mu_);
  json ann = json::object();
  std::size_t answered_total = 0;
  for (const auto& [a, q] : plan_.queues) {
    std::size_t done = 0;
    for (const auto& tid : q) done += answered_.count({a, tid});
    answered_total += done;
    ann[a] = {{"assigned", q.size()}, {"answered", done}};
  }
  json feat = json::object();
  for (const auto& [a, q] : feature_queues_) {
    std::size_t done = 0;
    for (const auto& fid : q) done += feature_answered_.count({a, fid});
    feat[a] = {{"assigned", q.size()}, {"answered", done}};
  }
  return json{{"tournaments", tournaments_.size()},
              {"shared", plan_.shared.size()},
              {"annotators", ann},
              {"answered", answered_total},
              {"features", feat}};
}

json AnnotationService::iaa() {
  std::lock_guard lock(mu_);
  return iaa_report(tournaments_, plan_, records_locked()).to_json();
}

json AnnotationService::human_rank(bool partial) {
  std::lock_guard lock(mu_);
  const auto board = human_scoreboard(tournaments_, plan_, records_locked(), partial);
  return json{{"scoreboard", board.to_json()}, {"ranking", rank_to_json(rank(board))}, {"partial", partial}};
}

json AnnotationService::features() {
  std::lock_guard lock(mu_);
  std::vector<FeatureRating> ratings;
  if (store_.has_stream(streams::kFeatures)) {
    const auto* schema = schema_for(streams::kFeatures);
    for (const auto& r : latest_wins(*schema, store_.load_stream(streams::kFeatures).records)) {
      ratings.push_back(FeatureRating::from_json(r));
    }
  }
  return json(feature_report(ratings));
}

}  // namespace cneval
