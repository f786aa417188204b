#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include <httplib.h>

#include "cneval/annotation.hpp"
#include "cneval/annotation_server.hpp"
#include "cneval/store.hpp"
#include "test_util.hpp"

using namespace cneval;
using testutil::TempDir;

namespace {

const std::vector<std::string> kSystems = {"SYSALPHA", "SYSBRAVO", "SYSCHARLIE"};
const std::vector<std::string> kAnnotators = {"a1", "a2", "a3"};

// 3 systems x 4 HS = 12 tournaments, two strata, mixed presentation order.
std::vector<Tournament> fixture_tournaments() {
  std::vector<Tournament> out;
  for (int h = 0; h < 4; ++h) {
    for (std::size_t i = 0; i < kSystems.size(); ++i) {
      for (std::size_t j = i + 1; j < kSystems.size(); ++j) {
        Tournament t;
        t.id = tournament_id(out.size());
        t.hs_id = "hs" + std::to_string(h);
        t.hs_text = "hateful statement " + std::to_string(h);
        t.dataset = h < 2 ? "CONAN" : "MT-CONAN";
        t.side_a = {kSystems[i], "reply " + std::to_string(h) + " from " + std::to_string(i)};
        t.side_b = {kSystems[j], "reply " + std::to_string(h) + " from " + std::to_string(j)};
        t.presentation_order = out.size() % 3 == 1 ? PresentationOrder::kSwapped : PresentationOrder::kAsIs;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

struct FixtureRun {
  TempDir tmp;
  std::unique_ptr<RunStore> store;
  std::vector<Tournament> tournaments = fixture_tournaments();

  FixtureRun() {
    store = std::make_unique<RunStore>(tmp.path(), "run", StoreOptions{false});
    RunManifest m;
    m.run_id = "run";
    m.created_at = utc_timestamp();
    m.artifacts = default_artifacts();
    store->write_manifest(m);
    std::vector<json> recs;
    for (const auto& t : tournaments) recs.push_back(t.to_json());
    store->append_batch(streams::kPlan, recs);
  }

  const Tournament& find(const std::string& id) const {
    for (const auto& t : tournaments)
      if (t.id == id) return t;
    throw std::out_of_range(id);
  }
};

AnnotationSettings settings() {
  AnnotationSettings s;
  s.annotators = kAnnotators;
  s.shared_fraction = 0.5;
  s.seed = 5;
  s.feature_annotators = {"a1"};
  s.feature_hs_count = 2;
  return s;
}

// Scripted canonical preference per (annotator, tournament).
std::string intended(const std::string& annotator, const std::string& tid) {
  static const char* kChoices[] = {"A", "B", "Tie"};
  const auto h = std::hash<std::string>{}(tid) % 3;
  if (annotator == "a1") return kChoices[h];
  if (annotator == "a2") return kChoices[(h + (tid.back() % 2)) % 3];
  return kChoices[tid.back() % 2];
}

// Turns a canonical choice into what the annotator clicks on screen.
std::string as_shown(const Tournament& t, const std::string& canonical) {
  if (t.presentation_order == PresentationOrder::kAsIs || canonical == "Tie") return canonical;
  return canonical == "A" ? "B" : "A";
}

std::string plurality(const std::vector<std::string>& labels) {
  std::map<std::string, int> c;
  for (const auto& l : labels) c[l]++;
  int best = 0, at_best = 0;
  std::string winner;
  for (const auto& [l, n] : c) {
    if (n > best) {
      best = n;
      at_best = 1;
      winner = l;
    } else if (n == best) {
      ++at_best;
    }
  }
  return at_best == 1 ? winner : "Tie";
}

double kappa_by_hand(const std::vector<std::string>& x, const std::vector<std::string>& y) {
  std::map<std::string, double> px, py;
  double agree = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1.0 / x.size();
    py[y[i]] += 1.0 / y.size();
    agree += x[i] == y[i];
  }
  const double po = agree / x.size();
  double pe = 0;
  for (const auto& [k, p] : px) pe += p * (py.count(k) ? py[k] : 0.0);
  return (po - pe) / (1 - pe);
}

}  // namespace

TEST(Assignment, SharedCountAndPartitions) {
  std::vector<PlanItem> items;
  for (int i = 0; i < 10; ++i) items.push_back({tournament_id(i), i < 6 ? "x" : "y"});
  const auto p = plan_assignments(items, kAnnotators, 0.4, 3);
  EXPECT_EQ(p.shared.size(), 4u);
  std::set<std::string> seen(p.shared.begin(), p.shared.end());
  std::size_t lo = 99, hi = 0;
  for (const auto& a : kAnnotators) {
    for (const auto& id : p.partition.at(a)) EXPECT_TRUE(seen.insert(id).second) << id;
    lo = std::min(lo, p.partition.at(a).size());
    hi = std::max(hi, p.partition.at(a).size());
    EXPECT_EQ(p.queues.at(a).size(), p.shared.size() + p.partition.at(a).size());
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_LE(hi - lo, 1u);
  EXPECT_TRUE(p.is_shared(p.shared.front()));

  const auto again = plan_assignments(items, kAnnotators, 0.4, 3);
  EXPECT_EQ(again.queues, p.queues);
  EXPECT_EQ(plan_assignments(items, kAnnotators, 0.0, 3).shared.size(), 0u);
  EXPECT_EQ(plan_assignments(items, kAnnotators, 1.0, 3).shared.size(), 10u);
}

TEST(Features, Scales) {
  json ok = {{"relatedness", 0}, {"specificity", 5}, {"richness", 3},
             {"coherence", 2},   {"grammaticality", 4}, {"overall", 1}};
  EXPECT_NO_THROW(FeatureRating::check_values(ok));
  auto bad = ok;
  bad["overall"] = 0;
  EXPECT_THROW(FeatureRating::check_values(bad), ValidationError);
  bad = ok;
  bad["richness"] = 6;
  EXPECT_THROW(FeatureRating::check_values(bad), ValidationError);
  bad = ok;
  bad["richness"] = 2.5;
  EXPECT_THROW(FeatureRating::check_values(bad), ValidationError);
  bad = ok;
  bad.erase("coherence");
  EXPECT_THROW(FeatureRating::check_values(bad), ValidationError);
  bad = ok;
  bad["fluency"] = 3;
  EXPECT_THROW(FeatureRating::check_values(bad), ValidationError);
}

// Ratings built to reproduce the published per-system feature means:
// 20 ratings per system, integer values whose totals equal round(20 * mean).
TEST(Features, PublishedMeansFixture) {
  const std::map<std::string, std::vector<double>> table = {
      {"zephyr-zs", {4.95, 4.25, 4.00, 5.00, 5.00, 4.25}},
      {"gold", {4.10, 3.75, 3.25, 4.80, 4.30, 3.50}},
      {"mistral-instruct-zs", {4.20, 3.15, 3.70, 4.70, 5.00, 3.50}},
      {"llama-chat-zs", {2.90, 2.55, 4.30, 4.90, 5.00, 3.05}},
      {"mistral-instruct-ft", {3.75, 3.55, 3.30, 3.10, 4.30, 2.70}},
      {"mistral-ft", {3.65, 3.55, 3.05, 3.30, 4.35, 2.60}},
      {"zephyr-ft", {4.40, 4.75, 3.60, 3.20, 4.35, 2.30}},
      {"llama-chat-ft", {3.40, 3.10, 2.95, 3.30, 4.10, 2.20}},
      {"mistral-zs", {3.10, 3.30, 2.40, 3.55, 4.60, 1.90}},
  };
  std::vector<FeatureRating> ratings;
  for (const auto& [sys, means] : table) {
    for (int k = 0; k < 20; ++k) {
      FeatureRating r;
      r.hs_id = "hs" + std::to_string(k / 2);
      r.system_id = sys;
      r.annotator_id = k % 2 ? "x" : "y";
      json values;
      for (std::size_t f = 0; f < 6; ++f) {
        const int total = static_cast<int>(std::lround(20 * means[f]));
        const int v = total / 20 + (k < total % 20 ? 1 : 0);
        r.values[std::string(kFeatureNames[f])] = v;
        values[std::string(kFeatureNames[f])] = v;
      }
      FeatureRating::check_values(values);
      ratings.push_back(r);
    }
  }
  const auto rep = feature_report(ratings);
  for (const auto& [sys, means] : table) {
    for (std::size_t f = 0; f < 6; ++f) {
      EXPECT_NEAR(rep.at(sys).at(std::string(kFeatureNames[f])), means[f], 1e-9) << sys << " " << kFeatureNames[f];
    }
  }
  std::string best;
  double top = -1;
  for (const auto& [sys, f] : rep) {
    if (f.at("overall") > top) {
      top = f.at("overall");
      best = sys;
    }
  }
  EXPECT_EQ(best, "zephyr-zs");
  EXPECT_GT(rep.at("zephyr-zs").at("overall"), rep.at("gold").at("overall"));
}

TEST(HumanScoreboard, MajorityAndPartial) {
  const auto ts = fixture_tournaments();
  std::vector<PlanItem> items;
  for (const auto& t : ts) items.push_back({t.id, t.dataset});
  const auto plan = plan_assignments(items, kAnnotators, 0.5, 1);
  std::vector<AnnotationRecord> recs;
  for (const auto& t : ts) {
    const bool shared = plan.is_shared(t.id);
    for (const auto& a : kAnnotators) {
      const auto& q = plan.queues.at(a);
      if (std::find(q.begin(), q.end(), t.id) == q.end()) continue;
      // shared items: two of three pick A
      const auto c = shared ? (a == "a3" ? Outcome::kB : Outcome::kA) : Outcome::kB;
      recs.push_back({t.id, a, c, "2024-01-01T00:00:00Z", "v1"});
    }
  }
  const auto board = human_scoreboard(ts, plan, recs, false);
  std::map<std::string, double> want;
  for (const auto& t : ts) want[plan.is_shared(t.id) ? t.side_a.system_id : t.side_b.system_id] += 1;
  for (const auto& [s, p] : want) EXPECT_DOUBLE_EQ(board.points.at(s), p) << s;
  EXPECT_EQ(board.total_tournaments, ts.size());

  recs.pop_back();
  EXPECT_THROW(human_scoreboard(ts, plan, recs, false), ValidationError);
  EXPECT_NO_THROW(human_scoreboard(ts, plan, recs, true));
}

TEST(Iaa, DefinedAndUndefinedPairs) {
  const auto ts = fixture_tournaments();
  std::vector<PlanItem> items;
  for (const auto& t : ts) items.push_back({t.id, t.dataset});
  const auto plan = plan_assignments(items, {"x", "y"}, 1.0, 1);
  std::vector<AnnotationRecord> recs;
  // x and y agree everywhere with two categories in use: kappa 1
  for (const auto& t : ts) {
    const auto c = t.id.back() % 2 ? Outcome::kA : Outcome::kB;
    recs.push_back({t.id, "x", c, "", "v1"});
    recs.push_back({t.id, "y", c, "", "v1"});
  }
  auto rep = iaa_report(ts, plan, recs);
  EXPECT_DOUBLE_EQ(rep.means.at("all"), 1.0);
  EXPECT_TRUE(rep.means.count("CONAN"));
  EXPECT_TRUE(rep.means.count("MT-CONAN"));

  for (auto& r : recs) r.choice = Outcome::kTie;
  rep = iaa_report(ts, plan, recs);
  EXPECT_FALSE(rep.undefined.empty());

  EXPECT_THROW(iaa_report(ts, plan, {}), ValidationError);
}

TEST(AnnotationServiceTest, BlindQueuesAndSupersede) {
  FixtureRun run;
  AnnotationService svc(*run.store, settings());
  EXPECT_EQ(svc.plan().shared.size(), 6u);
  EXPECT_TRUE(run.store->read_report("assignment_plan.json"));

  auto task = svc.next_task("a1");
  ASSERT_FALSE(task["done"].get<bool>());
  for (const auto& s : kSystems) EXPECT_EQ(task.dump().find(s), std::string::npos);
  const auto tid = task["task_id"].get<std::string>();
  const auto& t = run.find(tid);
  EXPECT_EQ(task["cn_a"], t.first_shown().text);

  svc.submit_choice("a1", tid, "A", false);
  EXPECT_THROW(svc.submit_choice("a1", tid, "B", false), DuplicateKeyError);
  EXPECT_THROW(svc.submit_choice("a1", tid, "maybe", false), ValidationError);
  svc.submit_choice("a1", tid, "B", true);
  const auto stored = run.store->load_stream(streams::kAnnotations).records;
  ASSERT_EQ(stored.size(), 2u);
  EXPECT_EQ(stored[1]["shown_choice"], "B");
  EXPECT_EQ(stored[1]["choice"], t.presentation_order == PresentationOrder::kSwapped ? "A" : "B");
  EXPECT_NE(svc.next_task("a1")["task_id"], tid);

  EXPECT_THROW(svc.next_task("nobody"), TaskNotAssignedError);
  std::string foreign;
  for (const auto& id : svc.plan().partition.at("a2")) foreign = id;
  EXPECT_THROW(svc.submit_choice("a1", foreign, "A", false), TaskNotAssignedError);

  // a restarted service resumes the queue position from the store
  AnnotationService again(*run.store, settings());
  EXPECT_EQ(again.next_task("a1")["position"], 2);
}

TEST(AnnotationServiceTest, NeedsPlan) {
  TempDir tmp;
  RunStore store(tmp.path(), "empty", StoreOptions{false});
  EXPECT_THROW(AnnotationService(store, settings()), ValidationError);
}

class AnnotationHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    service = std::make_unique<AnnotationService>(*run.store, settings());
    ServerOptions o;
    o.port = 0;
    o.annotator_tokens = {{"tok1", "a1"}, {"tok2", "a2"}, {"tok3", "a3"}};
    o.coordinator_token = "boss";
    server = std::make_unique<AnnotationServer>(*service, o);
    server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", server->port());
  }
  void TearDown() override { server->stop(); }

  static httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

  json get(const std::string& path, const std::string& token, int want = 200) {
    auto res = client->Get(path, auth(token));
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, want) << path << " " << res->body;
    return json::parse(res->body);
  }

  json post(const std::string& path, const std::string& token, const json& body, int want = 200) {
    auto res = client->Post(path, auth(token), body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, want) << path << " " << res->body;
    return json::parse(res->body);
  }

  FixtureRun run;
  std::unique_ptr<AnnotationService> service;
  std::unique_ptr<AnnotationServer> server;
  std::unique_ptr<httplib::Client> client;
};

TEST_F(AnnotationHttp, HealthAndAuth) {
  auto res = client->Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  get("/api/task", "nope", 401);
  get("/api/task?annotator=a2", "tok1", 403);
  get("/api/task?annotator=a1", "tok1", 200);
  get("/api/progress", "tok1", 401);
  get("/api/progress", "boss", 200);
  post("/api/choice", "tok1", {{"annotator", "a2"}, {"task_id", "t0000000"}, {"choice", "A"}}, 403);
  post("/api/choice", "tok1", {{"choice", "A"}}, 400);
  get("/api/feature-task", "tok2", 403);
}

TEST_F(AnnotationHttp, DuplicateAndSupersede) {
  const auto task = get("/api/task", "tok2");
  const auto tid = task["task_id"].get<std::string>();
  post("/api/choice", "tok2", {{"task_id", tid}, {"choice", "A"}});
  post("/api/choice", "tok2", {{"task_id", tid}, {"choice", "B"}}, 409);
  post("/api/choice", "tok2", {{"task_id", tid}, {"choice", "Tie"}, {"supersede", true}});
  post("/api/choice", "tok2", {{"task_id", tid}, {"choice", "Sure"}}, 400);
  const auto prog = get("/api/progress", "boss");
  EXPECT_EQ(prog["annotators"]["a2"]["answered"], 1);
  EXPECT_EQ(prog["answered"], 1);
}

TEST_F(AnnotationHttp, FullSessionMatchesHandComputation) {
  std::map<std::string, std::map<std::string, std::string>> canonical;  // tid -> annotator -> choice
  for (std::size_t a = 0; a < kAnnotators.size(); ++a) {
    const auto token = "tok" + std::to_string(a + 1);
    for (;;) {
      const auto task = get("/api/task", token);
      const auto dumped = task.dump();
      for (const auto& s : kSystems) ASSERT_EQ(dumped.find(s), std::string::npos);
      ASSERT_EQ(dumped.find("system"), std::string::npos);
      if (task["done"].get<bool>()) break;
      const auto tid = task["task_id"].get<std::string>();
      const auto& t = run.find(tid);
      ASSERT_EQ(task["cn_a"], t.first_shown().text);
      const auto want = intended(kAnnotators[a], tid);
      post("/api/choice", token, {{"task_id", tid}, {"choice", as_shown(t, want)}});
      canonical[tid][kAnnotators[a]] = want;
    }
  }
  ASSERT_EQ(canonical.size(), run.tournaments.size());

  // Human ranking: plurality per tournament, then win/tie/loss points.
  std::map<std::string, double> points;
  for (const auto& t : run.tournaments) {
    std::vector<std::string> labels;
    for (const auto& [_, c] : canonical[t.id]) labels.push_back(c);
    const auto v = plurality(labels);
    points[t.side_a.system_id] += v == "A" ? 1 : v == "Tie" ? 0.5 : 0;
    points[t.side_b.system_id] += v == "B" ? 1 : v == "Tie" ? 0.5 : 0;
  }
  const auto hr = get("/api/reports/human-rank", "boss");
  for (const auto& [s, p] : points) EXPECT_DOUBLE_EQ(hr["scoreboard"]["points"][s].get<double>(), p) << s;
  const auto& ranking = hr["ranking"];
  ASSERT_EQ(ranking.size(), 3u);
  for (std::size_t i = 1; i < ranking.size(); ++i) {
    EXPECT_GE(ranking[i - 1]["points"].get<double>(), ranking[i]["points"].get<double>());
  }

  // IAA over the shared subset, all strata.
  std::vector<double> ks;
  for (std::size_t i = 0; i < kAnnotators.size(); ++i) {
    for (std::size_t j = i + 1; j < kAnnotators.size(); ++j) {
      std::vector<std::string> x, y;
      for (const auto& tid : service->plan().shared) {
        x.push_back(canonical[tid][kAnnotators[i]]);
        y.push_back(canonical[tid][kAnnotators[j]]);
      }
      ks.push_back(kappa_by_hand(x, y));
    }
  }
  const auto iaa = get("/api/reports/iaa", "boss");
  double mean = 0;
  for (double k : ks) mean += k / ks.size();
  ASSERT_TRUE(iaa["undefined"].empty()) << iaa.dump();
  EXPECT_NEAR(iaa["means"]["all"].get<double>(), mean, 1e-12);
  EXPECT_GE(iaa["pairs"].size(), 3u);
}

TEST_F(AnnotationHttp, FeatureRatings) {
  std::map<std::string, double> sum;
  int n = 0;
  for (;;) {
    const auto task = get("/api/feature-task", "tok1");
    for (const auto& s : kSystems) ASSERT_EQ(task.dump().find(s), std::string::npos);
    if (task["done"].get<bool>()) break;
    EXPECT_EQ(task["scales"]["overall"], json::array({1, 5}));
    const int v = 1 + n % 5;
    json values;
    for (auto f : kFeatureNames) values[std::string(f)] = v;
    post("/api/feature", "tok1", {{"task_id", task["task_id"]}, {"values", values}});
    ++n;
  }
  EXPECT_EQ(n, 6);  // 2 HS x 3 systems
  json bad;
  for (auto f : kFeatureNames) bad[std::string(f)] = 9;
  post("/api/feature", "tok1", {{"task_id", "f000000"}, {"values", bad}}, 400);

  const auto rep = get("/api/reports/features", "boss");
  double total = 0;
  for (const auto& s : kSystems) total += rep[s]["overall"].get<double>() * 2;
  EXPECT_DOUBLE_EQ(total, 1 + 2 + 3 + 4 + 5 + 1);
}
