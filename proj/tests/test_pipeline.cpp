#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cneval/pipeline.hpp"
#include "cneval/text.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cneval;
using testutil::TempDir;

namespace {

const std::filesystem::path kData = CNEVAL_TEST_DATA_DIR;

json config_doc(const std::filesystem::path& root, const std::string& judge_mock = "length") {
  return json{
      {"run_root", root.string()},
      {"seed", 42},
      {"parallelism", 2},
      {"fsync", false},
      {"datasets", {{{"name", "toy"}, {"path", (kData / "toy_corpus.csv").string()}}}},
      {"systems",
       {{{"id", "gold"}, {"family", "gold"}},
        {{"id", "mistral-zs"}, {"family", "mistral"}, {"mock", {{"kind", "random"}, {"seed", 1}}}},
        {{"id", "zephyr-zs"}, {"family", "zephyr"}, {"mock", {{"kind", "random"}, {"seed", 2}, {"max_words", 40}}}},
        {{"id", "llama-chat-zs"}, {"family", "llama-chat"}, {"mock", {{"kind", "refuse"}}}}}},
      {"judge", {{"mock", judge_mock}}},
      {"metrics", {{"bertscore", true}, {"embedding_stub", true}}},
      {"annotation", {{"annotators", {{{"id", "a1"}, {"token", "t1"}}, {{"id", "a2"}, {"token", "t2"}}}}}},
  };
}

std::size_t words(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

int run_cli(const std::string& args) {
  const auto cmd = std::string(CNEVAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Pipeline, EndToEndWithMocks) {
  TempDir tmp;
  const auto cfg = parse_config(config_doc(tmp.path()));
  std::ostringstream log;

  const auto gen = cmd_generate(cfg, "r1", log);
  EXPECT_EQ(gen.expected, 24u);  // 4 systems x 6 test HS
  EXPECT_TRUE(gen.complete());
  EXPECT_EQ(cmd_generate(cfg, "r1", log).generated, 0u);

  const auto dir = tmp.path() / "r1";
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  const auto cands = read_jsonl(dir / "candidates.jsonl");
  ASSERT_EQ(cands.size(), 24u);
  std::map<std::pair<std::string, std::string>, std::string> text;  // (system, hs) -> cn
  for (const auto& c : cands) {
    text[{c["system_id"], c["hs_id"]}] = c["text"];
    EXPECT_EQ(c["refusal_flag"].get<bool>(), c["system_id"] == "llama-chat-zs");
    EXPECT_EQ(c["text"].get<std::string>().find("###"), std::string::npos);
  }

  const auto res = cmd_tournament(cfg, "r1", log);
  EXPECT_EQ(res.plan_size, 36u);  // C(4,2) x 6
  EXPECT_TRUE(res.health.complete());
  EXPECT_EQ(res.refusals, 6u);
  EXPECT_EQ(cmd_tournament(cfg, "r1", log).health.new_verdicts, 0u);

  // Length judge: the side with more words wins, equal counts tie.
  std::map<std::string, double> points;
  for (const auto& v : read_jsonl(dir / "verdicts.jsonl")) {
    const auto a = v["system_a"].get<std::string>(), b = v["system_b"].get<std::string>();
    const auto h = v["hs_id"].get<std::string>();
    const auto wa = words(text[{a, h}]), wb = words(text[{b, h}]);
    points[a] += wa > wb ? 1 : wa == wb ? 0.5 : 0;
    points[b] += wb > wa ? 1 : wa == wb ? 0.5 : 0;
    EXPECT_EQ(v["outcome"], wa > wb ? "A" : wa < wb ? "B" : "Tie");
  }
  ASSERT_TRUE(res.board);
  for (const auto& [s, p] : points) EXPECT_DOUBLE_EQ(res.board->points.at(s), p) << s;
  const auto standings = oracle::standings_from_verdicts(dir / "verdicts.jsonl");
  ASSERT_EQ(standings.size(), res.ranking.size());
  for (std::size_t i = 0; i < standings.size(); ++i) {
    EXPECT_EQ(standings[i].system, res.ranking[i].system_id);
    EXPECT_EQ(standings[i].rank, res.ranking[i].rank);
    EXPECT_NEAR(standings[i].share, res.ranking[i].share, 1e-9);
  }

  const auto reports = cmd_metrics(cfg, "r1", log);
  ASSERT_EQ(reports.size(), 4u);
  std::map<std::string, MetricReport> by;
  for (const auto& r : reports) by[r.system_id] = r;
  ASSERT_TRUE(by["gold"].bleu && by["mistral-zs"].bleu);
  EXPECT_GT(*by["gold"].bleu, *by["mistral-zs"].bleu);
  EXPECT_TRUE(by["zephyr-zs"].bertscore_f1);
  EXPECT_EQ(by["gold"].items, 6u);

  const auto cor = cmd_correlate(cfg, {"r1"}, log);
  EXPECT_NE(std::find(cor.labels.begin(), cor.labels.end(), cfg.judge.id), cor.labels.end());
  EXPECT_NE(std::find(cor.labels.begin(), cor.labels.end(), "BLEU"), cor.labels.end());
  for (std::size_t i = 0; i < cor.labels.size(); ++i) {
    if (cor.spearman[i][i]) EXPECT_NEAR(*cor.spearman[i][i], 1.0, 1e-12);
  }

  const auto exported = json::parse(cmd_export(cfg, "r1", "json"));
  EXPECT_EQ(exported["rankings"][cfg.judge.id].size(), 4u);
  EXPECT_EQ(exported["metrics"].size(), 4u);
  const auto csv = cmd_export(cfg, "r1", "csv");
  EXPECT_NE(csv.find("bleu"), std::string::npos);

  RunStore store(cfg.run_root, "r1");
  store.write_index();
  EXPECT_TRUE(store.verify().empty());
}

TEST(Pipeline, DeterministicAcrossRuns) {
  TempDir tmp;
  const auto cfg = parse_config(config_doc(tmp.path()));
  std::ostringstream log;
  cmd_generate(cfg, "x", log);
  cmd_generate(cfg, "y", log);
  cmd_tournament(cfg, "x", log);
  cmd_tournament(cfg, "y", log);
  EXPECT_EQ(read_jsonl(tmp.path() / "x" / "candidates.jsonl").size(),
            read_jsonl(tmp.path() / "y" / "candidates.jsonl").size());
  auto strip = [](std::vector<json> v) {
    for (auto& j : v) j.erase("timestamp");
    return v;
  };
  EXPECT_EQ(strip(read_jsonl(tmp.path() / "x" / "plan.jsonl")), strip(read_jsonl(tmp.path() / "y" / "plan.jsonl")));
}

TEST(Pipeline, GarbageJudgeTripsHealthCheck) {
  TempDir tmp;
  const auto cfg = parse_config(config_doc(tmp.path(), "garbage"));
  std::ostringstream log;
  cmd_generate(cfg, "g", log);
  EXPECT_THROW(cmd_tournament(cfg, "g", log), HealthError);
  // failed parses are still recorded as flagged ties
  const auto verdicts = read_jsonl(tmp.path() / "g" / "verdicts.jsonl");
  ASSERT_EQ(verdicts.size(), 36u);
  for (const auto& v : verdicts) {
    EXPECT_EQ(v["parse_status"], "failed");
    EXPECT_EQ(v["outcome"], "Tie");
  }
}

TEST(Pipeline, MissingRunIsDataError) {
  TempDir tmp;
  const auto cfg = parse_config(config_doc(tmp.path()));
  try {
    cmd_export(cfg, "nope", "json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

TEST(Pipeline, FixtureCorrelation) {
  const auto rep = correlate_fixture(kData / "table3.csv");
  ASSERT_EQ(rep.labels.back(), "Human");
  const auto& row = rep.spearman[0];
  ASSERT_TRUE(row[1]);
  EXPECT_NEAR(*row[1], 0.70, 1e-12);
  const auto heat = rep.to_heatmap();
  EXPECT_NE(heat.find("Human"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const auto good = tmp.path() / "good.json";
  std::ofstream(good) << config_doc(tmp.path() / "runs").dump();
  const auto garbage = tmp.path() / "garbage.json";
  std::ofstream(garbage) << config_doc(tmp.path() / "runs", "garbage").dump();
  auto bad_doc = config_doc(tmp.path() / "runs");
  bad_doc["colour"] = "blue";
  const auto bad = tmp.path() / "bad.json";
  std::ofstream(bad) << bad_doc.dump();

  EXPECT_EQ(run_cli("generate --config " + bad.string() + " --run r"), 2);
  EXPECT_EQ(run_cli("generate --config " + good.string()), 2);  // --run missing
  EXPECT_EQ(run_cli("export --config " + good.string() + " --run ghost --export json"), 3);
  EXPECT_EQ(run_cli("generate --config " + good.string() + " --run r"), 0);
  EXPECT_EQ(run_cli("tournament --config " + good.string() + " --run r"), 0);
  EXPECT_EQ(run_cli("metrics --config " + good.string() + " --run r"), 0);
  EXPECT_EQ(run_cli("export --config " + good.string() + " --run r --export csv"), 0);
  EXPECT_EQ(run_cli("correlate --fixture " + (kData / "table3.csv").string()), 0);
  EXPECT_EQ(run_cli("generate --config " + garbage.string() + " --run g"), 0);
  EXPECT_EQ(run_cli("tournament --config " + garbage.string() + " --run g"), 5);
}
