#include <gtest/gtest.h>

#include <fstream>

#include "cneval/config.hpp"
#include "cneval/error.hpp"
#include "test_util.hpp"

using namespace cneval;

namespace {

json minimal() {
  return json::parse(R"({
    "datasets": [{"name": "toy", "path": "data/toy.csv"}],
    "systems": [
      {"id": "gold", "family": "gold"},
      {"id": "mistral-zs", "family": "mistral", "mock": {"kind": "random", "seed": 1}}
    ]
  })");
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const auto c = parse_config(minimal(), "/base");
  EXPECT_EQ(c.run_root, std::filesystem::path("/base/runs"));
  EXPECT_EQ(c.datasets.at(0).path, std::filesystem::path("/base/data/toy.csv"));
  EXPECT_EQ(c.datasets[0].format, DataFormat::kCsv);
  ASSERT_EQ(c.datasets[0].splits.size(), 1u);
  EXPECT_EQ(c.datasets[0].splits[0], Split::kTest);
  EXPECT_EQ(c.roster(), (std::vector<std::string>{"gold", "mistral-zs"}));
  EXPECT_EQ(c.systems[0].descriptor.mode, GenMode::kGold);
  EXPECT_EQ(c.systems[1].descriptor.mode, GenMode::kZeroShot);
  EXPECT_TRUE(c.fsync);
  EXPECT_EQ(c.parallelism, 4);
  // no judge section: deterministic length mock
  ASSERT_TRUE(c.judge.mock);
  EXPECT_EQ(*c.judge.mock, MockJudge::Kind::kLength);
  EXPECT_EQ(c.judge.mode, JudgeMode::kFast);
  EXPECT_EQ(c.metric_pathway, MetricPathway::kCorpus);
  EXPECT_EQ(c.source, minimal());
}

TEST(Config, AbsolutePathsKept) {
  auto doc = minimal();
  doc["run_root"] = "/tmp/x";
  doc["datasets"][0]["path"] = "/data/c.jsonl";
  doc["datasets"][0]["format"] = "jsonl";
  const auto c = parse_config(doc, "/base");
  EXPECT_EQ(c.run_root, std::filesystem::path("/tmp/x"));
  EXPECT_EQ(c.datasets[0].path, std::filesystem::path("/data/c.jsonl"));
  EXPECT_EQ(c.datasets[0].format, DataFormat::kJsonl);
}

TEST(Config, FullDocument) {
  auto doc = minimal();
  doc["seed"] = 7;
  doc["fsync"] = false;
  doc["endpoint"] = {{"timeout_s", 5}, {"retries", 1}, {"backoff_ms", 10}, {"api_key_env", "KEY"}};
  doc["judge"] = {{"endpoint", "http://j"}, {"model", "judgelm"}, {"mode", "normal"}, {"fixed_order", true}};
  doc["metrics"] = {{"level", "sentence"}, {"max_n", 3}, {"embedding_stub", true}, {"rr_window", 50}};
  doc["annotation"] = {{"annotators", {{{"id", "a1"}, {"token", "t1"}}, {{"id", "a2"}, {"token", "t2"}}}},
                       {"feature_annotators", {"a1"}},
                       {"port", 0}};
  doc["correlate"] = {{"metric_pathway", "tournament"}};
  const auto c = parse_config(doc);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_FALSE(c.fsync);
  EXPECT_EQ(c.endpoint.retries, 1);
  EXPECT_EQ(c.judge.mode, JudgeMode::kNormal);
  EXPECT_TRUE(c.judge.fixed_order);
  EXPECT_FALSE(c.judge.mock);
  EXPECT_EQ(c.metrics.options.level, MetricLevel::kSentence);
  EXPECT_EQ(c.metrics.options.max_n, 3);
  EXPECT_EQ(c.metrics.options.rr_window, 50u);
  EXPECT_EQ(c.annotation.annotators.size(), 2u);
  EXPECT_EQ(c.metric_pathway, MetricPathway::kTournament);
  const auto e = c.endpoint_for("http://x", "m");
  EXPECT_EQ(e.api_key_env.value_or(""), "KEY");
  EXPECT_EQ(e.retries, 1);
}

TEST(Config, Rejections) {
  auto expect_bad = [](const std::function<void(json&)>& edit) {
    auto doc = minimal();
    edit(doc);
    EXPECT_THROW(parse_config(doc), ConfigError) << doc.dump();
  };
  expect_bad([](json& d) { d["colour"] = "blue"; });
  expect_bad([](json& d) { d["systems"][0]["temperature"] = 1; });
  expect_bad([](json& d) { d["systems"] = json::array(); });
  expect_bad([](json& d) { d.erase("systems"); });
  expect_bad([](json& d) { d.erase("datasets"); });
  expect_bad([](json& d) { d["systems"][1]["id"] = "gold"; });
  expect_bad([](json& d) { d["systems"][1]["family"] = "gpt"; });
  expect_bad([](json& d) { d["systems"][1]["mode"] = "gold"; });
  expect_bad([](json& d) { d["seed"] = "seven"; });
  expect_bad([](json& d) { d["parallelism"] = 0; });
  expect_bad([](json& d) { d["datasets"][0]["splits"] = {"holdout"}; });
  expect_bad([](json& d) { d["datasets"][0]["hs_sample"] = 0; });
  expect_bad([](json& d) { d["judge"] = json::object(); });
  expect_bad([](json& d) { d["judge"] = {{"endpoint", "http://j"}}; });
  expect_bad([](json& d) { d["judge"] = {{"mock", "length"}, {"max_failure_rate", 2}}; });
  expect_bad([](json& d) { d["metrics"] = {{"bertscore", true}}; });
  expect_bad([](json& d) { d["metrics"] = {{"level", "document"}}; });
  expect_bad([](json& d) { d["annotation"] = {{"shared_fraction", 1.5}}; });
  expect_bad([](json& d) { d["annotation"] = {{"feature_annotators", {"ghost"}}}; });
  expect_bad([](json& d) {
    d["annotation"] = {{"annotators", {{{"id", "a"}, {"token", "t"}}, {{"id", "b"}, {"token", "t"}}}}};
  });
  expect_bad([](json& d) { d["correlate"] = {{"metric_pathway", "both"}}; });
  expect_bad([](json& d) { d["endpoint"] = {{"timeout_s", 0}}; });
}

TEST(Config, LoadFromFile) {
  testutil::TempDir tmp;
  const auto path = tmp.path() / "run.json";
  std::ofstream(path) << minimal().dump();
  const auto c = load_config(path);
  EXPECT_EQ(c.datasets[0].path, tmp.path() / "data/toy.csv");

  std::ofstream(tmp.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(tmp.path() / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(tmp.path() / "missing.json"), ConfigError);
}
