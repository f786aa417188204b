#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cneval/corpus.hpp"
#include "cneval/error.hpp"

using namespace cneval;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CNEVAL_TEST_DATA_DIR;

std::string csv(std::string body) { return "hs_id,hs_text,cn_text,target,split\n" + body; }

}  // namespace

TEST(Csv, ParsesQuotedFieldsAndEmbeddedNewlines) {
  const auto rows = parse_csv("a,\"b,c\",\"d \"\"e\"\"\"\nx,\"multi\nline\",z\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].fields, (std::vector<std::string>{"a", "b,c", "d \"e\""}));
  EXPECT_EQ(rows[1].fields[1], "multi\nline");
  EXPECT_EQ(rows[1].line, 2u);
}

TEST(Csv, EscapeRoundTrips) {
  for (std::string s : {"plain", "with,comma", "with \"quote\"", "new\nline"}) {
    const auto rows = parse_csv(csv_escape(s) + "\n");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].fields[0], s);
  }
}

TEST(Dataset, LoadsToyCorpusWithMultipleReferences) {
  const auto ds = load_dataset(kData / "toy_corpus.csv", DataFormat::kCsv, "toy");
  EXPECT_EQ(ds.pairs.size(), 12u);
  EXPECT_EQ(ds.instances.size(), 10u);
  EXPECT_EQ(ds.references_for("h1").size(), 2u);
  ASSERT_NE(ds.find("h3"), nullptr);
  EXPECT_EQ(ds.find("h3")->text, "Muslims are all the same, they hate us.");
  EXPECT_EQ(ds.find("h3")->target.value_or(""), "MUSLIMS");
  EXPECT_EQ(ds.instances_in(Split::kTest).size(), 6u);
  EXPECT_EQ(ds.instances_in(Split::kTrain).size(), 3u);
  EXPECT_EQ(ds.instances_in(Split::kValidation).size(), 1u);
}

TEST(Dataset, CsvAndJsonlRoundTrip) {
  const auto ds = load_dataset(kData / "toy_corpus.csv", DataFormat::kCsv, "toy");
  for (auto fmt : {DataFormat::kCsv, DataFormat::kJsonl}) {
    const auto again = parse_dataset(serialize_dataset(ds, fmt), fmt, "toy");
    ASSERT_EQ(again.pairs.size(), ds.pairs.size());
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      EXPECT_EQ(again.instances[again.pairs[i].hs].text, ds.instances[ds.pairs[i].hs].text);
      EXPECT_EQ(again.references[again.pairs[i].ref].text, ds.references[ds.pairs[i].ref].text);
    }
  }
}

TEST(Dataset, EmptyFieldNamesFieldAndLine) {
  try {
    parse_dataset(csv("h1,some hate,,,test\n"), DataFormat::kCsv);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("cn_text"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Dataset, RejectsBadInput) {
  EXPECT_THROW(parse_dataset("", DataFormat::kCsv), EmptyDatasetError);
  EXPECT_THROW(parse_dataset(csv(""), DataFormat::kCsv), EmptyDatasetError);
  EXPECT_THROW(parse_dataset("hs_id,hs_text,split\n", DataFormat::kCsv), SchemaError);
  EXPECT_THROW(parse_dataset(csv("h1,x,y,,holdout\n"), DataFormat::kCsv), SchemaError);
  EXPECT_THROW(parse_dataset(csv("h1,x,y,,test\nh1,other text,z,,test\n"), DataFormat::kCsv), SchemaError);
  EXPECT_THROW(parse_dataset("{not json}\n", DataFormat::kJsonl), SchemaError);
  EXPECT_THROW(parse_dataset("{\"hs_id\":\"a\",\"hs_text\":\"b\",\"split\":\"test\"}\n", DataFormat::kJsonl),
               SchemaError);
}

TEST(CorpusStats, HandCountedToyCorpus) {
  const auto ds = parse_dataset(csv("1,hate one,cn a b,,test\n"
                                    "1,hate one,cn c,,test\n"
                                    "2,hate two,cn a b,,test\n"
                                    "3,hate one,cn d e f g,,train\n"),
                                DataFormat::kCsv);
  const auto s = corpus_stats(ds);
  EXPECT_EQ(s.pair_count, 4u);
  EXPECT_EQ(s.unique_hs, 2u);  // identity is by text, not id
  EXPECT_EQ(s.unique_cn, 3u);
  EXPECT_DOUBLE_EQ(s.avg_cn_per_hs, 2.0);
  EXPECT_DOUBLE_EQ(s.avg_words_per_cn, (3 + 2 + 3 + 5) / 4.0);
}

TEST(CorpusStats, EmptyDatasetThrows) { EXPECT_THROW(corpus_stats(Dataset{}), EmptyDatasetError); }

TEST(Dedup, KeepsOnePairPerHsTextDeterministically) {
  const auto ds = load_dataset(kData / "toy_corpus.csv", DataFormat::kCsv, "toy");
  const auto a = dedup(ds, 5);
  const auto b = dedup(ds, 5);
  const auto s = corpus_stats(a);
  EXPECT_EQ(s.pair_count, s.unique_hs);
  EXPECT_EQ(s.unique_hs, corpus_stats(ds).unique_hs);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i)
    EXPECT_EQ(a.references[a.pairs[i].ref].text, b.references[b.pairs[i].ref].text);
}

TEST(AssignSplits, FractionsAndDeterminism) {
  std::string body;
  for (int i = 0; i < 100; ++i) body += std::to_string(i) + ",hate " + std::to_string(i) + ",cn,,test\n";
  const auto ds = parse_dataset(csv(body), DataFormat::kCsv);
  const auto out = assign_splits(ds, 0.6, 0.2, 9);
  EXPECT_EQ(out.instances_in(Split::kTrain).size(), 60u);
  EXPECT_EQ(out.instances_in(Split::kValidation).size(), 20u);
  EXPECT_EQ(out.instances_in(Split::kTest).size(), 20u);
  const auto again = assign_splits(ds, 0.6, 0.2, 9);
  for (std::size_t i = 0; i < out.instances.size(); ++i) EXPECT_EQ(out.instances[i].split, again.instances[i].split);
  EXPECT_THROW(assign_splits(ds, 0.9, 0.2, 1), ConfigError);
}

TEST(Split, Names) {
  EXPECT_EQ(parse_split("validation"), Split::kValidation);
  EXPECT_EQ(to_string(Split::kTrain), "train");
  EXPECT_EQ(parse_split("dev"), Split::kValidation);
  EXPECT_THROW(parse_split("holdout"), SchemaError);
}
