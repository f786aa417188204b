#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cneval/error.hpp"
#include "cneval/promptkit.hpp"

using namespace cneval;
namespace fs = std::filesystem;

namespace {

SystemDescriptor sys(Family f, GenMode m = GenMode::kZeroShot) {
  SystemDescriptor d;
  d.id = "x";
  d.family = f;
  d.mode = m;
  d.has_mock = true;
  return d;
}

HsInstance hs(std::string text) {
  HsInstance h;
  h.id = "h1";
  h.text = std::move(text);
  return h;
}

const std::string kInstr(kGenerationInstruction);

}  // namespace

TEST(Templates, BuiltinRendersEachFamily) {
  const auto reg = TemplateRegistry::builtin();
  const auto h = hs("They ruin everything.");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kMistral), h),
            kInstr + "\n###Input:\nThey ruin everything.\n###Output:\n");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kMistralInstruct), h),
            "<s>[INST] " + kInstr + " They ruin everything. [/INST]");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kZephyr), h),
            "<|system|>\n" + kInstr + "</s>\n<|user|>\nThey ruin everything.</s>\n<|assistant|>\n");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kLlamaChat), h),
            "<s>[INST] <<SYS>>\n" + kInstr + "\n<</SYS>>They ruin everything. [/INST]");
}

TEST(Templates, FineTunedUsesSameTemplate) {
  const auto reg = TemplateRegistry::builtin();
  const auto h = hs("x y");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kZephyr, GenMode::kFineTuned), h),
            render_generation_prompt(reg, sys(Family::kZephyr), h));
}

TEST(Templates, GoldHasNoTemplateAndCustomNeedsOne) {
  const auto reg = TemplateRegistry::builtin();
  EXPECT_THROW(render_generation_prompt(reg, sys(Family::kGold, GenMode::kGold), hs("x")), TemplateNotFoundError);
  EXPECT_THROW(render_generation_prompt(reg, sys(Family::kCustom), hs("x")), TemplateNotFoundError);
  EXPECT_THROW(render_generation_prompt(reg, sys(Family::kMistral), hs("   ")), ValidationError);
}

TEST(Templates, VersionsRecorded) {
  const auto v = TemplateRegistry::builtin().versions();
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.at("judge"), "c5-v1");
}

TEST(Templates, PlaceholderInUserTextIsLiteral) {
  const auto reg = TemplateRegistry::builtin();
  const auto out = render_generation_prompt(reg, sys(Family::kMistralInstruct), hs("say {{instruction}} now"));
  EXPECT_NE(out.find("say {{instruction}} now"), std::string::npos);
}

TEST(Templates, ParseAssetDecodesEscapesAndRejectsMissingHeaders) {
  const auto t = PromptTemplate::parse_asset("@tag t\n@version 2\n---\nA\\n\nB\\tC\\\\\n");
  EXPECT_EQ(t.tag, "t");
  EXPECT_EQ(t.body, "A\nB\tC\\");
  EXPECT_THROW(PromptTemplate::parse_asset("@tag t\n---\nbody"), ConfigError);
  EXPECT_THROW(PromptTemplate::parse_asset("@tag t\n@version 1\nbody"), ConfigError);
}

TEST(Templates, LoadDirOverridesBuiltin) {
  const auto dir = fs::temp_directory_path() / "cneval-tmpl-test";
  fs::create_directories(dir);
  std::ofstream(dir / "mistral.tmpl") << "@tag mistral\n@version custom\n---\nQ: {{hate_speech}}\n";
  auto reg = TemplateRegistry::builtin();
  const auto extra = TemplateRegistry::load_dir(dir);
  for (const auto& [tag, t] : extra.all()) reg.add(t);
  EXPECT_EQ(reg.versions().at("mistral"), "custom");
  EXPECT_EQ(render_generation_prompt(reg, sys(Family::kMistral), hs("hi")), "Q: hi");
  fs::remove_all(dir);
}

TEST(JudgePrompt, RendersAndParsesBack) {
  const auto reg = TemplateRegistry::builtin();
  const auto p = render_judge_prompt(reg, "hate {{cn_a}} text", "first answer", "second answer");
  EXPECT_NE(p.find("[The Start of Assistant 1's Answer]\nfirst answer\n"), std::string::npos);
  EXPECT_NE(p.find("[The Start of Assistant 2's Answer]\nsecond answer\n"), std::string::npos);
  const auto parts = parse_judge_prompt(reg, p);
  ASSERT_TRUE(parts);
  EXPECT_EQ(parts->hs, "hate {{cn_a}} text");
  EXPECT_EQ(parts->cn_a, "first answer");
  EXPECT_EQ(parts->cn_b, "second answer");
}

TEST(JudgePrompt, RejectsEmptyOrMultilineAnswers) {
  const auto reg = TemplateRegistry::builtin();
  EXPECT_THROW(render_judge_prompt(reg, "hs", "", "b"), ValidationError);
  EXPECT_THROW(render_judge_prompt(reg, "hs", "a\nb", "b"), ValidationError);
  EXPECT_THROW(render_judge_prompt(reg, " ", "a", "b"), ValidationError);
}

TEST(Descriptor, Validation) {
  auto g = sys(Family::kGold, GenMode::kZeroShot);
  EXPECT_THROW(g.validate(), ConfigError);
  SystemDescriptor remote;
  remote.id = "r";
  remote.family = Family::kZephyr;
  EXPECT_THROW(remote.validate(), ConfigError);
  remote.endpoint = "http://localhost:1/v1";
  EXPECT_NO_THROW(remote.validate());
  EXPECT_EQ(parse_family("mistral-instruct"), Family::kMistralInstruct);
  EXPECT_EQ(parse_mode("ft"), GenMode::kFineTuned);
}
