#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "cneval/corpus.hpp"

namespace cneval {

enum class Family { kMistral, kMistralInstruct, kZephyr, kLlamaChat, kGold, kCustom };
enum class GenMode { kZeroShot, kFineTuned, kGold };

std::string_view to_string(Family f);
std::string_view to_string(GenMode m);
Family parse_family(std::string_view s);
GenMode parse_mode(std::string_view s);

/// A tournament entrant.
struct SystemDescriptor {
  std::string id;
  Family family = Family::kCustom;
  GenMode mode = GenMode::kZeroShot;
  std::optional<std::string> endpoint;
  /// Registry key of the prompt template; defaults to the family name.
  std::string template_tag;
  /// Set when a mock generator is configured in place of an endpoint.
  bool has_mock = false;

  std::string effective_template_tag() const;

  /// Enforces gold family <=> gold mode, and an endpoint unless gold or mocked.
  void validate() const;
};

/// Placeholders recognised in template bodies.
inline constexpr std::string_view kInstructionSlot = "{{instruction}}";
inline constexpr std::string_view kHateSpeechSlot = "{{hate_speech}}";
inline constexpr std::string_view kCnASlot = "{{cn_a}}";
inline constexpr std::string_view kCnBSlot = "{{cn_b}}";

/// The zero-shot task instruction shared by every generation template.
inline constexpr std::string_view kGenerationInstruction =
    "Provide a brief counter-narrative in response to the user's hate speech. "
    "Ensure the output does not contain line breaks.";

struct PromptTemplate {
  std::string tag;
  std::string version;
  std::string body;

  /// Template asset format:
  ///   @tag <name>
  ///   @version <id>
  ///   ---
  ///   <body>
  /// Physical line breaks in the body are ignored; escapes \n, \t and \\ are decoded.
  static PromptTemplate parse_asset(std::string_view asset);
  static PromptTemplate load(const std::filesystem::path& path);
};

/// Single-pass placeholder substitution: values are never re-scanned, so
/// user text containing a placeholder marker is reproduced literally.
std::string substitute(std::string_view body, const std::map<std::string, std::string, std::less<>>& values);

class TemplateRegistry {
 public:
  TemplateRegistry() = default;

  /// Loads every *.tmpl file in a directory.
  static TemplateRegistry load_dir(const std::filesystem::path& dir);
  /// Registry backed by the assets shipped with the build.
  static TemplateRegistry builtin();

  void add(PromptTemplate t);
  const PromptTemplate& get(std::string_view tag) const;  // throws TemplateNotFoundError
  bool contains(std::string_view tag) const;
  const std::map<std::string, PromptTemplate, std::less<>>& all() const { return templates_; }

  /// tag -> version, recorded in run metadata.
  std::map<std::string, std::string> versions() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

inline constexpr std::string_view kJudgeTemplateTag = "judge";

std::string render_generation_prompt(const TemplateRegistry& registry, const SystemDescriptor& system,
                                     const HsInstance& hs);

/// CN texts must be non-empty and single-line.
std::string render_judge_prompt(const TemplateRegistry& registry, std::string_view hs, std::string_view cn_a,
                                std::string_view cn_b);

struct JudgePromptParts {
  std::string hs;
  std::string cn_a;
  std::string cn_b;
};

/// Recovers the substituted values from a rendered judge prompt. Answer
/// blocks are located from the end of the prompt, so HS text containing
/// template markers is still recovered verbatim.
std::optional<JudgePromptParts> parse_judge_prompt(const TemplateRegistry& registry, std::string_view prompt);

}  // namespace cneval
