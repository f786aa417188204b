#include "cneval/promptkit.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <vector>

#include "cneval/error.hpp"
#include "cneval/text.hpp"

namespace cneval {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::kMistral: return "mistral";
    case Family::kMistralInstruct: return "mistral-instruct";
    case Family::kZephyr: return "zephyr";
    case Family::kLlamaChat: return "llama-chat";
    case Family::kGold: return "gold";
    case Family::kCustom: return "custom";
  }
  return "custom";
}

std::string_view to_string(GenMode m) {
  switch (m) {
    case GenMode::kZeroShot: return "zs";
    case GenMode::kFineTuned: return "ft";
    case GenMode::kGold: return "gold";
  }
  return "zs";
}

Family parse_family(std::string_view s) {
  for (auto f : {Family::kMistral, Family::kMistralInstruct, Family::kZephyr, Family::kLlamaChat, Family::kGold,
                 Family::kCustom}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown model family '" + std::string(s) + "'");
}

GenMode parse_mode(std::string_view s) {
  for (auto m : {GenMode::kZeroShot, GenMode::kFineTuned, GenMode::kGold}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown generation mode '" + std::string(s) + "'");
}

std::string SystemDescriptor::effective_template_tag() const {
  return template_tag.empty() ? std::string(to_string(family)) : template_tag;
}

void SystemDescriptor::validate() const {
  if (id.empty()) throw ConfigError("system id must not be empty");
  if ((family == Family::kGold) != (mode == GenMode::kGold)) {
    throw ConfigError("system '" + id + "': gold family and gold mode must go together");
  }
  if (mode != GenMode::kGold && !endpoint && !has_mock) {
    throw ConfigError("system '" + id + "' needs an endpoint or a mock generator");
  }
  if (family == Family::kCustom && template_tag.empty()) {
    throw ConfigError("system '" + id + "': custom family requires a template tag");
  }
}

PromptTemplate PromptTemplate::parse_asset(std::string_view asset) {
  PromptTemplate t;
  std::size_t pos = 0;
  bool saw_separator = false;
  while (pos < asset.size()) {
    auto nl = asset.find('\n', pos);
    if (nl == std::string_view::npos) nl = asset.size();
    std::string_view line = asset.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    if (line == "---") {
      saw_separator = true;
      break;
    }
    if (line.rfind("@tag ", 0) == 0) {
      t.tag = text::trim(line.substr(5));
    } else if (line.rfind("@version ", 0) == 0) {
      t.version = text::trim(line.substr(9));
    } else if (!text::trim(line).empty()) {
      throw ConfigError("unexpected template header line '" + std::string(line) + "'");
    }
  }
  if (!saw_separator) throw ConfigError("template asset lacks the '---' separator");
  if (t.tag.empty()) throw ConfigError("template asset lacks an @tag header");
  if (t.version.empty()) throw ConfigError("template '" + t.tag + "' lacks an @version header");

  std::string_view raw = pos < asset.size() ? asset.substr(pos) : std::string_view{};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '\n' || c == '\r') continue;
    if (c == '\\' && i + 1 < raw.size()) {
      const char e = raw[i + 1];
      if (e == 'n') {
        t.body.push_back('\n');
        ++i;
        continue;
      }
      if (e == 't') {
        t.body.push_back('\t');
        ++i;
        continue;
      }
      if (e == '\\') {
        t.body.push_back('\\');
        ++i;
        continue;
      }
    }
    t.body.push_back(c);
  }
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open template '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_asset(ss.str());
}

std::string substitute(std::string_view body, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(body.size() + 256);
  std::size_t i = 0;
  while (i < body.size()) {
    if (body.compare(i, 2, "{{") == 0) {
      const auto close = body.find("}}", i + 2);
      if (close != std::string_view::npos) {
        const auto key = body.substr(i, close + 2 - i);
        if (auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 2;
          continue;
        }
      }
    }
    out.push_back(body[i]);
    ++i;
  }
  return out;
}

TemplateRegistry TemplateRegistry::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("template directory '" + dir.string() + "' not found");
  TemplateRegistry reg;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tmpl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) reg.add(PromptTemplate::load(f));
  return reg;
}

TemplateRegistry TemplateRegistry::builtin() {
  return load_dir(std::filesystem::path(CNEVAL_DEFAULT_ASSET_DIR) / "templates");
}

void TemplateRegistry::add(PromptTemplate t) {
  auto tag = t.tag;
  templates_.insert_or_assign(std::move(tag), std::move(t));
}

const PromptTemplate& TemplateRegistry::get(std::string_view tag) const {
  auto it = templates_.find(tag);
  if (it == templates_.end()) throw TemplateNotFoundError("no prompt template registered for '" + std::string(tag) + "'");
  return it->second;
}

bool TemplateRegistry::contains(std::string_view tag) const { return templates_.find(tag) != templates_.end(); }

std::map<std::string, std::string> TemplateRegistry::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [tag, t] : templates_) out[tag] = t.version;
  return out;
}

std::string render_generation_prompt(const TemplateRegistry& registry, const SystemDescriptor& system,
                                     const HsInstance& hs) {
  if (system.mode == GenMode::kGold) {
    throw TemplateNotFoundError("gold system '" + system.id + "' has no generation template");
  }
  const auto& tmpl = registry.get(system.effective_template_tag());
  if (text::trim(hs.text).empty()) throw ValidationError("hate speech text is empty");
  return substitute(tmpl.body, {{std::string(kInstructionSlot), std::string(kGenerationInstruction)},
                                {std::string(kHateSpeechSlot), hs.text}});
}

std::string render_judge_prompt(const TemplateRegistry& registry, std::string_view hs, std::string_view cn_a,
                                std::string_view cn_b) {
  if (text::trim(hs).empty()) throw ValidationError("hate speech text is empty");
  if (text::trim(cn_a).empty() || text::trim(cn_b).empty()) throw ValidationError("counter-narrative text is empty");
  if (cn_a.find_first_of("\r\n") != std::string_view::npos || cn_b.find_first_of("\r\n") != std::string_view::npos) {
    throw ValidationError("counter-narrative text must be a single line");
  }
  const auto& tmpl = registry.get(kJudgeTemplateTag);
  return substitute(tmpl.body, {{std::string(kHateSpeechSlot), std::string(hs)},
                                {std::string(kCnASlot), std::string(cn_a)},
                                {std::string(kCnBSlot), std::string(cn_b)}});
}

std::optional<JudgePromptParts> parse_judge_prompt(const TemplateRegistry& registry, std::string_view prompt) {
  const std::string_view body = registry.get(kJudgeTemplateTag).body;
  const auto p_hs = body.find(kHateSpeechSlot);
  const auto p_a = body.find(kCnASlot);
  const auto p_b = body.find(kCnBSlot);
  if (p_hs == std::string_view::npos || p_a == std::string_view::npos || p_b == std::string_view::npos ||
      !(p_hs < p_a && p_a < p_b)) {
    return std::nullopt;
  }
  const auto head = body.substr(0, p_hs);
  const auto mid1 = body.substr(p_hs + kHateSpeechSlot.size(), p_a - p_hs - kHateSpeechSlot.size());
  const auto mid2 = body.substr(p_a + kCnASlot.size(), p_b - p_a - kCnASlot.size());
  const auto tail = body.substr(p_b + kCnBSlot.size());

  if (prompt.size() < head.size() + tail.size()) return std::nullopt;
  if (prompt.substr(0, head.size()) != head) return std::nullopt;
  if (prompt.substr(prompt.size() - tail.size()) != tail) return std::nullopt;
  std::string_view rest = prompt.substr(head.size(), prompt.size() - head.size() - tail.size());

  const auto at2 = rest.rfind(mid2);
  if (at2 == std::string_view::npos) return std::nullopt;
  JudgePromptParts parts;
  parts.cn_b = std::string(rest.substr(at2 + mid2.size()));
  rest = rest.substr(0, at2);
  const auto at1 = rest.rfind(mid1);
  if (at1 == std::string_view::npos) return std::nullopt;
  parts.cn_a = std::string(rest.substr(at1 + mid1.size()));
  parts.hs = std::string(rest.substr(0, at1));
  return parts;
}

}  // namespace cneval
