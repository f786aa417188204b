#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cneval::text {

/// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Unicode White_Space property.
bool is_space(char32_t c);

/// ASCII punctuation plus the common Unicode punctuation blocks
/// (Latin-1 punctuation, General Punctuation, CJK symbols, fullwidth forms).
bool is_punct(char32_t c);

/// Simple case folding for Latin, Greek, and Cyrillic; other scripts pass through.
char32_t to_lower(char32_t c);

/// Strips leading and trailing Unicode whitespace.
std::string trim(std::string_view s);

/// Splits on runs of Unicode whitespace after trimming. Used for word counts.
std::vector<std::string> split_whitespace(std::string_view s);

/// Replaces every CR/LF with a single space.
std::string collapse_newlines(std::string_view s);

/// The metric tokenizer: lowercase, split on Unicode whitespace, and emit every
/// punctuation code point as its own token.
struct Tokenizer {
  static constexpr std::string_view kPolicyId = "lower-ws-punct-v1";
  bool lowercase = true;

  std::vector<std::string> operator()(std::string_view s) const;
};

std::vector<std::string> tokenize(std::string_view s);

}  // namespace cneval::text
