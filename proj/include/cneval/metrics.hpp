#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cneval/http_endpoint.hpp"

namespace cneval {

using json = nlohmann::json;
using Tokens = std::vector<std::string>;

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

inline constexpr double kBleuEpsilon = 1e-9;

struct BleuScore {
  double score = 0.0;
  double brevity_penalty = 0.0;
  std::vector<double> precisions;  // per order actually used
  /// Candidate had no tokens; score is 0 by convention.
  bool degenerate = false;
};

/// Sentence BLEU. Clipping uses the maximum count of each n-gram over the
/// references; the brevity penalty uses the closest reference length (shorter
/// on ties). Orders longer than the candidate are left out of the geometric
/// mean, and zero precisions of higher orders are smoothed to epsilon. No
/// unigram overlap gives exactly 0.
BleuScore sentence_bleu(const Tokens& candidate, std::span<const Tokens> references, int max_n = 4);
BleuScore sentence_bleu(std::string_view candidate, std::span<const std::string> references, int max_n = 4);

/// Corpus BLEU over (candidate, references) segments with exact pooled counts, no smoothing.
BleuScore corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references,
                      int max_n = 4);

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;
};

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Against several references the reference with the highest F1 is reported.
RougeL rouge_l(const Tokens& candidate, std::span<const Tokens> references);
RougeL rouge_l(std::string_view candidate, std::span<const std::string> references);

// ---------------------------------------------------------------------------
// BERTScore
// ---------------------------------------------------------------------------

using Embedding = std::vector<double>;
using TokenEmbeddings = std::vector<Embedding>;

/// Supplies one vector per token for each input text.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) = 0;
  virtual std::string label() const = 0;
};

/// Local stand-in: each token maps to a fixed pseudo-random unit vector
/// derived from its hash, so equal tokens embed identically.
class HashedTokenEmbeddings final : public EmbeddingProvider {
 public:
  explicit HashedTokenEmbeddings(std::size_t dim = 64) : dim_(dim) {}
  std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) override;
  std::string label() const override { return "hashed-token-stub"; }

 private:
  std::size_t dim_;
};

/// POST {base}/embeddings with {"model", "texts": [...]} and expects
/// {"embeddings": [[[...], ...], ...]} (one list of token vectors per text).
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}
  std::vector<TokenEmbeddings> embed(std::span<const std::string> texts) override;
  std::string label() const override { return endpoint_.url("/embeddings"); }

 private:
  HttpEndpoint endpoint_;
};

/// Greedy-matching F1 over cosine similarities of token embeddings.
double bertscore_f1(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);
/// Max F1 over references. Provider failures propagate.
double bertscore_f1(std::string_view candidate, std::span<const std::string> references, EmbeddingProvider& provider);

// ---------------------------------------------------------------------------
// Reference-free metrics
// ---------------------------------------------------------------------------

/// Repetition rate, scaled by 100. Tokens of all texts are laid end to end and
/// cut into consecutive windows of `window` tokens; the last window absorbs the
/// remainder and a short corpus is one window. N-grams never cross a text
/// boundary or a window boundary. Per window, the fraction of n-gram types that
/// occur more than once is taken for n = 1..max_n (0 when a window has no
/// n-gram of that order), combined by geometric mean, and averaged over windows.
double repetition_rate(std::span<const Tokens> corpus, int max_n = 4, std::size_t window = 1000);
double repetition_rate(std::span<const std::string> corpus, int max_n = 4, std::size_t window = 1000);

struct NoveltyScore {
  double novelty = 0.0;
  /// Per order: fraction of the generated corpus's repeated n-gram types seen
  /// in the train corpus; absent when the order has no repeated type.
  std::vector<std::optional<double>> overlap;
};

/// 1 - overlap, averaged over the orders that have at least one repeated n-gram type.
NoveltyScore novelty(std::span<const Tokens> generated, std::span<const Tokens> train, int max_n = 4);
NoveltyScore novelty(std::span<const std::string> generated, std::span<const std::string> train, int max_n = 4);

// ---------------------------------------------------------------------------
// Per-system report
// ---------------------------------------------------------------------------

enum class MetricLevel { kCorpus, kSentence };

struct MetricOptions {
  bool bleu = true;
  bool rouge_l = true;
  bool bertscore = false;
  bool repetition_rate = true;
  bool novelty = true;
  MetricLevel level = MetricLevel::kCorpus;
  int max_n = 4;
  std::size_t rr_window = 1000;
};

/// One generated CN together with the references of its HS.
struct ScoredItem {
  std::string text;
  std::vector<std::string> references;
};

struct MetricReport {
  std::string system_id;
  std::optional<double> bleu;
  std::optional<double> rouge_l_f;
  std::optional<double> bertscore_f1;
  std::optional<double> repetition_rate;
  std::optional<double> novelty;
  std::vector<std::optional<double>> novelty_overlap;
  double mean_generation_length = 0.0;
  std::size_t items = 0;
  std::size_t degenerate_items = 0;
  std::size_t bertscore_failures = 0;
  std::string level;
  std::string tokenizer;

  json to_json() const;
};

/// BERTScore needs a provider when enabled; novelty needs a non-empty train corpus.
MetricReport compute_metric_report(const std::string& system_id, std::span<const ScoredItem> items,
                                   std::span<const std::string> train_corpus, const MetricOptions& options,
                                   EmbeddingProvider* provider = nullptr);

}  // namespace cneval
