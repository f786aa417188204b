#include "cneval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "cneval/error.hpp"
#include "cneval/rng.hpp"
#include "cneval/text.hpp"

namespace cneval {

namespace {

using NgramCounts = std::unordered_map<std::string, int>;

std::string ngram_key(const Tokens& t, std::size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key.push_back('\x1f');
    key += t[start + static_cast<std::size_t>(k)];
  }
  return key;
}

NgramCounts count_ngrams(const Tokens& t, int n) {
  NgramCounts counts;
  if (t.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= t.size(); ++i) ++counts[ngram_key(t, i, n)];
  return counts;
}

std::vector<Tokens> tokenize_all(std::span<const std::string> texts) {
  std::vector<Tokens> out;
  out.reserve(texts.size());
  for (const auto& s : texts) out.push_back(text::tokenize(s));
  return out;
}

std::size_t closest_ref_length(std::size_t c, std::span<const Tokens> refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = r.size() > c ? r.size() - c : c - r.size();
    const auto bd = best > c ? best - c : c - best;
    if (d < bd || (d == bd && r.size() < best)) best = r.size();
  }
  return best;
}

struct ClippedCounts {
  std::size_t matches = 0;
  std::size_t total = 0;
};

ClippedCounts clipped(const Tokens& cand, std::span<const Tokens> refs, int n) {
  ClippedCounts out;
  const auto c = count_ngrams(cand, n);
  if (c.empty()) return out;
  NgramCounts max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, k] : count_ngrams(r, n)) {
      auto& m = max_ref[g];
      m = std::max(m, k);
    }
  }
  for (const auto& [g, k] : c) {
    out.total += static_cast<std::size_t>(k);
    if (auto it = max_ref.find(g); it != max_ref.end()) out.matches += static_cast<std::size_t>(std::min(k, it->second));
  }
  return out;
}

double brevity_penalty(double c, double r) {
  if (c <= 0) return 0.0;
  return c > r ? 1.0 : std::exp(1.0 - r / c);
}

}  // namespace

BleuScore sentence_bleu(const Tokens& candidate, std::span<const Tokens> references, int max_n) {
  if (references.empty()) throw ValidationError("BLEU needs at least one reference");
  if (max_n < 1) throw ValidationError("BLEU max_n must be at least 1");
  BleuScore out;
  if (candidate.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto c = candidate.size();
  const auto r = closest_ref_length(c, references);
  out.brevity_penalty = brevity_penalty(static_cast<double>(c), static_cast<double>(r));
  const int orders = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(max_n), c));
  double log_sum = 0.0;
  for (int n = 1; n <= orders; ++n) {
    const auto cc = clipped(candidate, references, n);
    const double p = static_cast<double>(cc.matches) / static_cast<double>(cc.total);
    out.precisions.push_back(p);
    if (n == 1 && cc.matches == 0) {
      out.score = 0.0;
      return out;
    }
    log_sum += std::log(std::max(p, kBleuEpsilon));
  }
  out.score = out.brevity_penalty * std::exp(log_sum / orders);
  return out;
}

BleuScore sentence_bleu(std::string_view candidate, std::span<const std::string> references, int max_n) {
  const auto refs = tokenize_all(references);
  return sentence_bleu(text::tokenize(candidate), refs, max_n);
}

BleuScore corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references, int max_n) {
  if (candidates.size() != references.size()) throw ValidationError("corpus BLEU: candidate/reference count mismatch");
  if (max_n < 1) throw ValidationError("BLEU max_n must be at least 1");
  std::vector<ClippedCounts> pooled(static_cast<std::size_t>(max_n));
  std::size_t c_len = 0;
  std::size_t r_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw ValidationError("BLEU needs at least one reference per segment");
    if (candidates[i].empty()) continue;
    c_len += candidates[i].size();
    r_len += closest_ref_length(candidates[i].size(), references[i]);
    for (int n = 1; n <= max_n; ++n) {
      const auto cc = clipped(candidates[i], references[i], n);
      pooled[static_cast<std::size_t>(n - 1)].matches += cc.matches;
      pooled[static_cast<std::size_t>(n - 1)].total += cc.total;
    }
  }
  BleuScore out;
  if (c_len == 0) {
    out.degenerate = true;
    return out;
  }
  out.brevity_penalty = brevity_penalty(static_cast<double>(c_len), static_cast<double>(r_len));
  double log_sum = 0.0;
  int used = 0;
  for (const auto& p : pooled) {
    if (p.total == 0) break;
    const double prec = static_cast<double>(p.matches) / static_cast<double>(p.total);
    out.precisions.push_back(prec);
    if (p.matches == 0) {
      out.score = 0.0;
      return out;
    }
    log_sum += std::log(prec);
    ++used;
  }
  out.score = out.brevity_penalty * std::exp(log_sum / used);
  return out;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeL rouge_l(const Tokens& candidate, std::span<const Tokens> references) {
  if (references.empty()) throw ValidationError("ROUGE-L needs at least one reference");
  RougeL best;
  if (candidate.empty()) {
    best.degenerate = true;
    return best;
  }
  bool first = true;
  for (const auto& ref : references) {
    const auto l = static_cast<double>(lcs_length(candidate, ref));
    RougeL s;
    s.precision = l / static_cast<double>(candidate.size());
    s.recall = ref.empty() ? 0.0 : l / static_cast<double>(ref.size());
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    // Lexicographic (F, R, P) keeps the choice independent of reference order.
    if (first || std::tie(s.f1, s.recall, s.precision) > std::tie(best.f1, best.recall, best.precision)) best = s;
    first = false;
  }
  return best;
}

RougeL rouge_l(std::string_view candidate, std::span<const std::string> references) {
  const auto refs = tokenize_all(references);
  return rouge_l(text::tokenize(candidate), refs);
}

std::vector<TokenEmbeddings> HashedTokenEmbeddings::embed(std::span<const std::string> texts) {
  std::vector<TokenEmbeddings> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    TokenEmbeddings rows;
    for (const auto& tok : text::tokenize(t)) {
      Rng rng(fnv1a64(tok));
      Embedding v(dim_);
      double norm = 0.0;
      for (auto& x : v) {
        x = static_cast<double>(rng.next() >> 11) / 9007199254740992.0 * 2.0 - 1.0;
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
      rows.push_back(std::move(v));
    }
    out.push_back(std::move(rows));
  }
  return out;
}

std::vector<TokenEmbeddings> HttpEmbeddingProvider::embed(std::span<const std::string> texts) {
  json body{{"model", endpoint_.config().model}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto res = endpoint_.post_json("/embeddings", body);
  try {
    auto out = res.at("embeddings").get<std::vector<TokenEmbeddings>>();
    if (out.size() != texts.size()) throw TransportError("embedding provider returned the wrong number of texts");
    return out;
  } catch (const json::exception&) {
    throw TransportError("malformed embedding response from " + label());
  }
}

double bertscore_f1(const TokenEmbeddings& candidate, const TokenEmbeddings& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  auto normalized = [](const TokenEmbeddings& m) {
    TokenEmbeddings out = m;
    for (auto& v : out) {
      double n = 0.0;
      for (double x : v) n += x * x;
      n = std::sqrt(n);
      if (n > 0) {
        for (auto& x : v) x /= n;
      }
    }
    return out;
  };
  const auto c = normalized(candidate);
  const auto r = normalized(reference);
  std::vector<std::vector<double>> sim(c.size(), std::vector<double>(r.size(), 0.0));
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (c[i].size() != r[j].size()) throw ValidationError("embedding dimensions differ");
      sim[i][j] = std::inner_product(c[i].begin(), c[i].end(), r[j].begin(), 0.0);
    }
  }
  double p = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
  p /= static_cast<double>(c.size());
  double rec = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    double m = sim[0][j];
    for (std::size_t i = 1; i < c.size(); ++i) m = std::max(m, sim[i][j]);
    rec += m;
  }
  rec /= static_cast<double>(r.size());
  return (p + rec) != 0.0 ? 2 * p * rec / (p + rec) : 0.0;
}

double bertscore_f1(std::string_view candidate, std::span<const std::string> references, EmbeddingProvider& provider) {
  if (references.empty()) throw ValidationError("BERTScore needs at least one reference");
  std::vector<std::string> batch;
  batch.reserve(references.size() + 1);
  batch.emplace_back(candidate);
  batch.insert(batch.end(), references.begin(), references.end());
  const auto emb = provider.embed(batch);
  double best = -1.0;
  for (std::size_t k = 1; k < emb.size(); ++k) best = std::max(best, bertscore_f1(emb[0], emb[k]));
  return best;
}

double repetition_rate(std::span<const Tokens> corpus, int max_n, std::size_t window) {
  if (corpus.empty()) throw ValidationError("repetition rate needs a non-empty corpus");
  if (max_n < 1 || window == 0) throw ValidationError("repetition rate needs max_n >= 1 and window >= 1");
  std::vector<const std::string*> flat;
  std::vector<std::size_t> owner;
  for (std::size_t t = 0; t < corpus.size(); ++t) {
    for (const auto& tok : corpus[t]) {
      flat.push_back(&tok);
      owner.push_back(t);
    }
  }
  const std::size_t total = flat.size();
  if (total < static_cast<std::size_t>(max_n)) {
    throw UndefinedMetricError("repetition rate undefined: corpus has fewer than max_n tokens");
  }
  const std::size_t n_windows = std::max<std::size_t>(1, total / window);
  double acc = 0.0;
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t begin = w * window;
    const std::size_t end = (w + 1 == n_windows) ? total : begin + window;
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= max_n && !zero; ++n) {
      NgramCounts counts;
      for (std::size_t p = begin; p + static_cast<std::size_t>(n) <= end; ++p) {
        if (owner[p] != owner[p + static_cast<std::size_t>(n) - 1]) continue;
        std::string key;
        for (int k = 0; k < n; ++k) {
          if (k) key.push_back('\x1f');
          key += *flat[p + static_cast<std::size_t>(k)];
        }
        ++counts[key];
      }
      std::size_t repeated = 0;
      for (const auto& kv : counts) repeated += kv.second > 1 ? 1 : 0;
      if (counts.empty() || repeated == 0) {
        zero = true;
      } else {
        log_sum += std::log(static_cast<double>(repeated) / static_cast<double>(counts.size()));
      }
    }
    acc += zero ? 0.0 : std::exp(log_sum / max_n);
  }
  return 100.0 * acc / static_cast<double>(n_windows);
}

double repetition_rate(std::span<const std::string> corpus, int max_n, std::size_t window) {
  const auto toks = tokenize_all(corpus);
  return repetition_rate(std::span<const Tokens>(toks), max_n, window);
}

NoveltyScore novelty(std::span<const Tokens> generated, std::span<const Tokens> train, int max_n) {
  if (generated.empty() || train.empty()) throw ValidationError("novelty needs non-empty generated and train corpora");
  if (max_n < 1) throw ValidationError("novelty max_n must be at least 1");
  NoveltyScore out;
  double sum = 0.0;
  int defined = 0;
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts gen;
    for (const auto& t : generated) {
      for (const auto& [g, k] : count_ngrams(t, n)) gen[g] += k;
    }
    std::unordered_set<std::string> seen;
    for (const auto& t : train) {
      for (const auto& kv : count_ngrams(t, n)) seen.insert(kv.first);
    }
    std::size_t repeated = 0;
    std::size_t in_train = 0;
    for (const auto& [g, k] : gen) {
      if (k < 2) continue;
      ++repeated;
      if (seen.count(g)) ++in_train;
    }
    if (repeated == 0) {
      out.overlap.push_back(std::nullopt);
      continue;
    }
    const double ov = static_cast<double>(in_train) / static_cast<double>(repeated);
    out.overlap.push_back(ov);
    sum += 1.0 - ov;
    ++defined;
  }
  if (defined == 0) throw UndefinedMetricError("novelty undefined: generated corpus has no repeated n-gram");
  out.novelty = sum / defined;
  return out;
}

NoveltyScore novelty(std::span<const std::string> generated, std::span<const std::string> train, int max_n) {
  const auto g = tokenize_all(generated);
  const auto t = tokenize_all(train);
  return novelty(std::span<const Tokens>(g), std::span<const Tokens>(t), max_n);
}

json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json overlap = json::array();
  for (const auto& o : novelty_overlap) overlap.push_back(opt(o));
  json j{{"system_id", system_id},
         {"bleu", opt(bleu)},
         {"rouge_l_f", opt(rouge_l_f)},
         {"repetition_rate", opt(repetition_rate)},
         {"novelty", opt(novelty)},
         {"novelty_overlap", overlap},
         {"mean_generation_length", mean_generation_length},
         {"items", items},
         {"degenerate_items", degenerate_items},
         {"level", level},
         {"tokenizer", tokenizer}};
  if (bertscore_f1) j["bertscore_f1"] = *bertscore_f1;
  if (bertscore_failures) j["bertscore_failures"] = bertscore_failures;
  return j;
}

MetricReport compute_metric_report(const std::string& system_id, std::span<const ScoredItem> items,
                                   std::span<const std::string> train_corpus, const MetricOptions& options,
                                   EmbeddingProvider* provider) {
  if (items.empty()) throw ValidationError("no candidates for system '" + system_id + "'");
  MetricReport rep;
  rep.system_id = system_id;
  rep.items = items.size();
  rep.level = options.level == MetricLevel::kCorpus ? "corpus" : "sentence";
  rep.tokenizer = std::string(text::Tokenizer::kPolicyId);

  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  std::vector<std::string> texts;
  double words = 0.0;
  for (const auto& it : items) {
    cands.push_back(text::tokenize(it.text));
    refs.push_back(tokenize_all(it.references));
    texts.push_back(it.text);
    words += static_cast<double>(text::split_whitespace(it.text).size());
    if (cands.back().empty()) ++rep.degenerate_items;
  }
  rep.mean_generation_length = words / static_cast<double>(items.size());

  if (options.bleu) {
    if (options.level == MetricLevel::kCorpus) {
      rep.bleu = corpus_bleu(cands, refs, options.max_n).score;
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < cands.size(); ++i) s += sentence_bleu(cands[i], refs[i], options.max_n).score;
      rep.bleu = s / static_cast<double>(cands.size());
    }
  }
  if (options.rouge_l) {
    double s = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) s += rouge_l(cands[i], refs[i]).f1;
    rep.rouge_l_f = s / static_cast<double>(cands.size());
  }
  if (options.bertscore && provider) {
    double s = 0.0;
    std::size_t ok = 0;
    for (const auto& it : items) {
      try {
        s += bertscore_f1(it.text, it.references, *provider);
        ++ok;
      } catch (const Error&) {
        ++rep.bertscore_failures;
      }
    }
    if (ok) rep.bertscore_f1 = s / static_cast<double>(ok);
  }
  if (options.repetition_rate) {
    try {
      rep.repetition_rate = repetition_rate(std::span<const Tokens>(cands), options.max_n, options.rr_window);
    } catch (const UndefinedMetricError&) {
    }
  }
  if (options.novelty && !train_corpus.empty()) {
    const auto train = tokenize_all(train_corpus);
    try {
      auto nv = novelty(std::span<const Tokens>(cands), std::span<const Tokens>(train), options.max_n);
      rep.novelty = nv.novelty;
      rep.novelty_overlap = std::move(nv.overlap);
    } catch (const UndefinedMetricError&) {
    }
  }
  return rep;
}

}  // namespace cneval
