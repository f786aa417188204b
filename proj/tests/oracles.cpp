#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oracle {

namespace {

using Gram = std::vector<std::string>;

// Each token remembers which text it came from so n-grams never straddle texts.
struct Tok {
  std::size_t text;
  std::string word;
};

std::vector<std::vector<Tok>> windows_of(const std::vector<Tokens>& corpus, std::size_t window) {
  std::vector<Tok> flat;
  for (std::size_t t = 0; t < corpus.size(); ++t)
    for (const auto& w : corpus[t]) flat.push_back({t, w});
  std::size_t count = flat.size() / window;
  if (count == 0) count = 1;
  std::vector<std::vector<Tok>> out(count);
  for (std::size_t i = 0; i < flat.size(); ++i) out[std::min(i / window, count - 1)].push_back(flat[i]);
  return out;
}

std::map<Gram, int> grams_in(const std::vector<Tok>& toks, int n) {
  std::map<Gram, int> counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    bool same_text = true;
    Gram g;
    for (int k = 0; k < n; ++k) {
      if (toks[i + k].text != toks[i].text) same_text = false;
      g.push_back(toks[i + k].word);
    }
    if (same_text) counts[g]++;
  }
  return counts;
}

std::map<Gram, int> grams_in_texts(const std::vector<Tokens>& texts, int n) {
  std::map<Gram, int> counts;
  for (const auto& t : texts)
    for (std::size_t i = 0; i + n <= t.size(); ++i) counts[Gram(t.begin() + i, t.begin() + i + n)]++;
  return counts;
}

}  // namespace

std::optional<double> repetition_rate(const std::vector<Tokens>& corpus, int max_n, std::size_t window) {
  std::size_t total = 0;
  for (const auto& t : corpus) total += t.size();
  if (total < static_cast<std::size_t>(max_n)) return std::nullopt;

  const auto wins = windows_of(corpus, window);
  double sum = 0;
  for (const auto& w : wins) {
    double product = 1;
    for (int n = 1; n <= max_n; ++n) {
      const auto counts = grams_in(w, n);
      int repeated = 0;
      for (const auto& [g, c] : counts) repeated += c > 1;
      product *= counts.empty() ? 0.0 : static_cast<double>(repeated) / counts.size();
    }
    sum += std::pow(product, 1.0 / max_n);
  }
  return 100.0 * sum / wins.size();
}

std::optional<double> novelty(const std::vector<Tokens>& generated, const std::vector<Tokens>& train, int max_n) {
  double sum = 0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto gen = grams_in_texts(generated, n);
    const auto tr = grams_in_texts(train, n);
    int repeated = 0, seen = 0;
    for (const auto& [g, c] : gen) {
      if (c < 2) continue;
      ++repeated;
      if (tr.count(g)) ++seen;
    }
    if (repeated == 0) continue;
    sum += 1.0 - static_cast<double>(seen) / repeated;
    ++orders;
  }
  if (orders == 0) return std::nullopt;
  return sum / orders;
}

std::vector<Standing> standings_from_verdicts(const std::filesystem::path& verdicts_jsonl) {
  std::ifstream in(verdicts_jsonl);
  if (!in) throw std::runtime_error("cannot open " + verdicts_jsonl.string());
  std::map<std::string, nlohmann::json> latest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    latest[j.at("tournament_id").get<std::string>()] = j;
  }

  std::map<std::string, double> points;
  double total = 0;
  for (const auto& [id, v] : latest) {
    const auto a = v.at("system_a").get<std::string>();
    const auto b = v.at("system_b").get<std::string>();
    const auto o = v.at("outcome").get<std::string>();
    points[a] += o == "A" ? 1.0 : o == "Tie" ? 0.5 : 0.0;
    points[b] += o == "B" ? 1.0 : o == "Tie" ? 0.5 : 0.0;
    total += 1;
  }

  std::vector<Standing> out;
  for (const auto& [s, p] : points) out.push_back({s, p, 100.0 * p / total, 0});
  std::sort(out.begin(), out.end(), [](const Standing& x, const Standing& y) {
    return x.points != y.points ? x.points > y.points : x.system < y.system;
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    // competition ranking: one plus the number of systems strictly ahead
    int ahead = 0;
    for (const auto& o : out) ahead += o.points > out[i].points;
    out[i].rank = ahead + 1;
  }
  return out;
}

double spearman_positions(const std::vector<std::string>& order_x, const std::vector<std::string>& order_y,
                          double* sum_d2) {
  if (order_x.size() != order_y.size()) throw std::invalid_argument("orderings differ in length");
  double d2 = 0;
  for (std::size_t i = 0; i < order_x.size(); ++i) {
    const auto it = std::find(order_y.begin(), order_y.end(), order_x[i]);
    if (it == order_y.end()) throw std::invalid_argument("orderings differ in members");
    const double d = static_cast<double>(i) - static_cast<double>(it - order_y.begin());
    d2 += d * d;
  }
  if (sum_d2) *sum_d2 = d2;
  const double n = static_cast<double>(order_x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace oracle
