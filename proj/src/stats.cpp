#include "cneval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "cneval/error.hpp"

namespace cneval {

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < 3) throw ValidationError("correlation needs at least 3 paired values");
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("correlation input is not finite");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw ValidationError("correlation input is not finite");
  }
}

// Accumulates in extended precision so exactly linear inputs round to +-1.
double pearson_r(std::span<const double> x, std::span<const double> y) {
  using Wide = long double;
  const Wide n = static_cast<Wide>(x.size());
  const Wide mx = std::accumulate(x.begin(), x.end(), Wide{0}) / n;
  const Wide my = std::accumulate(y.begin(), y.end(), Wide{0}) / n;
  Wide sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw UndefinedStatisticError("correlation undefined: an input has zero variance");
  return std::clamp(static_cast<double>(sxy / std::sqrt(sxx * syy)), -1.0, 1.0);
}

std::pair<std::vector<double>, std::vector<double>> align(const std::map<std::string, double>& x,
                                                          const std::map<std::string, double>& y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs cover different systems");
  std::vector<double> a, b;
  for (const auto& [k, v] : x) {
    auto it = y.find(k);
    if (it == y.end()) throw ValidationError("system '" + k + "' missing from the second score map");
    a.push_back(v);
    b.push_back(it->second);
  }
  return {a, b};
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_r(rx, ry);
}

double spearman(const std::map<std::string, double>& x, const std::map<std::string, double>& y) {
  const auto [a, b] = align(x, y);
  return spearman(std::span<const double>(a), std::span<const double>(b));
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  PearsonResult out;
  out.n = x.size();
  out.r = pearson_r(x, y);
  const double dof = static_cast<double>(out.n) - 2.0;
  const double denom = 1.0 - out.r * out.r;
  out.p_value = denom <= 0.0 ? 0.0 : student_t_two_sided(out.r * std::sqrt(dof / denom), dof);
  return out;
}

PearsonResult pearson(const std::map<std::string, double>& x, const std::map<std::string, double>& y) {
  const auto [a, b] = align(x, y);
  return pearson(std::span<const double>(a), std::span<const double>(b));
}

json KappaReport::to_json() const {
  return json{{"annotator_a", annotator_a}, {"annotator_b", annotator_b}, {"group", group},
              {"kappa", kappa},             {"observed", observed},       {"expected", expected},
              {"categories", categories},   {"contingency", contingency}, {"items", items}};
}

KappaReport cohens_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b) {
  if (labels_a.size() != labels_b.size()) throw ValidationError("kappa inputs differ in length");
  if (labels_a.empty()) throw ValidationError("kappa needs at least one shared item");
  KappaReport rep;
  rep.items = labels_a.size();
  std::vector<std::string> cats(labels_a.begin(), labels_a.end());
  cats.insert(cats.end(), labels_b.begin(), labels_b.end());
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  rep.categories = cats;
  auto index = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(cats.begin(), cats.end(), s) - cats.begin());
  };
  rep.contingency.assign(cats.size(), std::vector<std::size_t>(cats.size(), 0));
  for (std::size_t i = 0; i < labels_a.size(); ++i) ++rep.contingency[index(labels_a[i])][index(labels_b[i])];
  const double n = static_cast<double>(rep.items);
  double agree = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < cats.size(); ++i) {
    agree += static_cast<double>(rep.contingency[i][i]);
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < cats.size(); ++j) {
      row += static_cast<double>(rep.contingency[i][j]);
      col += static_cast<double>(rep.contingency[j][i]);
    }
    expected += (row / n) * (col / n);
  }
  rep.observed = agree / n;
  rep.expected = expected;
  if (std::fabs(1.0 - expected) < 1e-12) {
    throw UndefinedStatisticError("kappa undefined: chance agreement is 1 (both annotators constant and equal)");
  }
  rep.kappa = (rep.observed - rep.expected) / (1.0 - rep.expected);
  return rep;
}

std::string majority_vote(std::span<const std::string> choices) {
  if (choices.empty()) throw ValidationError("majority vote needs at least one choice");
  std::map<std::string, int> counts;
  for (const auto& c : choices) ++counts[c];
  int best = 0;
  std::string winner;
  bool tied = false;
  for (const auto& [label, n] : counts) {
    if (n > best) {
      best = n;
      winner = label;
      tied = false;
    } else if (n == best) {
      tied = true;
    }
  }
  return tied ? std::string(kTieLabel) : winner;
}

json CorrelationReport::to_json() const {
  json matrix = json::array();
  for (const auto& row : spearman) {
    json r = json::array();
    for (const auto& c : row) r.push_back(c ? json(*c) : json(nullptr));
    matrix.push_back(r);
  }
  json pairs = json::array();
  for (const auto& [k, v] : pearson) {
    json p{{"a", k.first}, {"b", k.second}};
    if (v) {
      p["r"] = v->r;
      p["p_value"] = v->p_value;
      p["n"] = v->n;
    } else {
      p["r"] = nullptr;
      p["p_value"] = nullptr;
    }
    pairs.push_back(p);
  }
  return json{{"labels", labels}, {"spearman", matrix}, {"pearson", pairs}};
}

std::string CorrelationReport::to_csv() const {
  std::ostringstream out;
  out << "method";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i];
    for (const auto& c : spearman[i]) {
      out << ',';
      if (c) {
        std::snprintf(buf, sizeof buf, "%.4f", *c);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string CorrelationReport::to_heatmap() const {
  // Shade by |rho|, sign printed with the value.
  static constexpr const char* kShades[] = {" ", ".", ":", "+", "#"};
  std::size_t width = 6;
  for (const auto& l : labels) width = std::max(width, l.size());
  std::ostringstream out;
  char buf[64];
  out << std::string(width, ' ');
  for (const auto& l : labels) {
    std::snprintf(buf, sizeof buf, " %9.9s", l.c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i] << std::string(width - labels[i].size(), ' ');
    for (const auto& c : spearman[i]) {
      if (!c) {
        out << "        --";
        continue;
      }
      const int shade = std::min(4, static_cast<int>(std::fabs(*c) * 5.0));
      std::snprintf(buf, sizeof buf, " %s %+6.3f%s", kShades[shade], *c, kShades[shade]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

CorrelationReport correlation_matrix(const std::vector<std::pair<std::string, std::map<std::string, double>>>& methods) {
  if (methods.size() < 2) throw ValidationError("correlation matrix needs at least 2 methods");
  std::vector<const std::pair<std::string, std::map<std::string, double>>*> order;
  const std::pair<std::string, std::map<std::string, double>>* human = nullptr;
  for (const auto& m : methods) {
    if (m.first == kHumanLabel) {
      human = &m;
    } else {
      order.push_back(&m);
    }
  }
  if (human) order.push_back(human);
  CorrelationReport rep;
  for (const auto* m : order) rep.labels.push_back(m->first);
  const auto n = order.size();
  rep.spearman.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      std::optional<double> rho;
      try {
        rho = spearman(order[i]->second, order[j]->second);
        if (i == j) rho = 1.0;
      } catch (const UndefinedStatisticError&) {
      }
      rep.spearman[i][j] = rho;
      rep.spearman[j][i] = rho;
      if (i != j) {
        std::optional<PearsonResult> p;
        try {
          p = pearson(order[i]->second, order[j]->second);
        } catch (const UndefinedStatisticError&) {
        }
        rep.pearson[{order[i]->first, order[j]->first}] = p;
      }
    }
  }
  return rep;
}

}  // namespace cneval
