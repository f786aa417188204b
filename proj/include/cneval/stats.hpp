#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cneval {

using json = nlohmann::json;

/// 1-based ranks in ascending order of value; tied values get the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman's rho: Pearson correlation of average ranks. Needs >= 3 values.
double spearman(std::span<const double> x, std::span<const double> y);
/// Keyed form; both maps must cover the same systems.
double spearman(const std::map<std::string, double>& x, const std::map<std::string, double>& y);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 degrees of freedom
  std::size_t n = 0;
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);
PearsonResult pearson(const std::map<std::string, double>& x, const std::map<std::string, double>& y);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided tail probability P(|T| >= |t|) for Student's t.
double student_t_two_sided(double t, double dof);

struct KappaReport {
  std::string annotator_a;
  std::string annotator_b;
  std::string group;  // e.g. dataset tag; empty for an ungrouped report
  double kappa = 0.0;
  double observed = 0.0;
  double expected = 0.0;
  std::vector<std::string> categories;
  /// contingency[i][j]: items labelled categories[i] by a and categories[j] by b.
  std::vector<std::vector<std::size_t>> contingency;
  std::size_t items = 0;

  json to_json() const;
};

/// Cohen's kappa over paired nominal labels.
KappaReport cohens_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b);

inline constexpr std::string_view kTieLabel = "Tie";

/// Strict plurality wins; any tie in the top count gives "Tie".
std::string majority_vote(std::span<const std::string> choices);

struct CorrelationReport {
  std::vector<std::string> labels;
  /// Absent cells are correlations undefined for that pair.
  std::vector<std::vector<std::optional<double>>> spearman;
  std::map<std::pair<std::string, std::string>, std::optional<PearsonResult>> pearson;

  json to_json() const;
  std::string to_csv() const;
  /// Fixed-width text rendering with a shade glyph per cell.
  std::string to_heatmap() const;
};

inline constexpr std::string_view kHumanLabel = "Human";

/// Pairwise Spearman (and Pearson) over methods scoring the same systems. The
/// method named "Human" is placed last; other methods keep their given order.
CorrelationReport correlation_matrix(const std::vector<std::pair<std::string, std::map<std::string, double>>>& methods);

}  // namespace cneval
