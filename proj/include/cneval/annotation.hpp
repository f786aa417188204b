#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cneval/arena.hpp"
#include "cneval/stats.hpp"

namespace cneval {

class RunStore;
using json = nlohmann::json;

/// A task that is not in the caller's queue.
class TaskNotAssignedError : public ValidationError {
 public:
  explicit TaskNotAssignedError(const std::string& what) : ValidationError(what) {}
};

struct PlanItem {
  std::string id;
  std::string stratum;  // dataset tag, may be empty
};

struct AssignmentPlan {
  std::vector<std::string> annotators;
  std::vector<std::string> shared;
  /// annotator -> tournaments only that annotator sees
  std::map<std::string, std::vector<std::string>> partition;
  /// annotator -> full work order (shared plus own partition), shuffled
  std::map<std::string, std::vector<std::string>> queues;
  std::uint64_t seed = 0;
  double shared_fraction = 0.0;

  bool is_shared(const std::string& id) const;
  json to_json() const;
};

/// |shared| = round(fraction * total), spread over strata by largest remainder
/// in proportion to stratum size; the rest is dealt round-robin after a
/// seeded shuffle, so partition sizes differ by at most one.
AssignmentPlan plan_assignments(std::span<const PlanItem> items, const std::vector<std::string>& annotators,
                                double shared_fraction, std::uint64_t seed);

inline constexpr std::string_view kFeatureNames[] = {"relatedness", "specificity",   "richness",
                                                     "coherence",   "grammaticality", "overall"};

/// Five criteria on 0..5, overall on 1..5.
struct FeatureRating {
  std::string hs_id;
  std::string system_id;
  std::string annotator_id;
  std::map<std::string, int> values;

  /// Throws ValidationError on a missing or out-of-scale value.
  static void check_values(const json& values);
  json to_json() const;
  static FeatureRating from_json(const json& j);
};

struct AnnotationRecord {
  std::string tournament_id;
  std::string annotator_id;
  Outcome choice = Outcome::kTie;  // canonical side
  std::string timestamp;
  std::string guidelines_version;
};

std::vector<AnnotationRecord> annotation_records(const std::vector<json>& latest);

/// Majority vote over annotators on shared tournaments, the single choice
/// elsewhere, then arena scoring. Without `partial`, every tournament must be
/// fully answered.
ScoreBoard human_scoreboard(const std::vector<Tournament>& tournaments, const AssignmentPlan& plan,
                            const std::vector<AnnotationRecord>& records, bool partial);

struct IaaReport {
  std::vector<KappaReport> pairs;
  /// group -> mean kappa across annotator pairs; "all" covers every stratum.
  std::map<std::string, double> means;
  std::vector<std::string> undefined;  // pairs whose kappa could not be computed
  json to_json() const;
};

/// Cohen's kappa for each annotator pair over the shared subset only, per stratum and overall.
IaaReport iaa_report(const std::vector<Tournament>& tournaments, const AssignmentPlan& plan,
                     const std::vector<AnnotationRecord>& records);

/// system -> feature -> mean over all (hs, annotator) ratings.
std::map<std::string, std::map<std::string, double>> feature_report(const std::vector<FeatureRating>& ratings);

struct AnnotationSettings {
  std::vector<std::string> annotators;
  double shared_fraction = 0.4;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_annotators;
  std::size_t feature_hs_count = 0;
  std::string guidelines_version = "v1";
};

/// Task bookkeeping for a run. Reads the plan and candidates from the store;
/// choices and ratings go back through the store's appender. Thread-safe.
/// No payload returned to annotators carries a system identity.
class AnnotationService {
 public:
  AnnotationService(RunStore& store, AnnotationSettings settings);

  const AssignmentPlan& plan() const { return plan_; }
  bool has_annotator(const std::string& id) const;
  bool has_feature_annotator(const std::string& id) const;

  json next_task(const std::string& annotator);
  /// choice is "A", "B" or "Tie" as shown to the annotator.
  json submit_choice(const std::string& annotator, const std::string& task_id, const std::string& choice,
                     bool supersede);
  json next_feature_task(const std::string& annotator);
  json submit_feature(const std::string& annotator, const std::string& task_id, const json& values, bool supersede);

  json progress();
  json iaa();
  json human_rank(bool partial);
  json features();

 private:
  struct FeatureTask {
    std::string id;
    std::string hs_id;
    std::string hs_text;
    std::string system_id;
    std::string text;
  };

  std::vector<AnnotationRecord> records_locked();

  RunStore& store_;
  AnnotationSettings settings_;
  std::vector<Tournament> tournaments_;
  std::map<std::string, std::size_t> by_id_;
  AssignmentPlan plan_;
  std::vector<FeatureTask> feature_tasks_;
  std::map<std::string, std::size_t> feature_by_id_;
  std::map<std::string, std::vector<std::string>> feature_queues_;
  std::set<std::pair<std::string, std::string>> answered_;          // (annotator, tournament)
  std::set<std::pair<std::string, std::string>> feature_answered_;  // (annotator, feature task)
  std::mutex mu_;
};

}  // namespace cneval
