#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cneval/annotation.hpp"
#include "cneval/arena.hpp"
#include "cneval/config.hpp"
#include "cneval/corpus.hpp"
#include "cneval/genclient.hpp"
#include "cneval/metrics.hpp"
#include "cneval/stats.hpp"
#include "cneval/store.hpp"

namespace cneval {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::optional<JudgeMode> judge_mode;
  bool fixed_order = false;
};

/// Applies flag overrides to both the parsed config and its snapshot document.
void apply_overrides(RunConfig& config, const CliOverrides& overrides);

/// The HS set of a run. With several datasets, ids are qualified as
/// "<dataset>:<id>" so they stay unique across corpora.
struct LoadedData {
  std::vector<Dataset> datasets;
  std::vector<HsInstance> hs_set;
  /// qualified hs id -> (dataset index, id inside that dataset)
  std::map<std::string, std::pair<std::size_t, std::string>> origin;
  std::string fingerprint;

  std::vector<const ReferenceCn*> references(const std::string& hs_id) const;
  /// Reference CN texts of every instance in the given split, across datasets.
  std::vector<std::string> cn_texts(Split split) const;
};

LoadedData load_data(const RunConfig& config);
TemplateRegistry load_templates(const RunConfig& config);

/// Opens (creating on first use) <run_root>/<run_id>. The first command
/// writes the config snapshot and the immutable manifest.
std::unique_ptr<RunStore> open_run(const RunConfig& config, const std::string& run_id, const LoadedData& data,
                                   std::ostream& log);

GenerationRun cmd_generate(const RunConfig& config, const std::string& run_id, std::ostream& log);

struct TournamentResult {
  std::size_t plan_size = 0;
  RunHealth health;
  std::optional<ScoreBoard> board;
  std::vector<RankEntry> ranking;
  std::size_t refusals = 0;
};

/// Plans and adjudicates every tournament, then writes judge_scoreboard.json.
/// Throws HealthError when the parse-failure rate exceeds the configured limit.
TournamentResult cmd_tournament(const RunConfig& config, const std::string& run_id, std::ostream& log);

std::vector<MetricReport> cmd_metrics(const RunConfig& config, const std::string& run_id, std::ostream& log);

/// Method -> system -> score for one or more runs. Tournament-based methods
/// pool points across runs; corpus metrics are averaged. Repetition rate is
/// negated so that higher is better for every method.
std::vector<std::pair<std::string, std::map<std::string, double>>> collect_methods(
    const RunConfig& config, const std::vector<std::string>& run_ids, std::ostream& log);

CorrelationReport cmd_correlate(const RunConfig& config, const std::vector<std::string>& run_ids, std::ostream& log);

/// CSV fixture: header "system,<method>,<method>,..." then one row per system.
std::vector<std::pair<std::string, std::map<std::string, double>>> load_method_fixture(
    const std::filesystem::path& path);
CorrelationReport correlate_fixture(const std::filesystem::path& path);

AnnotationSettings annotation_settings(const RunConfig& config);

/// Judge and human rankings plus metric reports of a run, as csv or json.
std::string cmd_export(const RunConfig& config, const std::string& run_id, const std::string& format);

}  // namespace cneval
