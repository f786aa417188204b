#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cneval {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);  // throws SchemaError

enum class DataFormat { kCsv, kJsonl };

DataFormat parse_data_format(std::string_view s);

struct HsInstance {
  std::string id;
  std::string text;
  std::optional<std::string> target;
  std::string dataset;  // CONAN, MT-CONAN, or a custom tag
  Split split = Split::kTest;
};

struct ReferenceCn {
  std::string hs_id;
  std::string text;
};

/// One loaded row: an HS instance paired with one reference CN.
struct Pair {
  std::size_t hs;   // index into Dataset::instances
  std::size_t ref;  // index into Dataset::references
};

/// A loaded HS-CN corpus. Rows are kept in file order; rows sharing an hs_id
/// share one HsInstance and contribute several references to it.
class Dataset {
 public:
  std::string tag;
  std::vector<HsInstance> instances;
  std::vector<ReferenceCn> references;
  std::vector<Pair> pairs;

  bool empty() const { return pairs.empty(); }

  const HsInstance* find(std::string_view hs_id) const;
  std::vector<const ReferenceCn*> references_for(std::string_view hs_id) const;
  std::vector<const HsInstance*> instances_in(Split split) const;

  /// Appends one row, creating the HsInstance on first sight of its id.
  /// Throws SchemaError when a repeated id disagrees on text, split, or target.
  void add_row(const HsInstance& hs, std::string cn_text, std::size_t line = 0);

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusStats {
  std::size_t pair_count = 0;
  std::size_t unique_hs = 0;
  std::size_t unique_cn = 0;
  double avg_cn_per_hs = 0.0;
  double avg_words_per_cn = 0.0;
};

/// CSV columns: hs_id, hs_text, cn_text, target, split (target optional).
/// JSONL: one object per row with the same keys.
Dataset load_dataset(const std::filesystem::path& path, DataFormat format, std::string tag = "custom");
Dataset parse_dataset(std::string_view content, DataFormat format, std::string tag = "custom");

void save_dataset(const Dataset& dataset, const std::filesystem::path& path, DataFormat format);
std::string serialize_dataset(const Dataset& dataset, DataFormat format);

/// Counts use exact string identity of HS and CN texts; word counts split on
/// Unicode whitespace.
CorpusStats corpus_stats(const Dataset& dataset);

/// Keeps one pair per distinct HS text, chosen uniformly with a seeded draw.
Dataset dedup(const Dataset& dataset, std::uint64_t seed);

/// Relabels instance splits for custom corpora that ship without them.
/// Fractions are (train, validation); the rest becomes test.
Dataset assign_splits(const Dataset& dataset, double train_fraction, double validation_fraction,
                      std::uint64_t seed);

/// RFC 4180 parser. Returns rows with the 1-based line each row starts on.
struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;
};
std::vector<CsvRow> parse_csv(std::string_view content);
std::string csv_escape(std::string_view field);

}  // namespace cneval
