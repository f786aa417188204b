#include "cneval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cneval/error.hpp"
#include "cneval/rng.hpp"
#include "cneval/text.hpp"

namespace cneval {

using json = nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "test";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val" || s == "dev") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

DataFormat parse_data_format(std::string_view s) {
  if (s == "csv") return DataFormat::kCsv;
  if (s == "jsonl") return DataFormat::kJsonl;
  throw ConfigError("unknown dataset format '" + std::string(s) + "' (expected csv or jsonl)");
}

const HsInstance* Dataset::find(std::string_view hs_id) const {
  auto it = index_.find(std::string(hs_id));
  return it == index_.end() ? nullptr : &instances[it->second];
}

std::vector<const ReferenceCn*> Dataset::references_for(std::string_view hs_id) const {
  std::vector<const ReferenceCn*> out;
  for (const auto& r : references) {
    if (r.hs_id == hs_id) out.push_back(&r);
  }
  return out;
}

std::vector<const HsInstance*> Dataset::instances_in(Split split) const {
  std::vector<const HsInstance*> out;
  for (const auto& hs : instances) {
    if (hs.split == split) out.push_back(&hs);
  }
  return out;
}

namespace {

std::string where(std::size_t line) {
  return line > 0 ? " at line " + std::to_string(line) : std::string();
}

}  // namespace

void Dataset::add_row(const HsInstance& hs, std::string cn_text, std::size_t line) {
  if (hs.id.empty()) throw SchemaError("empty field 'hs_id'" + where(line));
  if (text::trim(hs.text).empty()) throw SchemaError("empty field 'hs_text'" + where(line));
  if (text::trim(cn_text).empty()) throw SchemaError("empty field 'cn_text'" + where(line));

  auto [it, inserted] = index_.emplace(hs.id, instances.size());
  const std::size_t idx = it->second;
  if (inserted) {
    instances.push_back(hs);
  } else {
    const auto& prev = instances[idx];
    if (prev.text != hs.text || prev.split != hs.split || prev.target != hs.target) {
      throw SchemaError("hs_id '" + hs.id + "' repeated with different hs_text/split/target" + where(line));
    }
  }
  references.push_back(ReferenceCn{hs.id, std::move(cn_text)});
  pairs.push_back(Pair{idx, references.size() - 1});
}

std::vector<CsvRow> parse_csv(std::string_view content) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // CRLF handled at the '\n'
    } else if (c == '\n') {
      end_row();
      ++line;
      row.line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw SchemaError("unterminated quoted field starting at line " + std::to_string(row.line));
  if (field_started || !row.fields.empty()) end_row();
  return rows;
}

std::string csv_escape(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

namespace {

Dataset parse_csv_dataset(std::string_view content, std::string tag) {
  auto rows = parse_csv(content);
  if (rows.empty()) throw EmptyDatasetError("dataset is empty");

  const auto& header = rows.front().fields;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = text::trim(header[i]);
    if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name = name.substr(3);
    col[name] = i;
  }
  for (const char* required : {"hs_id", "hs_text", "cn_text", "split"}) {
    if (!col.count(required)) throw SchemaError(std::string("missing column '") + required + "' at line 1");
  }
  const bool has_target = col.count("target") > 0;

  Dataset ds;
  ds.tag = tag;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    auto get = [&](const char* name) -> std::string {
      const auto i = col.at(name);
      if (i >= f.size()) throw SchemaError(std::string("missing field '") + name + "'" + where(rows[r].line));
      return f[i];
    };
    HsInstance hs;
    hs.id = get("hs_id");
    hs.text = get("hs_text");
    hs.dataset = tag;
    try {
      hs.split = parse_split(text::trim(get("split")));
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(e.what()) + " in field 'split'" + where(rows[r].line));
    }
    if (has_target && col.at("target") < f.size() && !f[col.at("target")].empty()) {
      hs.target = f[col.at("target")];
    }
    ds.add_row(hs, get("cn_text"), rows[r].line);
  }
  if (ds.empty()) throw EmptyDatasetError("dataset has a header but no rows");
  return ds;
}

Dataset parse_jsonl_dataset(std::string_view content, std::string tag) {
  Dataset ds;
  ds.tag = tag;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (text::trim(line).empty()) {
      if (nl == content.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("malformed JSON" + where(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw SchemaError("expected a JSON object" + where(line_no));
    auto get = [&](const char* name) -> std::string {
      if (!obj.contains(name) || !obj[name].is_string()) {
        throw SchemaError(std::string("missing field '") + name + "'" + where(line_no));
      }
      return obj[name].get<std::string>();
    };
    HsInstance hs;
    hs.id = get("hs_id");
    hs.text = get("hs_text");
    hs.dataset = tag;
    try {
      hs.split = parse_split(get("split"));
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(e.what()) + " in field 'split'" + where(line_no));
    }
    if (obj.contains("target") && obj["target"].is_string() && !obj["target"].get<std::string>().empty()) {
      hs.target = obj["target"].get<std::string>();
    }
    ds.add_row(hs, get("cn_text"), line_no);
    if (nl == content.size()) break;
  }
  if (ds.empty()) throw EmptyDatasetError("dataset is empty");
  return ds;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset parse_dataset(std::string_view content, DataFormat format, std::string tag) {
  return format == DataFormat::kCsv ? parse_csv_dataset(content, std::move(tag))
                                    : parse_jsonl_dataset(content, std::move(tag));
}

Dataset load_dataset(const std::filesystem::path& path, DataFormat format, std::string tag) {
  return parse_dataset(read_file(path), format, std::move(tag));
}

std::string serialize_dataset(const Dataset& dataset, DataFormat format) {
  std::string out;
  if (format == DataFormat::kCsv) out = "hs_id,hs_text,cn_text,target,split\n";
  for (const auto& p : dataset.pairs) {
    const auto& hs = dataset.instances[p.hs];
    const auto& ref = dataset.references[p.ref];
    if (format == DataFormat::kCsv) {
      out += csv_escape(hs.id) + ',' + csv_escape(hs.text) + ',' + csv_escape(ref.text) + ',' +
             csv_escape(hs.target.value_or("")) + ',' + std::string(to_string(hs.split)) + '\n';
    } else {
      json obj = {{"hs_id", hs.id},
                  {"hs_text", hs.text},
                  {"cn_text", ref.text},
                  {"target", hs.target.value_or("")},
                  {"split", to_string(hs.split)}};
      out += obj.dump() + '\n';
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path, DataFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kData, "cannot write '" + path.string() + "'");
  out << serialize_dataset(dataset, format);
}

CorpusStats corpus_stats(const Dataset& dataset) {
  if (dataset.empty()) throw EmptyDatasetError("corpus_stats on an empty dataset");
  std::unordered_set<std::string> hs_texts;
  std::unordered_set<std::string> cn_texts;
  std::size_t words = 0;
  for (const auto& p : dataset.pairs) {
    hs_texts.insert(dataset.instances[p.hs].text);
    const auto& cn = dataset.references[p.ref].text;
    cn_texts.insert(cn);
    words += text::split_whitespace(cn).size();
  }
  CorpusStats s;
  s.pair_count = dataset.pairs.size();
  s.unique_hs = hs_texts.size();
  s.unique_cn = cn_texts.size();
  s.avg_cn_per_hs = static_cast<double>(s.pair_count) / static_cast<double>(s.unique_hs);
  s.avg_words_per_cn = static_cast<double>(words) / static_cast<double>(s.pair_count);
  return s;
}

namespace {

// Rebuilds a dataset from a subset of its pair indices, preserving order.
Dataset select_pairs(const Dataset& src, const std::vector<std::size_t>& keep) {
  Dataset out;
  out.tag = src.tag;
  for (std::size_t k : keep) {
    const auto& p = src.pairs[k];
    out.add_row(src.instances[p.hs], src.references[p.ref].text);
  }
  return out;
}

}  // namespace

Dataset dedup(const Dataset& dataset, std::uint64_t seed) {
  // Groups in order of first appearance of each HS text.
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const auto& t = dataset.instances[dataset.pairs[i].hs].text;
    auto [it, inserted] = group_of.emplace(t, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> keep;
  keep.reserve(groups.size());
  for (const auto& g : groups) {
    keep.push_back(g.size() == 1 ? g.front() : g[rng.below(g.size())]);
  }
  std::sort(keep.begin(), keep.end());
  return select_pairs(dataset, keep);
}

Dataset assign_splits(const Dataset& dataset, double train_fraction, double validation_fraction,
                      std::uint64_t seed) {
  if (train_fraction < 0 || validation_fraction < 0 || train_fraction + validation_fraction > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> order(dataset.instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n = order.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n))));
  std::vector<Split> split_of(n, Split::kTest);
  for (std::size_t k = 0; k < n; ++k) {
    split_of[order[k]] = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kValidation : Split::kTest);
  }
  Dataset out = dataset;
  for (std::size_t i = 0; i < n; ++i) out.instances[i].split = split_of[i];
  return out;
}

}  // namespace cneval
