#include "apt/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "apt/common.hpp"

namespace apt {

LabelSet::LabelSet(std::vector<std::string> labels) {
  for (auto& raw : labels) {
    std::string label = trim(raw);
    if (label.empty()) throw DataError("label set contains an empty label");
    for (const auto& existing : labels_) {
      if (iequals(existing, label)) throw DataError("duplicate label '" + label + "' in label set");
    }
    labels_.push_back(std::move(label));
  }
  if (labels_.size() < 2) throw DataError("a label set needs at least two labels");
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
  const std::string needle = trim(label);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (iequals(labels_[i], needle)) return i;
  }
  return std::nullopt;
}

std::optional<std::string> LabelSet::canonical(std::string_view label) const {
  if (auto i = index_of(label)) return labels_[*i];
  return std::nullopt;
}

DatasetFormat parse_dataset_format(std::string_view name) {
  const std::string n = to_lower(trim(name));
  if (n == "csv") return DatasetFormat::csv;
  if (n == "jsonl") return DatasetFormat::jsonl;
  throw UsageError("unknown dataset format '" + std::string(name) + "' (expected csv or jsonl)");
}

DatasetFormat dataset_format_from_path(const std::filesystem::path& path) {
  const std::string ext = to_lower(path.extension().string());
  if (ext == ".csv") return DatasetFormat::csv;
  if (ext == ".jsonl" || ext == ".ndjson") return DatasetFormat::jsonl;
  throw UsageError("cannot infer dataset format from '" + path.string() + "'");
}

namespace {

struct RawRow {
  std::size_t line = 0;
  std::optional<std::string> id;
  std::optional<std::string> text;
  std::optional<std::string> label;
};

// RFC-4180 reader: quoted fields may contain commas, doubled quotes and newlines.
// Each row carries the physical line number it starts on.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_rows(const std::string& content) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = fields.size() == 1 && fields[0].empty();
    if (!blank) rows.emplace_back(row_line, std::move(fields));
    fields.clear();
  };

  std::size_t i = 0;
  if (content.rfind("\xEF\xBB\xBF", 0) == 0) i = 3;
  for (; i < content.size(); ++i) {
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
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw DataError("line " + std::to_string(line) + ": stray quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("line " + std::to_string(row_line) + ": unterminated quoted field");
  if (field_started || !fields.empty()) end_row();
  return rows;
}

std::vector<RawRow> read_csv(const std::string& content) {
  auto rows = read_csv_rows(content);
  if (rows.empty()) throw DataError("dataset is empty");
  const auto& header = rows.front().second;
  std::optional<std::size_t> id_col, text_col, label_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = to_lower(trim(header[c]));
    if (name == "id") id_col = c;
    else if (name == "text") text_col = c;
    else if (name == "label") label_col = c;
  }
  if (!text_col) throw DataError("line 1: CSV header lacks a 'text' column");

  std::vector<RawRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line, fields] = rows[r];
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    RawRow row;
    row.line = line;
    if (id_col) row.id = fields[*id_col];
    row.text = fields[*text_col];
    if (label_col && !trim(fields[*label_col]).empty()) row.label = fields[*label_col];
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<RawRow> read_jsonl(const std::string& content) {
  std::vector<RawRow> out;
  std::istringstream in(content);
  std::string text_line;
  std::size_t line = 0;
  while (std::getline(in, text_line)) {
    ++line;
    if (trim(text_line).empty()) continue;
    const auto j = nlohmann::json::parse(text_line, nullptr, false);
    const std::string where = "line " + std::to_string(line) + ": ";
    if (j.is_discarded() || !j.is_object()) throw DataError(where + "not a JSON object");
    RawRow row;
    row.line = line;
    if (j.contains("id") && !j["id"].is_null()) {
      if (j["id"].is_string()) row.id = j["id"].get<std::string>();
      else if (j["id"].is_number_integer()) row.id = std::to_string(j["id"].get<long long>());
      else throw DataError(where + "'id' must be a string or integer");
    }
    if (!j.contains("text") || !j["text"].is_string()) throw DataError(where + "missing string key 'text'");
    row.text = j["text"].get<std::string>();
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_string()) throw DataError(where + "'label' must be a string");
      row.label = j["label"].get<std::string>();
    }
    out.push_back(std::move(row));
  }
  if (out.empty()) throw DataError("dataset is empty");
  return out;
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  auto rows = format == DatasetFormat::csv ? read_csv(content) : read_jsonl(content);
  if (rows.empty()) throw DataError("dataset is empty");

  LoadedDataset ds;
  ds.name = path.stem().string();
  std::unordered_set<std::string> seen_ids;
  // First-seen surface form per case-folded label.
  std::vector<std::string> surface_forms;
  std::unordered_map<std::string, std::size_t> folded_index;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    const std::string where = "line " + std::to_string(row.line) + ": ";
    DataRecord rec;
    rec.id = row.id ? trim(*row.id) : std::to_string(i);
    if (rec.id.empty()) throw DataError(where + "empty id");
    if (!seen_ids.insert(rec.id).second) throw DataError(where + "duplicate id \"" + rec.id + "\"");
    rec.text = *row.text;
    if (trim(rec.text).empty()) throw DataError(where + "empty text");
    if (row.label) {
      std::string label = trim(*row.label);
      if (options.labels) {
        auto canonical = options.labels->canonical(label);
        if (!canonical) throw DataError(where + "label \"" + label + "\" is not in the configured label set");
        label = *canonical;
      } else {
        const std::string folded = to_lower(label);
        auto [it, inserted] = folded_index.emplace(folded, surface_forms.size());
        if (inserted) surface_forms.push_back(label);
        label = surface_forms[it->second];
      }
      rec.gold_label = std::move(label);
    } else if (options.require_labels) {
      throw DataError(where + "missing label");
    }
    ds.records.push_back(std::move(rec));
  }

  if (options.labels) {
    ds.labels = options.labels;
  } else if (!surface_forms.empty()) {
    std::sort(surface_forms.begin(), surface_forms.end(), [](const std::string& a, const std::string& b) {
      const auto la = to_lower(a);
      const auto lb = to_lower(b);
      return la != lb ? la < lb : a < b;
    });
    ds.labels = LabelSet(surface_forms);
  }
  return ds;
}

std::vector<std::vector<std::size_t>> controlled_round(const std::vector<std::vector<std::uint64_t>>& numerators,
                                                       std::uint64_t denominator,
                                                       const std::vector<std::size_t>& row_sums,
                                                       const std::vector<std::size_t>& col_sums) {
  const std::size_t rows = numerators.size();
  const std::size_t cols = col_sums.size();
  std::vector<std::vector<std::size_t>> out(rows, std::vector<std::size_t>(cols, 0));
  std::vector<std::vector<bool>> can_round_up(rows, std::vector<bool>(cols, false));
  std::vector<std::size_t> row_need(rows), col_need(cols);

  struct Cell {
    std::uint64_t remainder;
    std::size_t r, c;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r][c] = static_cast<std::size_t>(numerators[r][c] / denominator);
      const auto rem = numerators[r][c] % denominator;
      if (rem > 0) {
        can_round_up[r][c] = true;
        cells.push_back({rem, r, c});
      }
      sum += out[r][c];
    }
    row_need[r] = row_sums[r] - sum;
  }
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t sum = 0;
    for (std::size_t r = 0; r < rows; ++r) sum += out[r][c];
    col_need[c] = col_sums[c] - sum;
  }

  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    if (a.r != b.r) return a.r < b.r;
    return a.c < b.c;
  });
  std::vector<std::vector<bool>> up(rows, std::vector<bool>(cols, false));
  for (const auto& cell : cells) {
    if (row_need[cell.r] > 0 && col_need[cell.c] > 0) {
      up[cell.r][cell.c] = true;
      --row_need[cell.r];
      --col_need[cell.c];
    }
  }

  // Greedy may leave deficits; repair with augmenting paths row -> col (unused cell)
  // and col -> row (used cell) until every margin is met.
  auto augment = [&](std::size_t start_row) {
    std::vector<int> row_from_col(cols, -1);
    std::vector<int> col_from_row(rows, -1);
    std::vector<bool> row_seen(rows, false), col_seen(cols, false);
    std::vector<std::size_t> frontier{start_row};
    row_seen[start_row] = true;
    while (!frontier.empty()) {
      std::vector<std::size_t> next;
      for (std::size_t r : frontier) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (col_seen[c] || !can_round_up[r][c] || up[r][c]) continue;
          col_seen[c] = true;
          row_from_col[c] = static_cast<int>(r);
          if (col_need[c] > 0) {
            // Flip along the path back to start_row.
            std::size_t cc = c;
            while (true) {
              const auto rr = static_cast<std::size_t>(row_from_col[cc]);
              up[rr][cc] = true;
              if (rr == start_row) break;
              const auto prev_c = static_cast<std::size_t>(col_from_row[rr]);
              up[rr][prev_c] = false;
              cc = prev_c;
            }
            --col_need[c];
            --row_need[start_row];
            return true;
          }
          for (std::size_t r2 = 0; r2 < rows; ++r2) {
            if (!row_seen[r2] && up[r2][c]) {
              row_seen[r2] = true;
              col_from_row[r2] = static_cast<int>(c);
              next.push_back(r2);
            }
          }
        }
      }
      frontier = std::move(next);
    }
    return false;
  };
  for (std::size_t r = 0; r < rows; ++r) {
    while (row_need[r] > 0) {
      if (!augment(r)) throw Error("controlled rounding has no solution for the given margins");
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r][c] += up[r][c] ? 1 : 0;
  }
  return out;
}

namespace {

std::vector<std::size_t> label_indices(const std::vector<DataRecord>& records, const LabelSet& labels) {
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.gold_label) throw DataError("record \"" + r.id + "\" has no gold label; stratification needs labels");
    auto idx = labels.index_of(*r.gold_label);
    if (!idx) throw DataError("record \"" + r.id + "\" has label outside the label set: " + *r.gold_label);
    out.push_back(*idx);
  }
  return out;
}

// Per-label record positions, each list shuffled deterministically under `seed`.
std::vector<std::vector<std::size_t>> shuffled_groups(const std::vector<std::size_t>& label_of, std::size_t n_labels,
                                                      std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups(n_labels);
  for (std::size_t i = 0; i < label_of.size(); ++i) groups[label_of[i]].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& g : groups) seeded_shuffle(g, rng);
  return groups;
}

}  // namespace

std::vector<DataRecord> stratified_subsample(const std::vector<DataRecord>& records, const LabelSet& labels,
                                             std::size_t cap, std::uint64_t seed) {
  if (cap < labels.size()) {
    throw UsageError("subsample cap " + std::to_string(cap) + " is smaller than the number of labels");
  }
  if (records.size() <= cap) return records;

  const auto label_of = label_indices(records, labels);
  auto groups = shuffled_groups(label_of, labels.size(), seed);

  std::vector<std::size_t> quota(labels.size());
  std::size_t assigned = 0;
  std::vector<std::pair<std::uint64_t, std::size_t>> rema;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    const auto numer = static_cast<std::uint64_t>(groups[l].size()) * cap;
    quota[l] = static_cast<std::size_t>(numer / records.size());
    assigned += quota[l];
    rema.emplace_back(numer % records.size(), l);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < cap; ++k, ++assigned) ++quota[rema[k].second];

  std::vector<bool> keep(records.size(), false);
  for (std::size_t l = 0; l < labels.size(); ++l) {
    for (std::size_t k = 0; k < quota[l]; ++k) keep[groups[l][k]] = true;
  }
  std::vector<DataRecord> out;
  out.reserve(cap);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

SplitAssignment split_dataset(const std::vector<DataRecord>& records, const LabelSet& labels, std::uint64_t seed,
                              SplitRatios ratios) {
  const double parts[3] = {ratios.train, ratios.validation, ratios.test};
  for (double p : parts) {
    if (!(p > 0.0)) throw UsageError("split ratios must be positive");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");

  const auto label_of = label_indices(records, labels);
  auto groups = shuffled_groups(label_of, labels.size(), seed);
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (groups[l].size() < 3) {
      throw DataError("label \"" + labels[l] + "\" has " + std::to_string(groups[l].size()) +
                      " records; at least 3 are needed to stratify into three splits");
    }
  }

  // Split sizes by largest remainder over the ratios; ties favour the earlier split.
  const std::size_t n = records.size();
  std::size_t sizes[3];
  double rema[3];
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double q = static_cast<double>(n) * parts[s];
    const double fl = std::floor(q + 1e-9);
    sizes[s] = static_cast<std::size_t>(fl);
    rema[s] = std::max(0.0, q - fl);
    assigned += sizes[s];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return rema[a] > rema[b]; });
  for (int k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++sizes[order[k]];

  // Per-label counts: controlled rounding of count(L) * |S| / N keeps every cell within one
  // record of its exact proportional share while matching both margins.
  std::vector<std::vector<std::uint64_t>> numer(labels.size(), std::vector<std::uint64_t>(3));
  std::vector<std::size_t> row_sums(labels.size());
  for (std::size_t l = 0; l < labels.size(); ++l) {
    row_sums[l] = groups[l].size();
    for (int s = 0; s < 3; ++s) numer[l][s] = static_cast<std::uint64_t>(groups[l].size()) * sizes[s];
  }
  const auto counts = controlled_round(numer, n, row_sums, {sizes[0], sizes[1], sizes[2]});

  std::vector<int> split_of(n, -1);
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < counts[l][s]; ++c) split_of[groups[l][k++]] = s;
    }
  }
  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dest = split_of[i] == 0 ? out.train_ids : split_of[i] == 1 ? out.validation_ids : out.test_ids;
    dest.push_back(records[i].id);
  }
  return out;
}

nlohmann::ordered_json to_json(const SplitAssignment& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["train"] = split.train_ids;
  j["validation"] = split.validation_ids;
  j["test"] = split.test_ids;
  return j;
}

SplitAssignment split_from_json(const nlohmann::json& j) {
  SplitAssignment s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.validation_ids = j.at("validation").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split assignment: ") + e.what());
  }
  return s;
}

std::vector<DataRecord> select_records(const std::vector<DataRecord>& all, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const DataRecord*> by_id;
  for (const auto& r : all) by_id.emplace(r.id, &r);
  std::vector<DataRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown record id \"" + id + "\"");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace apt
