#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace apt {

struct DataRecord {
  std::string id;
  std::string text;
  std::optional<std::string> gold_label;
};

/// Ordered, case-insensitively distinct label names. The order is canonical: it drives
/// one-hot encodings, prompt rendering and every tie-break that falls back to "label order".
class LabelSet {
 public:
  explicit LabelSet(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }

  /// Position of `label` after trimming, compared case-insensitively.
  std::optional<std::size_t> index_of(std::string_view label) const;
  /// The stored surface form matching `label`, if any.
  std::optional<std::string> canonical(std::string_view label) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> labels_;
};

struct TaskSpec {
  std::string task_domain;
  LabelSet label_set;
  std::string dataset_name;
};

enum class DatasetFormat { csv, jsonl };

DatasetFormat dataset_format_from_path(const std::filesystem::path& path);
DatasetFormat parse_dataset_format(std::string_view name);

struct LoadOptions {
  /// When set, gold labels are canonicalized against it instead of inferring a set.
  std::optional<LabelSet> labels;
  /// Reject rows without a gold label.
  bool require_labels = true;
};

struct LoadedDataset {
  std::string name;
  std::optional<LabelSet> labels;
  std::vector<DataRecord> records;
};

LoadedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& options = {});

/// Label-proportional subsample down to `cap` records; returns the input unchanged when it already fits.
std::vector<DataRecord> stratified_subsample(const std::vector<DataRecord>& records, const LabelSet& labels,
                                             std::size_t cap, std::uint64_t seed);

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> test_ids;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

SplitAssignment split_dataset(const std::vector<DataRecord>& records, const LabelSet& labels, std::uint64_t seed,
                              SplitRatios ratios = {});

nlohmann::ordered_json to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const nlohmann::json& j);

/// Records of `all` whose ids appear in `ids`, in `ids` order.
std::vector<DataRecord> select_records(const std::vector<DataRecord>& all, const std::vector<std::string>& ids);

/// Integer matrix whose cells are the floor or ceiling of `numerators[r][c] / denominator`
/// and whose row and column sums equal the given integer margins. Larger remainders are
/// rounded up first; ties go to the lower row, then the lower column.
std::vector<std::vector<std::size_t>> controlled_round(const std::vector<std::vector<std::uint64_t>>& numerators,
                                                       std::uint64_t denominator,
                                                       const std::vector<std::size_t>& row_sums,
                                                       const std::vector<std::size_t>& col_sums);

}  // namespace apt
