#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apt/core_model.hpp"
#include "apt/prompt_doc.hpp"
#include "json.hpp"

namespace apt {

// Declaration order is the canonical tie-break order.
enum class MetricName { sentiment, emotion, toxicity, topic };

inline constexpr std::array<MetricName, 4> kAllMetrics = {MetricName::sentiment, MetricName::emotion,
                                                          MetricName::toxicity, MetricName::topic};

std::string_view to_string(MetricName metric);
/// Prompt key: "Sentiment", "Emotion", "Toxicity", "Topic".
std::string_view metric_key(MetricName metric);
MetricName parse_metric_name(std::string_view name);
std::vector<MetricName> parse_metric_list(const std::vector<std::string>& names);

/// Score dimension names in prompt order; empty for topic.
const std::vector<std::string>& dimension_names(MetricName metric);

inline constexpr std::size_t kMaxTopicKeywords = 20;

struct MetricVector {
  MetricName metric = MetricName::sentiment;
  /// Aligned with dimension_names(metric).
  std::vector<double> scores;
  /// Topic only.
  std::vector<std::string> keywords;

  /// Classifier features: the scores, or (keyword count, mean keyword length) for topic.
  std::vector<double> numeric_features() const;

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

/// Validates a named-score object (exact dimension names, values in [0,1]).
MetricVector score_vector_from_json(MetricName metric, const nlohmann::json& named, std::string_view context);
MetricVector topic_vector(std::vector<std::string> keywords, std::string_view context);
nlohmann::ordered_json vector_to_json(const MetricVector& v);

enum class MetricProvenance { precomputed, service, stub };
std::string_view to_string(MetricProvenance p);

class MetricTable {
 public:
  void put(const std::string& id, MetricVector vector, MetricProvenance provenance);

  const MetricVector* find(const std::string& id, MetricName metric) const;
  const MetricVector& at(const std::string& id, MetricName metric) const;
  std::optional<MetricProvenance> provenance(const std::string& id, MetricName metric) const;

  /// Ids lacking any of `metrics`, in the order given.
  std::vector<std::string> missing(const std::vector<std::string>& ids, std::span<const MetricName> metrics) const;
  void require_coverage(const std::vector<std::string>& ids, std::span<const MetricName> metrics) const;

  std::size_t size() const { return rows_.size(); }

  /// Snapshot with rows sorted by id.
  nlohmann::ordered_json to_json() const;
  static MetricTable from_json(const nlohmann::json& j);

 private:
  struct Entry {
    MetricVector vector;
    MetricProvenance provenance;
  };
  std::map<std::string, std::map<MetricName, Entry>> rows_;
};

/// JSONL rows: {"id": ..., "sentiment": {...}, "emotion": {...}, "toxicity": {...}, "topic": [...]}.
MetricTable load_precomputed(const std::filesystem::path& path);

/// Deterministic lexicon/hash scores for offline runs; topic = up to 5 most frequent non-stopwords.
MetricVector stub_score(const DataRecord& record, MetricName metric, std::uint64_t seed);

struct MetricServiceEndpoint {
  std::string base_url = "http://127.0.0.1:8000";
  std::size_t batch_size = 64;
  int retry_budget = 2;
  std::chrono::milliseconds retry_base_delay{200};
  int connect_timeout_seconds = 5;
  int read_timeout_seconds = 120;
};

/// Client for the metric scoring service (/v1/health, /v1/score/{metric}, /v1/topic/{fit,infer}).
class MetricServiceClient {
 public:
  explicit MetricServiceClient(MetricServiceEndpoint endpoint);

  bool healthy();
  std::vector<MetricVector> score(MetricName metric, const std::vector<std::string>& texts,
                                  const std::string& dataset_id);
  void topic_fit(const std::string& dataset_id, const std::vector<std::string>& texts);
  std::vector<MetricVector> topic_infer(const std::string& dataset_id, const std::vector<std::string>& texts);

  const MetricServiceEndpoint& endpoint() const { return endpoint_; }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  nlohmann::json post_once(const std::string& path, const std::string& body);
  std::vector<MetricVector> batched(MetricName metric, const std::string& path, const std::vector<std::string>& texts,
                                    const std::string& dataset_id);

  MetricServiceEndpoint endpoint_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

/// Vectors for `records` from the service, in record order. Topic requires a prior fit.
std::vector<MetricVector> fetch_from_service(MetricServiceClient& client, std::span<const DataRecord> records,
                                             MetricName metric, const std::string& dataset_id);

enum class MetricSource { automatic, precomputed, service, stub };
MetricSource parse_metric_source(std::string_view name);

struct MetricAssemblyOptions {
  std::vector<MetricName> metrics{kAllMetrics.begin(), kAllMetrics.end()};
  MetricSource source = MetricSource::automatic;
  std::optional<std::filesystem::path> precomputed_path;
  std::optional<MetricServiceEndpoint> service;
  std::uint64_t stub_seed = 42;
  std::string dataset_id;
};

/// Builds a table covering every (record, metric); precomputed rows win over the
/// service, which wins over the stub.
MetricTable assemble_metric_table(const std::vector<DataRecord>& records, const MetricAssemblyOptions& options);

/// The prompt block for one metric: {"Introduction": ..., "Scores": {...}} or {"Introduction": ..., "Words": [...]}.
PromptFragment render_metric_fragment(const MetricVector& vector);

}  // namespace apt
