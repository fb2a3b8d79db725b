#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apt/llm_gateway.hpp"
#include "apt/session.hpp"
#include "json.hpp"

namespace apt {

struct ClassScore {
  std::string label;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// One entry per gold class, sorted by label.
  std::vector<ClassScore> per_class;
};

/// Support-weighted precision/recall/F1 over gold classes. A missing prediction is
/// invalid: it counts as a false negative and never as a predicted class.
PrfResult weighted_prf(std::span<const std::string> gold, std::span<const std::optional<std::string>> predicted);

/// Counts per (gold label, predicted label); invalid predictions are keyed kInvalidPrediction.
struct ConfusionTally {
  static constexpr const char* kInvalidPrediction = "(invalid)";
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::size_t total = 0;

  void add(const std::string& gold, const std::optional<std::string>& predicted);
  nlohmann::ordered_json to_json() const;
};

/// Mean of max(0, request - probe) / tokens over live, token-bearing responses with an
/// available probe. Empty when no response qualifies.
std::optional<double> time_cost(std::span<const ChatResponse> responses, std::span<const TimingProbe> probes);

struct EvaluationReport {
  std::string prompt_name;
  std::string split_name;
  std::string prompt_hash;
  std::string config_hash;
  std::size_t n_records = 0;
  double weighted_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double parsability = 0.0;
  std::optional<double> seconds_per_token;
  std::vector<ClassScore> per_label;
  std::map<std::string, std::size_t> failures;
  ConfusionTally confusion;
  std::size_t live_responses = 0;
  std::size_t cached_responses = 0;

  nlohmann::ordered_json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Scores annotations of gold-labelled records.
EvaluationReport build_report(std::span<const DataRecord> records, std::span<const Annotation> annotations,
                              std::span<const TimingProbe> probes);

struct Evaluation {
  EvaluationReport report;
  std::vector<Annotation> annotations;
};

/// Annotates `records` with the factory's plan and scores the outcome.
Evaluation evaluate_prompt(const PromptFactory& factory, const std::vector<DataRecord>& records,
                           const std::string& split_name, const std::string& prompt_name = "json");

/// JSONL line per annotation: id, gold, label (or null), failure reason, response cache key.
std::string annotations_jsonl(std::span<const DataRecord> records, std::span<const Annotation> annotations);

}  // namespace apt
