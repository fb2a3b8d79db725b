#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apt/evaluator.hpp"
#include "apt/gbdt.hpp"
#include "apt/metric_hub.hpp"
#include "apt/prompt_plan.hpp"
#include "apt/session.hpp"

namespace apt {

struct AgreementExample {
  std::vector<double> features;
  bool target = false;
};

/// Features: one-hot of the LLM label over `labels` plus an "invalid" slot, then the
/// metric's numeric features. Target: LLM label equals the gold label.
std::vector<AgreementExample> build_agreement_examples(std::span<const DataRecord> records,
                                                       std::span<const std::optional<std::string>> llm_labels,
                                                       const LabelSet& labels, const MetricTable& table,
                                                       MetricName metric);

GbdtClassifier train_agreement_classifier(std::span<const AgreementExample> examples, const GbdtParams& params = {});

struct RankingOptions {
  GbdtParams params;
  int folds = 10;
  std::uint64_t fold_seed = 42;
  CvScore score = CvScore::f1;
};

struct RankedMetric {
  MetricName metric = MetricName::sentiment;
  double score = 0.0;
  bool trainable = true;
};
using RankedMetrics = std::vector<RankedMetric>;

nlohmann::ordered_json to_json(const RankedMetrics& ranking);

/// Cross-validated agreement score per candidate, best first; ties keep canonical order.
RankedMetrics rank_metrics(std::span<const DataRecord> records, std::span<const std::optional<std::string>> llm_labels,
                           const LabelSet& labels, const MetricTable& table, std::span<const MetricName> candidates,
                           const RankingOptions& options = {});

struct SelectionIteration {
  int round = 0;
  MetricName tried = MetricName::sentiment;
  double validation_f1 = 0.0;
  bool accepted = false;
  std::string prompt_hash;
};

struct SelectionTrace {
  double baseline_f1 = 0.0;
  std::vector<SelectionIteration> iterations;
  std::vector<MetricName> selected;
  std::vector<RankedMetrics> rankings;

  /// Baseline F1 followed by the F1 of every accepted iteration.
  std::vector<double> gate_values() const;
  nlohmann::ordered_json to_json() const;
};

struct SelectionOptions {
  RankingOptions ranking;
  /// Abort when a validation run has more unparsable responses than this fraction.
  double max_invalid_fraction = 0.5;
};

struct SelectionResult {
  SelectionTrace trace;
  PromptPlan plan;
  double plan_f1 = 0.0;
};

/// Greedy search over ranked metrics: accept the first candidate whose validation F1
/// strictly beats the current prompt, re-annotate train, re-rank, repeat.
SelectionResult select_metrics(AnnotationSession& session, const PromptPlan& start, double start_f1,
                               const std::vector<DataRecord>& train, const std::vector<DataRecord>& validation,
                               std::vector<MetricName> candidates, const SelectionOptions& options = {});

}  // namespace apt
