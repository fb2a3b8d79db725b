#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "apt/evaluator.hpp"
#include "apt/exemplar_pool.hpp"
#include "apt/prompt_plan.hpp"
#include "apt/session.hpp"

namespace apt {

struct ShotDecision {
  ShotMode mode = ShotMode::zero;
  std::size_t chosen_n = 0;
  double baseline_f1 = 0.0;
  double best_few_f1 = 0.0;
  /// (n, validation F1) per candidate, in candidate order.
  std::vector<std::pair<std::size_t, double>> per_n;

  nlohmann::ordered_json to_json() const;
};

struct ShotGateResult {
  ShotDecision decision;
  PromptPlan plan;
  Evaluation baseline;
  std::vector<Evaluation> few_shot;
  /// Validation F1 of `plan`.
  double plan_f1 = 0.0;
};

/// Compares the zero-shot `base` plan against few-shot variants with each n. The session's
/// exemplar pool must already be set. Few-shot wins when its best F1 is at least the baseline.
ShotGateResult run_shot_gate(AnnotationSession& session, const PromptPlan& base,
                             const std::vector<DataRecord>& eval_records, const std::vector<std::size_t>& n_candidates,
                             const std::string& split_name = "validation");

}  // namespace apt
