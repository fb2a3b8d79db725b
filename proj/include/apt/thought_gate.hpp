#pragma once

#include <map>
#include <string_view>
#include <vector>

#include "apt/evaluator.hpp"
#include "apt/prompt_plan.hpp"
#include "apt/session.hpp"
#include "apt/thought_ext.hpp"

namespace apt {

enum class ThoughtSetting { gate, force_cot, force_tot, off };

std::string_view to_string(ThoughtSetting setting);
ThoughtSetting parse_thought_setting(std::string_view name);

struct ThoughtDecision {
  ThoughtSetting setting = ThoughtSetting::gate;
  ThoughtMode chosen = ThoughtMode::none;
  /// Validation F1 per evaluated variant.
  std::map<ThoughtMode, double> f1;

  nlohmann::ordered_json to_json() const;
};

struct ThoughtGateResult {
  ThoughtDecision decision;
  PromptPlan plan;
  std::vector<std::pair<ThoughtMode, Evaluation>> evaluations;
  double plan_f1 = 0.0;
};

/// Evaluates none/cot/tot on top of `step3` and keeps the best; ties prefer none, then cot.
/// Forced settings skip the comparison.
ThoughtGateResult run_thought_gate(AnnotationSession& session, const PromptPlan& step3,
                                   const std::vector<DataRecord>& validation, ThoughtSetting setting);

}  // namespace apt
