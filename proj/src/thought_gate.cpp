#include "apt/thought_gate.hpp"

#include "apt/common.hpp"

namespace apt {

std::string_view to_string(ThoughtSetting setting) {
  switch (setting) {
    case ThoughtSetting::gate:
      return "gate";
    case ThoughtSetting::force_cot:
      return "force-cot";
    case ThoughtSetting::force_tot:
      return "force-tot";
    case ThoughtSetting::off:
      return "off";
  }
  return "gate";
}

ThoughtSetting parse_thought_setting(std::string_view name) {
  for (auto s : {ThoughtSetting::gate, ThoughtSetting::force_cot, ThoughtSetting::force_tot, ThoughtSetting::off}) {
    if (iequals(name, to_string(s))) return s;
  }
  throw UsageError("unknown thought setting \"" + std::string(name) + "\" (expected gate, force-cot, force-tot or off)");
}

nlohmann::ordered_json ThoughtDecision::to_json() const {
  nlohmann::ordered_json j;
  j["setting"] = std::string(to_string(setting));
  j["chosen"] = std::string(to_string(chosen));
  j["f1"] = nlohmann::ordered_json::object();
  for (const auto& [mode, value] : f1) j["f1"][std::string(to_string(mode))] = value;
  return j;
}

ThoughtGateResult run_thought_gate(AnnotationSession& session, const PromptPlan& step3,
                                   const std::vector<DataRecord>& validation, ThoughtSetting setting) {
  if (step3.thought != ThoughtMode::none) throw UsageError("the thought gate starts from a plan without thought");
  ThoughtGateResult out{{setting, ThoughtMode::none, {}}, step3, {}, 0.0};

  std::vector<ThoughtMode> variants;
  switch (setting) {
    case ThoughtSetting::off:
      return out;
    case ThoughtSetting::force_cot:
      variants = {ThoughtMode::cot};
      break;
    case ThoughtSetting::force_tot:
      variants = {ThoughtMode::tot};
      break;
    case ThoughtSetting::gate:
      variants = {ThoughtMode::none, ThoughtMode::cot, ThoughtMode::tot};
      break;
  }

  std::optional<ThoughtMode> best;
  for (auto mode : variants) {
    PromptPlan plan = step3;
    plan.thought = mode;
    auto e = evaluate_prompt(PromptFactory(session, plan), validation, "validation");
    const double f1 = e.report.weighted_f1;
    log_info("step 4: thought " + std::string(to_string(mode)) + " F1 " + format_fixed(f1, 4));
    out.decision.f1[mode] = f1;
    if (!best || f1 > out.decision.f1[*best]) best = mode;
    out.evaluations.emplace_back(mode, std::move(e));
  }
  out.decision.chosen = *best;
  out.plan.thought = *best;
  out.plan_f1 = out.decision.f1[*best];
  return out;
}

}  // namespace apt
