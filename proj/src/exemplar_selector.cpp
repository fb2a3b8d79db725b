#include "apt/exemplar_selector.hpp"

#include "apt/common.hpp"

namespace apt {

nlohmann::ordered_json ShotDecision::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(mode));
  j["chosen_n"] = chosen_n;
  j["baseline_f1"] = baseline_f1;
  j["best_few_f1"] = best_few_f1;
  j["per_n"] = nlohmann::ordered_json::array();
  for (const auto& [n, f1] : per_n) j["per_n"].push_back({{"n", n}, {"f1", f1}});
  return j;
}

ShotGateResult run_shot_gate(AnnotationSession& session, const PromptPlan& base,
                             const std::vector<DataRecord>& eval_records, const std::vector<std::size_t>& n_candidates,
                             const std::string& split_name) {
  if (n_candidates.empty()) throw UsageError("the shot gate needs at least one exemplar count");
  if (base.shot != ShotMode::zero) throw UsageError("the shot gate starts from a zero-shot plan");
  for (const auto& r : eval_records) {
    if (!r.gold_label) throw DataError("shot gate record \"" + r.id + "\" has no gold label");
  }

  auto warn_if_unparsable = [](const Evaluation& e, const std::string& what) {
    if (e.report.parsability == 0.0) log_warn(what + ": every response was unparsable; scored F1=0");
  };

  ShotGateResult out{{}, base, evaluate_prompt(PromptFactory(session, base), eval_records, split_name), {}, 0.0};
  warn_if_unparsable(out.baseline, "zero-shot");
  out.decision.baseline_f1 = out.baseline.report.weighted_f1;
  log_info("step 2: zero-shot F1 " + format_fixed(out.decision.baseline_f1, 4));

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < n_candidates.size(); ++i) {
    PromptPlan plan = base;
    plan.shot = ShotMode::few;
    plan.n_exemplars = n_candidates[i];
    auto e = evaluate_prompt(PromptFactory(session, plan), eval_records, split_name);
    warn_if_unparsable(e, "few-shot n=" + std::to_string(plan.n_exemplars));
    const double f1 = e.report.weighted_f1;
    log_info("step 2: few-shot n=" + std::to_string(plan.n_exemplars) + " F1 " + format_fixed(f1, 4));
    out.decision.per_n.emplace_back(plan.n_exemplars, f1);
    const bool better = !best || f1 > out.decision.per_n[*best].second ||
                        (f1 == out.decision.per_n[*best].second && plan.n_exemplars < out.decision.per_n[*best].first);
    if (better) best = i;
    out.few_shot.push_back(std::move(e));
  }

  out.decision.best_few_f1 = out.decision.per_n[*best].second;
  if (out.decision.best_few_f1 >= out.decision.baseline_f1) {
    out.decision.mode = ShotMode::few;
    out.decision.chosen_n = out.decision.per_n[*best].first;
    out.plan.shot = ShotMode::few;
    out.plan.n_exemplars = out.decision.chosen_n;
    out.plan_f1 = out.decision.best_few_f1;
  } else {
    out.plan_f1 = out.decision.baseline_f1;
  }
  return out;
}

}  // namespace apt
