#include "apt/prompt_plan.hpp"

#include <algorithm>

#include "apt/common.hpp"

namespace apt {

std::string_view to_string(ShotMode mode) { return mode == ShotMode::few ? "few" : "zero"; }

bool PromptPlan::augmented() const {
  return shot == ShotMode::few || !metrics.empty() || thought != ThoughtMode::none;
}

void PromptPlan::validate() const {
  if (kind != PromptKind::json && augmented()) {
    throw UsageError(std::string(to_string(kind)) + " prompts cannot carry augmentations");
  }
  if (shot == ShotMode::few && n_exemplars == 0) throw UsageError("few-shot plan needs n >= 1");
  if (shot == ShotMode::zero && n_exemplars != 0) throw UsageError("zero-shot plan must have n = 0");
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (std::find(metrics.begin() + static_cast<std::ptrdiff_t>(i) + 1, metrics.end(), metrics[i]) != metrics.end()) {
      throw UsageError("metric " + std::string(to_string(metrics[i])) + " appears twice in the plan");
    }
  }
}

nlohmann::ordered_json PromptPlan::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(kind));
  j["shot"] = std::string(to_string(shot));
  j["n_exemplars"] = n_exemplars;
  j["metrics"] = nlohmann::ordered_json::array();
  for (auto m : metrics) j["metrics"].push_back(std::string(to_string(m)));
  j["thought"] = std::string(to_string(thought));
  return j;
}

PromptPlan PromptPlan::from_json(const nlohmann::json& j) {
  PromptPlan p;
  try {
    p.kind = parse_prompt_kind(j.at("kind").get<std::string>());
    const auto shot = j.at("shot").get<std::string>();
    if (shot == "few") p.shot = ShotMode::few;
    else if (shot == "zero") p.shot = ShotMode::zero;
    else throw DataError("unknown shot mode \"" + shot + "\"");
    p.n_exemplars = j.at("n_exemplars").get<std::size_t>();
    p.metrics = parse_metric_list(j.at("metrics").get<std::vector<std::string>>());
    p.thought = parse_thought_mode(j.at("thought").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prompt plan: ") + e.what());
  }
  p.validate();
  return p;
}

std::string PromptPlan::digest() const { return sha256_hex(serialize_json(to_json())); }

std::string PromptPlan::summary() const {
  std::string s(to_string(kind));
  if (kind != PromptKind::json) return s;
  s += shot == ShotMode::few ? ", few-shot n=" + std::to_string(n_exemplars) : ", zero-shot";
  std::vector<std::string> names;
  for (auto m : metrics) names.emplace_back(metric_key(m));
  s += ", metrics [" + join(names, ", ") + "]";
  s += ", thought " + std::string(to_string(thought));
  return s;
}

}  // namespace apt
