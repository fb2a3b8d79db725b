#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "apt/metric_hub.hpp"
#include "apt/prompt_doc.hpp"
#include "apt/thought_ext.hpp"
#include "json.hpp"

namespace apt {

enum class ShotMode { zero, few };

std::string_view to_string(ShotMode mode);

/// Recipe for per-record prompts: which augmentations apply, in order.
struct PromptPlan {
  PromptKind kind = PromptKind::json;
  ShotMode shot = ShotMode::zero;
  std::size_t n_exemplars = 0;
  /// In selection order.
  std::vector<MetricName> metrics;
  ThoughtMode thought = ThoughtMode::none;

  static PromptPlan baseline(PromptKind kind) { return PromptPlan{kind, ShotMode::zero, 0, {}, ThoughtMode::none}; }

  /// Baseline kinds take no augmentation; few-shot needs n >= 1; metrics are distinct.
  void validate() const;
  bool augmented() const;

  nlohmann::ordered_json to_json() const;
  static PromptPlan from_json(const nlohmann::json& j);
  /// sha256 of the canonical JSON form.
  std::string digest() const;
  std::string summary() const;

  friend bool operator==(const PromptPlan&, const PromptPlan&) = default;
};

}  // namespace apt
