#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apt/core_model.hpp"
#include "apt/llm_gateway.hpp"
#include "apt/prompt_doc.hpp"

namespace apt {

// Declaration order is the gate's tie-break order.
enum class ThoughtMode { none, cot, tot };

std::string_view to_string(ThoughtMode mode);
ThoughtMode parse_thought_mode(std::string_view name);

inline constexpr std::string_view kCotInstruction = "Let's think step by step.";
inline constexpr std::string_view kTotInstruction =
    "Imagine three different experts are answering this question. "
    "All experts will write down 1 step of their thinking, then share it with the group. "
    "Then all experts will go on to the next step, etc. "
    "If any expert realises they're wrong at any point then they leave. "
    "Finally, all experts vote and elect the majority label as the final result.";
inline constexpr std::string_view kExplanationInstruction =
    "Follow the thought to reason the true label of following text among given labels for specified task.";
inline constexpr std::string_view kExplanationPlaceholder = "<explanation_for_the_true_label>";
inline constexpr std::string_view kTrueLabelKey = "True label";

/// Instruction sentence for `mode`; throws for ThoughtMode::none.
std::string_view thought_instruction(ThoughtMode mode);

struct ThoughtVariant {
  ThoughtMode mode = ThoughtMode::cot;
  /// Exemplar id -> explanation. Used only for few-shot documents.
  std::map<std::string, std::string> explanations;
};

/// Adds "Thought"; when `doc` holds "Examples", also adds "Examples for thought" built
/// from `exemplars`, each of which needs an explanation in the variant.
PromptDocument inject_thought(const PromptDocument& doc, const ThoughtVariant& variant,
                              std::span<const Exemplar> exemplars = {});

PromptDocument build_explanation_prompt(const TaskSpec& task, const Exemplar& exemplar, ThoughtMode mode);

struct ExplanationSet {
  std::map<std::string, std::string> explanations;
  /// Exemplar ids whose explanation stayed unparsable after one retry.
  std::vector<std::string> dropped;
};

/// Asks the model to justify each exemplar's gold label. Exemplars are deduplicated by id.
/// Throws StageAbort when more than half are dropped.
ExplanationSet generate_explanations(std::span<const Exemplar> exemplars, const TaskSpec& task, ThoughtMode mode,
                                     Gateway& gateway, int parallelism = 4);

}  // namespace apt
