#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apt/core_model.hpp"
#include "json.hpp"

namespace apt {

enum class PromptKind { json, cloze, dictionary };

std::string_view to_string(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view name);

// Sentences shared by every template.
inline constexpr std::string_view kClassifyInstruction =
    "Classify the following text by given labels for specified task.";
inline constexpr std::string_view kLabelPlaceholder = "<label_for_classification>";
inline constexpr std::string_view kMetricsIntroduction =
    "Refer to the following NLP metrics of the text to make classification.";

// Top-level keys of the JSON template.
namespace keys {
inline constexpr std::string_view prompt = "Prompt";
inline constexpr std::string_view text = "Text";
inline constexpr std::string_view task = "Task";
inline constexpr std::string_view labels = "Labels";
inline constexpr std::string_view desired_format = "Desired format";
inline constexpr std::string_view label = "Label";
inline constexpr std::string_view examples = "Examples";
inline constexpr std::string_view nlp_metrics = "NLP metrics";
inline constexpr std::string_view introduction = "Introduction";
inline constexpr std::string_view thought = "Thought";
inline constexpr std::string_view examples_for_thought = "Examples for thought";
inline constexpr std::string_view explanation = "Explanation";
}  // namespace keys

/// A labelled demonstration embedded in a prompt.
struct Exemplar {
  std::string id;
  std::string text;
  std::string label;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// Key-value block contributed by one augmentation (a metric, ...).
using PromptFragment = nlohmann::ordered_json;

/// Immutable prompt. JSON-kind documents hold an insertion-ordered object tree;
/// cloze and dictionary documents hold their rendered plain text.
class PromptDocument {
 public:
  static PromptDocument from_json(nlohmann::ordered_json body);
  static PromptDocument from_text(PromptKind kind, std::string text);

  PromptKind kind() const { return kind_; }
  const nlohmann::ordered_json& body() const { return body_; }
  const std::string& text() const { return text_; }

  bool contains(std::string_view key) const;

  /// Copy with `key` inserted immediately before "Desired format" (or appended when absent).
  PromptDocument with_augmentation(std::string_view key, nlohmann::ordered_json value) const;
  /// Copy with an existing top-level value replaced in place.
  PromptDocument with_replaced(std::string_view key, nlohmann::ordered_json value) const;

  friend bool operator==(const PromptDocument& a, const PromptDocument& b);

 private:
  PromptKind kind_ = PromptKind::json;
  nlohmann::ordered_json body_;
  std::string text_;
};

/// Canonical bytes: for JSON documents, ordered keys, 4-space indent, "\n" line breaks,
/// no trailing newline, non-integral numbers with two decimals. Plain kinds return their text.
std::string serialize(const PromptDocument& doc);
/// Same layout for any JSON value; a negative `float_decimals` keeps round-trip precision.
std::string serialize_json(const nlohmann::ordered_json& value, int float_decimals = 2);
PromptDocument parse_prompt(std::string_view bytes, PromptKind kind = PromptKind::json);

PromptDocument build_initial_prompt(const TaskSpec& task, const DataRecord& record);
PromptDocument build_cloze_prompt(const TaskSpec& task, const DataRecord& record);
PromptDocument build_dictionary_prompt(const TaskSpec& task, const DataRecord& record);
PromptDocument build_baseline_prompt(PromptKind kind, const TaskSpec& task, const DataRecord& record);

PromptDocument attach_examples(const PromptDocument& doc, std::span<const Exemplar> exemplars);
PromptDocument attach_metric(const PromptDocument& doc, std::string_view metric_key, const PromptFragment& fragment);

/// Exemplars read back from a document's "Examples" list (ids are not serialized).
std::vector<Exemplar> read_examples(const PromptDocument& doc);

}  // namespace apt
