#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "apt/core_model.hpp"
#include "apt/prompt_doc.hpp"
#include "json.hpp"

namespace apt {

enum class FailureReason {
  no_json_found,
  bad_json,
  missing_key,
  unknown_label,
  empty_response,
  missing_anchor,
  transport_failure,
};

std::string_view to_string(FailureReason reason);
FailureReason parse_failure_reason(std::string_view name);

struct ParsedAnnotation {
  std::string record_id;
  std::optional<std::string> label;  // canonical LabelSet form when parsable
  std::optional<FailureReason> failure_reason;

  bool parsable() const { return label.has_value(); }
  static ParsedAnnotation success(std::string id, std::string label) { return {std::move(id), std::move(label), {}}; }
  static ParsedAnnotation failure(std::string id, FailureReason r) { return {std::move(id), std::nullopt, r}; }

  friend bool operator==(const ParsedAnnotation&, const ParsedAnnotation&) = default;
};

/// First balanced {...} span in `raw`, honouring JSON string quoting. Code fences and
/// surrounding prose are skipped over naturally.
std::optional<std::string_view> find_json_object(std::string_view raw);

struct KeyLookup {
  std::optional<std::string> value;
  std::optional<FailureReason> failure;
};

/// Reads a top-level string value by case-insensitive key from the first JSON object in `raw`.
KeyLookup extract_json_string(std::string_view raw, std::string_view key);

ParsedAnnotation parse_json_response(std::string_view raw, const LabelSet& labels, std::string record_id = {});

struct BaselineParseOptions {
  /// Match only the single first token after "label:" (no multi-word extension).
  bool strict_first_word = false;
};

ParsedAnnotation parse_baseline_response(std::string_view raw, const LabelSet& labels, PromptKind kind,
                                         std::string record_id = {}, BaselineParseOptions options = {});

/// Dispatches on prompt kind.
ParsedAnnotation parse_response(std::string_view raw, const LabelSet& labels, PromptKind kind,
                                std::string record_id = {}, BaselineParseOptions options = {});

double parsability(std::span<const ParsedAnnotation> parsed);

nlohmann::ordered_json to_json(const ParsedAnnotation& p);

}  // namespace apt
