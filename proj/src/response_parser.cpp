#include "apt/response_parser.hpp"

#include <cctype>

#include "apt/common.hpp"

namespace apt {

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::no_json_found: return "no_json_found";
    case FailureReason::bad_json: return "bad_json";
    case FailureReason::missing_key: return "missing_key";
    case FailureReason::unknown_label: return "unknown_label";
    case FailureReason::empty_response: return "empty_response";
    case FailureReason::missing_anchor: return "missing_anchor";
    case FailureReason::transport_failure: return "transport_failure";
  }
  return "bad_json";
}

FailureReason parse_failure_reason(std::string_view name) {
  for (auto r : {FailureReason::no_json_found, FailureReason::bad_json, FailureReason::missing_key,
                 FailureReason::unknown_label, FailureReason::empty_response, FailureReason::missing_anchor,
                 FailureReason::transport_failure}) {
    if (to_string(r) == name) return r;
  }
  throw DataError("unknown failure reason '" + std::string(name) + "'");
}

std::optional<std::string_view> find_json_object(std::string_view raw) {
  std::size_t start = raw.find('{');
  while (start != std::string_view::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) return raw.substr(start, i - start + 1);
    }
    // Unbalanced from this brace; a later brace may still open a complete object.
    start = raw.find('{', start + 1);
  }
  return std::nullopt;
}

KeyLookup extract_json_string(std::string_view raw, std::string_view key) {
  if (trim(raw).empty()) return {std::nullopt, FailureReason::empty_response};
  auto span = find_json_object(raw);
  if (!span) return {std::nullopt, FailureReason::no_json_found};
  const auto j = nlohmann::json::parse(span->begin(), span->end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return {std::nullopt, FailureReason::bad_json};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!iequals(trim(it.key()), key)) continue;
    if (!it.value().is_string()) return {std::nullopt, FailureReason::unknown_label};
    return {it.value().get<std::string>(), std::nullopt};
  }
  return {std::nullopt, FailureReason::missing_key};
}

ParsedAnnotation parse_json_response(std::string_view raw, const LabelSet& labels, std::string record_id) {
  auto found = extract_json_string(raw, keys::label);
  if (!found.value) return ParsedAnnotation::failure(std::move(record_id), *found.failure);
  if (auto canonical = labels.canonical(*found.value)) {
    return ParsedAnnotation::success(std::move(record_id), *canonical);
  }
  return ParsedAnnotation::failure(std::move(record_id), FailureReason::unknown_label);
}

namespace {

std::string strip_punct(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  auto is_edge = [](unsigned char c) { return std::ispunct(c) && c != '-' && c != '_'; };
  while (b < e && is_edge(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && is_edge(static_cast<unsigned char>(token[e - 1]))) --e;
  return to_lower(token.substr(b, e - b));
}

std::vector<std::string> normalized_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& t : split_whitespace(s)) {
    auto n = strip_punct(t);
    if (!n.empty()) out.push_back(std::move(n));
  }
  return out;
}

}  // namespace

ParsedAnnotation parse_baseline_response(std::string_view raw, const LabelSet& labels, PromptKind /*kind*/,
                                         std::string record_id, BaselineParseOptions options) {
  if (trim(raw).empty()) return ParsedAnnotation::failure(std::move(record_id), FailureReason::empty_response);
  const std::string lowered = to_lower(raw);
  const auto anchor = lowered.rfind("label:");
  if (anchor == std::string::npos) {
    return ParsedAnnotation::failure(std::move(record_id), FailureReason::missing_anchor);
  }
  const auto tail = normalized_tokens(std::string_view(raw).substr(anchor + 6));
  if (tail.empty()) return ParsedAnnotation::failure(std::move(record_id), FailureReason::missing_key);

  if (!options.strict_first_word) {
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t l = 0; l < labels.size(); ++l) {
      const auto label_tokens = normalized_tokens(labels[l]);
      if (label_tokens.empty() || label_tokens.size() > tail.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < label_tokens.size() && match; ++k) match = label_tokens[k] == tail[k];
      if (match && label_tokens.size() > best_len) {
        best = l;
        best_len = label_tokens.size();
      }
    }
    if (best) return ParsedAnnotation::success(std::move(record_id), labels[*best]);
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (strip_punct(labels[l]) == tail.front()) return ParsedAnnotation::success(std::move(record_id), labels[l]);
  }
  return ParsedAnnotation::failure(std::move(record_id), FailureReason::unknown_label);
}

ParsedAnnotation parse_response(std::string_view raw, const LabelSet& labels, PromptKind kind, std::string record_id,
                                BaselineParseOptions options) {
  if (kind == PromptKind::json) return parse_json_response(raw, labels, std::move(record_id));
  return parse_baseline_response(raw, labels, kind, std::move(record_id), options);
}

double parsability(std::span<const ParsedAnnotation> parsed) {
  if (parsed.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : parsed) ok += p.parsable() ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(parsed.size());
}

nlohmann::ordered_json to_json(const ParsedAnnotation& p) {
  nlohmann::ordered_json j;
  j["id"] = p.record_id;
  if (p.label) j["label"] = *p.label;
  else j["label"] = nullptr;
  if (p.failure_reason) j["failure_reason"] = to_string(*p.failure_reason);
  return j;
}

}  // namespace apt
