#include "apt/thought_ext.hpp"

#include <set>

#include "apt/common.hpp"
#include "apt/response_parser.hpp"

namespace apt {

std::string_view to_string(ThoughtMode mode) {
  switch (mode) {
    case ThoughtMode::none:
      return "none";
    case ThoughtMode::cot:
      return "cot";
    case ThoughtMode::tot:
      return "tot";
  }
  return "none";
}

ThoughtMode parse_thought_mode(std::string_view name) {
  if (iequals(name, "none")) return ThoughtMode::none;
  if (iequals(name, "cot")) return ThoughtMode::cot;
  if (iequals(name, "tot")) return ThoughtMode::tot;
  throw UsageError("unknown thought mode \"" + std::string(name) + "\" (expected none, cot or tot)");
}

std::string_view thought_instruction(ThoughtMode mode) {
  switch (mode) {
    case ThoughtMode::cot:
      return kCotInstruction;
    case ThoughtMode::tot:
      return kTotInstruction;
    case ThoughtMode::none:
      break;
  }
  throw UsageError("thought mode \"none\" has no instruction");
}

PromptDocument inject_thought(const PromptDocument& doc, const ThoughtVariant& variant,
                              std::span<const Exemplar> exemplars) {
  if (doc.kind() != PromptKind::json) throw DataError("thought instructions apply to JSON prompts only");
  if (doc.contains(keys::thought) || doc.contains(keys::examples_for_thought)) {
    throw DataError("prompt already holds a thought instruction");
  }
  auto out = doc.with_augmentation(keys::thought, std::string(thought_instruction(variant.mode)));
  if (!doc.contains(keys::examples)) return out;

  if (exemplars.empty()) throw DataError("few-shot thought prompt needs its exemplars");
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& e : exemplars) {
    auto it = variant.explanations.find(e.id);
    if (it == variant.explanations.end()) throw DataError("no explanation for exemplar \"" + e.id + "\"");
    nlohmann::ordered_json item = nlohmann::ordered_json::object();
    item[std::string(keys::text)] = e.text;
    item[std::string(keys::label)] = e.label;
    item[std::string(keys::explanation)] = it->second;
    list.push_back(std::move(item));
  }
  return out.with_augmentation(keys::examples_for_thought, std::move(list));
}

PromptDocument build_explanation_prompt(const TaskSpec& task, const Exemplar& exemplar, ThoughtMode mode) {
  if (trim(exemplar.text).empty()) throw DataError("exemplar \"" + exemplar.id + "\" has empty text");
  nlohmann::ordered_json body = nlohmann::ordered_json::object();
  body[std::string(keys::prompt)] = kExplanationInstruction;
  body[std::string(keys::thought)] = thought_instruction(mode);
  body[std::string(keys::text)] = exemplar.text;
  body[std::string(keys::task)] = task.task_domain;
  body[std::string(kTrueLabelKey)] = exemplar.label;
  body[std::string(keys::labels)] = task.label_set.labels();
  nlohmann::ordered_json format = nlohmann::ordered_json::object();
  format[std::string(keys::explanation)] = kExplanationPlaceholder;
  body[std::string(keys::desired_format)] = std::move(format);
  return PromptDocument::from_json(std::move(body));
}

ExplanationSet generate_explanations(std::span<const Exemplar> exemplars, const TaskSpec& task, ThoughtMode mode,
                                     Gateway& gateway, int parallelism) {
  std::vector<Exemplar> unique;
  std::set<std::string> seen;
  for (const auto& e : exemplars) {
    if (seen.insert(e.id).second) unique.push_back(e);
  }
  ExplanationSet result;
  if (unique.empty()) return result;

  std::vector<ChatRequest> requests;
  requests.reserve(unique.size());
  for (const auto& e : unique) requests.push_back(gateway.make_request(serialize(build_explanation_prompt(task, e, mode))));

  auto read = [](const BatchOutcome& o) -> std::optional<std::string> {
    if (!o.ok()) return std::nullopt;
    auto lookup = extract_json_string(o.response->raw_text, keys::explanation);
    if (!lookup.value || trim(*lookup.value).empty()) return std::nullopt;
    return lookup.value;
  };

  const auto first = gateway.annotate_batch(requests, parallelism);
  for (std::size_t i = 0; i < unique.size(); ++i) {
    if (first[i].error && !first[i].transport_failure) std::rethrow_exception(first[i].error);
    if (auto text = read(first[i])) {
      result.explanations[unique[i].id] = *text;
      continue;
    }
    // One retry that bypasses the cached reply.
    std::optional<std::string> retried;
    try {
      retried = read(BatchOutcome{gateway.complete(requests[i], CachePolicy::refresh), nullptr, {}, false});
    } catch (const TransportError& e) {
      log_warn("explanation retry for exemplar \"" + unique[i].id + "\" failed: " + e.what());
    }
    if (retried) {
      result.explanations[unique[i].id] = *retried;
    } else {
      log_warn("dropping exemplar \"" + unique[i].id + "\" from thought examples: no usable explanation");
      result.dropped.push_back(unique[i].id);
    }
  }
  if (result.dropped.size() * 2 > unique.size()) {
    throw StageAbort(std::to_string(result.dropped.size()) + " of " + std::to_string(unique.size()) +
                     " exemplar explanations were unusable");
  }
  return result;
}

}  // namespace apt
