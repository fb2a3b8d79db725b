#include "apt/prompt_doc.hpp"

#include <cmath>

#include "apt/common.hpp"

namespace apt {

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::json: return "json";
    case PromptKind::cloze: return "cloze";
    case PromptKind::dictionary: return "dictionary";
  }
  return "json";
}

PromptKind parse_prompt_kind(std::string_view name) {
  const auto n = to_lower(trim(name));
  if (n == "json") return PromptKind::json;
  if (n == "cloze") return PromptKind::cloze;
  if (n == "dictionary") return PromptKind::dictionary;
  throw UsageError("unknown prompt kind '" + std::string(name) + "'");
}

PromptDocument PromptDocument::from_json(nlohmann::ordered_json body) {
  if (!body.is_object()) throw DataError("a JSON prompt document must be an object");
  PromptDocument d;
  d.kind_ = PromptKind::json;
  d.body_ = std::move(body);
  return d;
}

PromptDocument PromptDocument::from_text(PromptKind kind, std::string text) {
  if (kind == PromptKind::json) return parse_prompt(text, PromptKind::json);
  PromptDocument d;
  d.kind_ = kind;
  d.text_ = std::move(text);
  return d;
}

bool PromptDocument::contains(std::string_view key) const {
  return kind_ == PromptKind::json && body_.contains(std::string(key));
}

PromptDocument PromptDocument::with_augmentation(std::string_view key, nlohmann::ordered_json value) const {
  if (kind_ != PromptKind::json) throw DataError("only JSON prompts accept augmentations");
  if (contains(key)) throw DataError("prompt already holds \"" + std::string(key) + "\"");
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  bool inserted = false;
  for (auto it = body_.begin(); it != body_.end(); ++it) {
    if (!inserted && it.key() == keys::desired_format) {
      out[std::string(key)] = value;
      inserted = true;
    }
    out[it.key()] = it.value();
  }
  if (!inserted) out[std::string(key)] = std::move(value);
  return from_json(std::move(out));
}

PromptDocument PromptDocument::with_replaced(std::string_view key, nlohmann::ordered_json value) const {
  if (!contains(key)) throw DataError("prompt has no \"" + std::string(key) + "\" entry");
  auto body = body_;
  body[std::string(key)] = std::move(value);
  return from_json(std::move(body));
}

bool operator==(const PromptDocument& a, const PromptDocument& b) {
  return a.kind_ == b.kind_ && serialize(a) == serialize(b);
}

namespace {

void write_value(const nlohmann::ordered_json& v, std::string& out, int depth, int decimals) {
  const std::string pad(static_cast<std::size_t>(depth + 1) * 4, ' ');
  const std::string close_pad(static_cast<std::size_t>(depth) * 4, ' ');
  switch (v.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += nlohmann::ordered_json(it.key()).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += ": ";
        write_value(it.value(), out, depth + 1, decimals);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        write_value(v[i], out, depth + 1, decimals);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case nlohmann::ordered_json::value_t::number_float: {
      if (decimals < 0) break;
      out += format_fixed(v.get<double>(), decimals);
      return;
    }
    default:
      break;
  }
  out += v.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace

std::string serialize_json(const nlohmann::ordered_json& value, int float_decimals) {
  std::string out;
  write_value(value, out, 0, float_decimals);
  return out;
}

std::string serialize(const PromptDocument& doc) {
  if (doc.kind() != PromptKind::json) return doc.text();
  return serialize_json(doc.body());
}

PromptDocument parse_prompt(std::string_view bytes, PromptKind kind) {
  if (kind != PromptKind::json) return PromptDocument::from_text(kind, std::string(bytes));
  auto j = nlohmann::ordered_json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("prompt bytes are not a JSON object");
  return PromptDocument::from_json(std::move(j));
}

namespace {

void require_text(const DataRecord& record) {
  if (trim(record.text).empty()) throw DataError("record \"" + record.id + "\" has empty text");
}

}  // namespace

PromptDocument build_initial_prompt(const TaskSpec& task, const DataRecord& record) {
  require_text(record);
  nlohmann::ordered_json body = nlohmann::ordered_json::object();
  body[std::string(keys::prompt)] = kClassifyInstruction;
  body[std::string(keys::text)] = record.text;
  body[std::string(keys::task)] = task.task_domain;
  body[std::string(keys::labels)] = task.label_set.labels();
  nlohmann::ordered_json format = nlohmann::ordered_json::object();
  format[std::string(keys::label)] = kLabelPlaceholder;
  body[std::string(keys::desired_format)] = std::move(format);
  return PromptDocument::from_json(std::move(body));
}

PromptDocument build_cloze_prompt(const TaskSpec& task, const DataRecord& record) {
  require_text(record);
  std::string s;
  s += "Fill [Label] for " + task.task_domain + " task with a label in [" + join(task.label_set.labels(), ", ") + "].\n";
  s += "The text \"" + record.text + "\" is classified as [Label].\n";
  s += "Desired format:\n";
  s += "Label: " + std::string(kLabelPlaceholder);
  return PromptDocument::from_text(PromptKind::cloze, std::move(s));
}

PromptDocument build_dictionary_prompt(const TaskSpec& task, const DataRecord& record) {
  require_text(record);
  std::string s;
  s += std::string(kClassifyInstruction) + "\n";
  s += "Text: \"" + record.text + "\".\n";
  s += "Task: " + task.task_domain + ".\n";
  s += "Labels: [" + join(task.label_set.labels(), ", ") + "].\n";
  s += "Desired format:\n";
  s += "Label: " + std::string(kLabelPlaceholder);
  return PromptDocument::from_text(PromptKind::dictionary, std::move(s));
}

PromptDocument build_baseline_prompt(PromptKind kind, const TaskSpec& task, const DataRecord& record) {
  switch (kind) {
    case PromptKind::cloze: return build_cloze_prompt(task, record);
    case PromptKind::dictionary: return build_dictionary_prompt(task, record);
    case PromptKind::json: return build_initial_prompt(task, record);
  }
  return build_initial_prompt(task, record);
}

PromptDocument attach_examples(const PromptDocument& doc, std::span<const Exemplar> exemplars) {
  if (exemplars.empty()) throw DataError("cannot attach an empty exemplar list; use the zero-shot document");
  if (doc.contains(keys::examples)) throw DataError("prompt already holds \"Examples\"");
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& e : exemplars) {
    nlohmann::ordered_json item = nlohmann::ordered_json::object();
    item[std::string(keys::text)] = e.text;
    item[std::string(keys::label)] = e.label;
    list.push_back(std::move(item));
  }
  return doc.with_augmentation(keys::examples, std::move(list));
}

PromptDocument attach_metric(const PromptDocument& doc, std::string_view metric_key, const PromptFragment& fragment) {
  const std::string key(metric_key);
  if (!doc.contains(keys::nlp_metrics)) {
    nlohmann::ordered_json block = nlohmann::ordered_json::object();
    block[std::string(keys::introduction)] = kMetricsIntroduction;
    block[key] = fragment;
    return doc.with_augmentation(keys::nlp_metrics, std::move(block));
  }
  auto block = doc.body().at(std::string(keys::nlp_metrics));
  if (block.contains(key)) throw DataError("metric \"" + key + "\" is already attached");
  block[key] = fragment;
  return doc.with_replaced(keys::nlp_metrics, std::move(block));
}

std::vector<Exemplar> read_examples(const PromptDocument& doc) {
  std::vector<Exemplar> out;
  if (!doc.contains(keys::examples)) return out;
  for (const auto& item : doc.body().at(std::string(keys::examples))) {
    out.push_back({"", item.at(std::string(keys::text)).get<std::string>(),
                   item.at(std::string(keys::label)).get<std::string>()});
  }
  return out;
}

}  // namespace apt
