#include "apt/evaluator.hpp"

#include <algorithm>
#include <set>

#include "apt/common.hpp"

namespace apt {

PrfResult weighted_prf(std::span<const std::string> gold, std::span<const std::optional<std::string>> predicted) {
  if (gold.size() != predicted.size()) {
    throw DataError("gold and predicted lists differ in length (" + std::to_string(gold.size()) + " vs " +
                    std::to_string(predicted.size()) + ")");
  }
  if (gold.empty()) throw DataError("cannot score zero records");

  std::map<std::string, std::size_t> support;
  std::map<std::string, std::size_t> tp;
  std::map<std::string, std::size_t> pred_count;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++support[gold[i]];
    if (!predicted[i]) continue;
    ++pred_count[*predicted[i]];
    if (*predicted[i] == gold[i]) ++tp[gold[i]];
  }

  PrfResult out;
  const double n = static_cast<double>(gold.size());
  for (const auto& [label, s] : support) {
    ClassScore c;
    c.label = label;
    c.support = s;
    const double t = static_cast<double>(tp[label]);
    const std::size_t p = pred_count.count(label) ? pred_count.at(label) : 0;
    c.precision = p == 0 ? 0.0 : t / static_cast<double>(p);
    c.recall = t / static_cast<double>(s);
    c.f1 = (c.precision + c.recall) == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    const double w = static_cast<double>(s) / n;
    out.precision += w * c.precision;
    out.recall += w * c.recall;
    out.f1 += w * c.f1;
    out.per_class.push_back(std::move(c));
  }
  return out;
}

void ConfusionTally::add(const std::string& gold, const std::optional<std::string>& predicted) {
  ++counts[gold][predicted ? *predicted : std::string(kInvalidPrediction)];
  ++total;
}

nlohmann::ordered_json ConfusionTally::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [gold, row] : counts) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (const auto& [pred, c] : row) r[pred] = c;
    j[gold] = std::move(r);
  }
  return j;
}

std::optional<double> time_cost(std::span<const ChatResponse> responses, std::span<const TimingProbe> probes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : responses) {
    if (r.from_cache || r.completion_tokens <= 0 || !r.probe_index) continue;
    if (*r.probe_index >= probes.size() || !probes[*r.probe_index].available()) continue;
    const double net = std::max(0.0, r.request_seconds - *probes[*r.probe_index].null_prompt_seconds);
    sum += net / static_cast<double>(r.completion_tokens);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["prompt"] = prompt_name;
  j["split"] = split_name;
  j["prompt_hash"] = prompt_hash;
  j["config_hash"] = config_hash;
  j["n_records"] = n_records;
  j["weighted_f1"] = weighted_f1;
  j["weighted_precision"] = weighted_precision;
  j["weighted_recall"] = weighted_recall;
  j["parsability"] = parsability;
  if (seconds_per_token) {
    j["seconds_per_token"] = *seconds_per_token;
  } else {
    j["seconds_per_token"] = "unavailable";
  }
  j["per_label"] = nlohmann::ordered_json::array();
  for (const auto& c : per_label) {
    j["per_label"].push_back({{"label", c.label},
                              {"support", c.support},
                              {"precision", c.precision},
                              {"recall", c.recall},
                              {"f1", c.f1}});
  }
  j["failures"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : failures) j["failures"][k] = v;
  j["confusion"] = confusion.to_json();
  j["live_responses"] = live_responses;
  j["cached_responses"] = cached_responses;
  return j;
}

std::string EvaluationReport::csv_header() {
  return "prompt,split,n_records,f1,precision,recall,parsability,seconds_per_token,prompt_hash,config_hash";
}

std::string EvaluationReport::csv_row() const {
  std::vector<std::string> cells = {prompt_name,
                                    split_name,
                                    std::to_string(n_records),
                                    format_fixed(weighted_f1, 6),
                                    format_fixed(weighted_precision, 6),
                                    format_fixed(weighted_recall, 6),
                                    format_fixed(parsability, 6),
                                    seconds_per_token ? format_fixed(*seconds_per_token, 6) : "unavailable",
                                    prompt_hash,
                                    config_hash};
  return join(cells, ",");
}

EvaluationReport build_report(std::span<const DataRecord> records, std::span<const Annotation> annotations,
                              std::span<const TimingProbe> probes) {
  if (records.size() != annotations.size()) throw DataError("records and annotations differ in count");
  if (records.empty()) throw DataError("cannot evaluate zero records");
  std::vector<std::string> gold;
  std::vector<std::optional<std::string>> pred;
  std::vector<ParsedAnnotation> parsed;
  std::vector<ChatResponse> responses;
  EvaluationReport r;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].gold_label) throw DataError("record \"" + records[i].id + "\" has no gold label to score against");
    gold.push_back(*records[i].gold_label);
    pred.push_back(annotations[i].parsed.label);
    parsed.push_back(annotations[i].parsed);
    r.confusion.add(gold.back(), pred.back());
    if (annotations[i].parsed.failure_reason) ++r.failures[std::string(to_string(*annotations[i].parsed.failure_reason))];
    if (annotations[i].response) {
      responses.push_back(*annotations[i].response);
      (annotations[i].response->from_cache ? r.cached_responses : r.live_responses)++;
    }
  }
  const auto prf = weighted_prf(gold, pred);
  r.n_records = records.size();
  r.weighted_f1 = prf.f1;
  r.weighted_precision = prf.precision;
  r.weighted_recall = prf.recall;
  r.per_label = prf.per_class;
  r.parsability = parsability(parsed);
  r.seconds_per_token = time_cost(responses, probes);
  return r;
}

Evaluation evaluate_prompt(const PromptFactory& factory, const std::vector<DataRecord>& records,
                           const std::string& split_name, const std::string& prompt_name) {
  if (records.empty()) throw DataError("cannot evaluate zero records");
  auto& session = factory.session();
  Evaluation e;
  e.annotations = session.annotate(factory.plan(), records);
  const auto probes = session.gateway().probes();
  e.report = build_report(records, e.annotations, probes);
  e.report.prompt_name = prompt_name;
  e.report.split_name = split_name;
  e.report.prompt_hash = factory.plan().digest();
  return e;
}

std::string annotations_jsonl(std::span<const DataRecord> records, std::span<const Annotation> annotations) {
  std::string out;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    nlohmann::ordered_json j;
    j["id"] = a.record_id;
    if (i < records.size() && records[i].gold_label) j["gold"] = *records[i].gold_label;
    j["label"] = a.parsed.label ? nlohmann::ordered_json(*a.parsed.label) : nlohmann::ordered_json(nullptr);
    if (a.parsed.failure_reason) j["failure"] = std::string(to_string(*a.parsed.failure_reason));
    j["raw_response_ref"] = a.response ? nlohmann::ordered_json(a.response->cache_key) : nlohmann::ordered_json(nullptr);
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

}  // namespace apt
