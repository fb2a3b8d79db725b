#include "apt/metric_selector.hpp"

#include <algorithm>

#include "apt/common.hpp"

namespace apt {

std::vector<AgreementExample> build_agreement_examples(std::span<const DataRecord> records,
                                                       std::span<const std::optional<std::string>> llm_labels,
                                                       const LabelSet& labels, const MetricTable& table,
                                                       MetricName metric) {
  if (records.size() != llm_labels.size()) throw DataError("LLM labels must cover every training record");
  std::vector<AgreementExample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.gold_label) throw DataError("training record \"" + r.id + "\" has no gold label");
    AgreementExample ex;
    ex.features.assign(labels.size() + 1, 0.0);
    const auto& predicted = llm_labels[i];
    std::optional<std::size_t> slot = predicted ? labels.index_of(*predicted) : std::nullopt;
    ex.features[slot ? *slot : labels.size()] = 1.0;
    const auto numeric = table.at(r.id, metric).numeric_features();
    ex.features.insert(ex.features.end(), numeric.begin(), numeric.end());
    ex.target = predicted && slot && iequals(labels[*slot], *r.gold_label);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

void split_examples(std::span<const AgreementExample> examples, FeatureMatrix& x, std::vector<int>& y) {
  x.clear();
  y.clear();
  for (const auto& e : examples) {
    x.push_back(e.features);
    y.push_back(e.target ? 1 : 0);
  }
}

}  // namespace

GbdtClassifier train_agreement_classifier(std::span<const AgreementExample> examples, const GbdtParams& params) {
  if (examples.size() < 20) log_warn("agreement classifier trained on fewer than 20 examples");
  FeatureMatrix x;
  std::vector<int> y;
  split_examples(examples, x, y);
  return GbdtClassifier::train(x, y, params);
}

nlohmann::ordered_json to_json(const RankedMetrics& ranking) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : ranking) {
    j.push_back({{"metric", std::string(to_string(r.metric))}, {"score", r.score}, {"trainable", r.trainable}});
  }
  return j;
}

RankedMetrics rank_metrics(std::span<const DataRecord> records, std::span<const std::optional<std::string>> llm_labels,
                           const LabelSet& labels, const MetricTable& table, std::span<const MetricName> candidates,
                           const RankingOptions& options) {
  std::vector<MetricName> ordered(candidates.begin(), candidates.end());
  std::sort(ordered.begin(), ordered.end());
  RankedMetrics out;
  if (ordered.empty()) return out;

  int folds = options.folds;
  if (records.size() < 10) {
    folds = std::max(2, static_cast<int>(records.size() / 2));
    log_warn("only " + std::to_string(records.size()) + " training records; using " + std::to_string(folds) +
             "-fold cross-validation");
  }
  for (auto metric : ordered) {
    const auto examples = build_agreement_examples(records, llm_labels, labels, table, metric);
    FeatureMatrix x;
    std::vector<int> y;
    split_examples(examples, x, y);
    const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    RankedMetric r{metric, 0.0, true};
    if (positives == 0 || positives == y.size() || records.size() < 4) {
      r.trainable = false;
    } else {
      r.score = cross_validate(x, y, folds, options.params, options.fold_seed, options.score).mean;
    }
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedMetric& a, const RankedMetric& b) { return a.score > b.score; });
  return out;
}

std::vector<double> SelectionTrace::gate_values() const {
  std::vector<double> v{baseline_f1};
  for (const auto& it : iterations) {
    if (it.accepted) v.push_back(it.validation_f1);
  }
  return v;
}

nlohmann::ordered_json SelectionTrace::to_json() const {
  nlohmann::ordered_json j;
  j["baseline_f1"] = baseline_f1;
  j["iterations"] = nlohmann::ordered_json::array();
  for (const auto& it : iterations) {
    j["iterations"].push_back({{"round", it.round},
                               {"tried_metric", std::string(to_string(it.tried))},
                               {"validation_f1", it.validation_f1},
                               {"accepted", it.accepted},
                               {"prompt_hash", it.prompt_hash}});
  }
  j["selected"] = nlohmann::ordered_json::array();
  for (auto m : selected) j["selected"].push_back(std::string(to_string(m)));
  j["rankings"] = nlohmann::ordered_json::array();
  for (const auto& r : rankings) j["rankings"].push_back(apt::to_json(r));
  return j;
}

namespace {

void check_parsability(const std::vector<Annotation>& annotations, double max_invalid, const std::string& what) {
  std::size_t invalid = 0;
  std::map<std::string, std::size_t> reasons;
  for (const auto& a : annotations) {
    if (a.parsed.parsable()) continue;
    ++invalid;
    ++reasons[std::string(to_string(*a.parsed.failure_reason))];
  }
  if (annotations.empty() || static_cast<double>(invalid) <= max_invalid * static_cast<double>(annotations.size())) return;
  std::vector<std::string> parts;
  for (const auto& [k, v] : reasons) parts.push_back(k + "=" + std::to_string(v));
  throw StageAbort(what + ": " + std::to_string(invalid) + " of " + std::to_string(annotations.size()) +
                   " responses unparsable (" + join(parts, ", ") + ")");
}

std::string responses_digest(const std::vector<Annotation>& annotations) {
  std::string material;
  for (const auto& a : annotations) {
    material += a.response ? a.response->cache_key : std::string("-");
    material += '\n';
  }
  return sha256_hex(material);
}

}  // namespace

SelectionResult select_metrics(AnnotationSession& session, const PromptPlan& start, double start_f1,
                               const std::vector<DataRecord>& train, const std::vector<DataRecord>& validation,
                               std::vector<MetricName> candidates, const SelectionOptions& options) {
  if (!session.metrics()) throw UsageError("metric selection needs a metric table");
  if (train.empty() || validation.empty()) throw DataError("metric selection needs training and validation records");
  for (auto m : start.metrics) {
    candidates.erase(std::remove(candidates.begin(), candidates.end(), m), candidates.end());
  }

  SelectionResult result{{}, start, start_f1};
  result.trace.baseline_f1 = start_f1;
  int round = 0;
  while (!candidates.empty()) {
    ++round;
    const auto train_annotations = session.annotate(result.plan, train);
    std::vector<std::optional<std::string>> llm_labels;
    for (const auto& a : train_annotations) llm_labels.push_back(a.parsed.label);
    const auto ranking = rank_metrics(train, llm_labels, session.task().label_set, *session.metrics(), candidates,
                                      options.ranking);
    result.trace.rankings.push_back(ranking);

    bool accepted = false;
    for (const auto& ranked : ranking) {
      PromptPlan trial = result.plan;
      trial.metrics.push_back(ranked.metric);
      auto e = evaluate_prompt(PromptFactory(session, trial), validation, "validation");
      check_parsability(e.annotations, options.max_invalid_fraction,
                        "step 3 round " + std::to_string(round) + " with " + std::string(to_string(ranked.metric)));
      SelectionIteration it{round, ranked.metric, e.report.weighted_f1, false, responses_digest(e.annotations)};
      log_info("step 3: round " + std::to_string(round) + " + " + std::string(to_string(ranked.metric)) + " F1 " +
               format_fixed(it.validation_f1, 4) + " vs " + format_fixed(result.plan_f1, 4));
      if (it.validation_f1 > result.plan_f1) {
        it.accepted = true;
        result.plan = trial;
        result.plan_f1 = it.validation_f1;
        result.trace.selected.push_back(ranked.metric);
        candidates.erase(std::remove(candidates.begin(), candidates.end(), ranked.metric), candidates.end());
        accepted = true;
      }
      result.trace.iterations.push_back(std::move(it));
      if (accepted) break;
    }
    if (!accepted) break;
  }
  return result;
}

}  // namespace apt
