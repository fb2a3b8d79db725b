#include "apt/session.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "apt/common.hpp"

namespace apt {

AnnotationSession::AnnotationSession(Gateway& gateway, TaskSpec task, const MetricTable* metrics,
                                     SessionOptions options)
    : gateway_(gateway), task_(std::move(task)), metrics_(metrics), options_(options) {}

void AnnotationSession::ensure_embeddings(const std::vector<DataRecord>& records) {
  std::vector<std::string> todo;
  {
    std::lock_guard lock(mutex_);
    std::set<std::string> queued;
    for (const auto& r : records) {
      if (!embeddings_.count(r.text) && queued.insert(r.text).second) todo.push_back(r.text);
    }
  }
  if (todo.empty()) return;
  std::vector<std::vector<double>> values(todo.size());
  std::vector<std::exception_ptr> errors(todo.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        values[i] = gateway_.embed(todo[i]).values;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options_.parallelism)), todo.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < todo.size(); ++i) embeddings_.emplace(todo[i], std::move(values[i]));
}

std::vector<double> AnnotationSession::embedding(const DataRecord& record) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = embeddings_.find(record.text); it != embeddings_.end()) return it->second;
  }
  auto v = gateway_.embed(record.text).values;
  std::lock_guard lock(mutex_);
  embeddings_.emplace(record.text, v);
  return v;
}

void AnnotationSession::set_pool(const std::vector<DataRecord>& pool_records) {
  ensure_embeddings(pool_records);
  ExemplarPool pool;
  for (const auto& r : pool_records) {
    if (!r.gold_label) throw DataError("exemplar pool record \"" + r.id + "\" has no gold label");
    pool.add({r.id, r.text, *r.gold_label, embedding(r)});
  }
  pool_ = std::move(pool);
}

std::vector<Exemplar> AnnotationSession::exemplars_for(const DataRecord& record, std::size_t n) {
  if (pool_.empty()) throw UsageError("few-shot prompts need an exemplar pool");
  const auto query = embedding(record);
  return top_n_exemplars(pool_, query, n, record.id);
}

void AnnotationSession::prepare(const PromptPlan& plan, const std::vector<DataRecord>& records) {
  plan.validate();
  if (plan.shot != ShotMode::few) return;
  ensure_embeddings(records);
  if (plan.thought == ThoughtMode::none) return;

  std::vector<Exemplar> needed;
  std::set<std::string> queued;
  {
    const auto known = explanations(plan.thought);
    for (const auto& r : records) {
      for (auto& e : exemplars_for(r, plan.n_exemplars)) {
        if (known.explanations.count(e.id)) continue;
        if (std::find(known.dropped.begin(), known.dropped.end(), e.id) != known.dropped.end()) continue;
        if (queued.insert(e.id).second) needed.push_back(std::move(e));
      }
    }
  }
  if (needed.empty()) return;
  std::sort(needed.begin(), needed.end(), [](const Exemplar& a, const Exemplar& b) { return a.id < b.id; });
  auto fresh = generate_explanations(needed, task_, plan.thought, gateway_, options_.parallelism);
  std::lock_guard lock(mutex_);
  auto& set = explanations_[plan.thought];
  for (auto& [id, text] : fresh.explanations) set.explanations[id] = std::move(text);
  for (auto& id : fresh.dropped) set.dropped.push_back(std::move(id));
}

ExplanationSet AnnotationSession::explanations(ThoughtMode mode) const {
  std::lock_guard lock(mutex_);
  auto it = explanations_.find(mode);
  return it == explanations_.end() ? ExplanationSet{} : it->second;
}

PromptDocument AnnotationSession::build(const PromptPlan& plan, const DataRecord& record) {
  plan.validate();
  if (plan.kind != PromptKind::json) return build_baseline_prompt(plan.kind, task_, record);

  auto doc = build_initial_prompt(task_, record);
  std::vector<Exemplar> exemplars;
  if (plan.shot == ShotMode::few) {
    exemplars = exemplars_for(record, plan.n_exemplars);
    doc = attach_examples(doc, exemplars);
  }
  for (auto metric : plan.metrics) {
    if (!metrics_) throw UsageError("plan uses metrics but no metric table is loaded");
    doc = attach_metric(doc, metric_key(metric), render_metric_fragment(metrics_->at(record.id, metric)));
  }
  if (plan.thought != ThoughtMode::none) {
    ThoughtVariant variant{plan.thought, {}};
    std::vector<Exemplar> explained;
    if (plan.shot == ShotMode::few) {
      const auto known = explanations(plan.thought);
      for (const auto& e : exemplars) {
        if (auto it = known.explanations.find(e.id); it != known.explanations.end()) {
          variant.explanations.emplace(e.id, it->second);
          explained.push_back(e);
        } else if (std::find(known.dropped.begin(), known.dropped.end(), e.id) == known.dropped.end()) {
          throw UsageError("explanations for exemplar \"" + e.id + "\" were not prepared");
        }
      }
    }
    if (plan.shot == ShotMode::few && explained.empty()) {
      // Every exemplar of this record lost its explanation.
      doc = doc.with_augmentation(keys::thought, std::string(thought_instruction(plan.thought)));
    } else {
      doc = inject_thought(doc, variant, explained);
    }
  }
  return doc;
}

std::vector<Annotation> AnnotationSession::annotate(const PromptPlan& plan, const std::vector<DataRecord>& records) {
  prepare(plan, records);
  std::vector<ChatRequest> requests;
  requests.reserve(records.size());
  for (const auto& r : records) requests.push_back(gateway_.make_request(serialize(build(plan, r))));

  auto outcomes = gateway_.annotate_batch(requests, options_.parallelism);
  std::vector<Annotation> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& o = outcomes[i];
    if (o.error && !o.transport_failure) std::rethrow_exception(o.error);
    Annotation a;
    a.record_id = records[i].id;
    if (o.ok()) {
      a.parsed = parse_response(o.response->raw_text, task_.label_set, plan.kind, records[i].id, options_.parse);
      a.response = std::move(o.response);
    } else {
      a.parsed = ParsedAnnotation::failure(records[i].id, FailureReason::transport_failure);
      a.error = o.error_message;
    }
    out.push_back(std::move(a));
  }
  return out;
}

PromptFactory::PromptFactory(AnnotationSession& session, PromptPlan plan) : session_(&session), plan_(std::move(plan)) {
  plan_.validate();
}

}  // namespace apt
