#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "apt/core_model.hpp"
#include "apt/exemplar_pool.hpp"
#include "apt/llm_gateway.hpp"
#include "apt/metric_hub.hpp"
#include "apt/prompt_plan.hpp"
#include "apt/response_parser.hpp"
#include "apt/thought_ext.hpp"

namespace apt {

struct SessionOptions {
  int parallelism = 4;
  BaselineParseOptions parse;
};

/// One annotated record.
struct Annotation {
  std::string record_id;
  std::optional<ChatResponse> response;
  ParsedAnnotation parsed;
  std::string error;
};

/// Everything prompt construction needs across stages: the task, the gateway, the
/// exemplar pool with its embeddings, the frozen metric table and exemplar explanations.
class AnnotationSession {
 public:
  AnnotationSession(Gateway& gateway, TaskSpec task, const MetricTable* metrics, SessionOptions options = {});

  const TaskSpec& task() const { return task_; }
  Gateway& gateway() { return gateway_; }
  const SessionOptions& options() const { return options_; }
  const MetricTable* metrics() const { return metrics_; }

  /// Replaces the exemplar pool; embeds every pool record.
  void set_pool(const std::vector<DataRecord>& pool_records);
  bool has_pool() const { return !pool_.empty(); }

  std::vector<double> embedding(const DataRecord& record);
  void ensure_embeddings(const std::vector<DataRecord>& records);

  /// Top-n pool exemplars for `record`, never including the record itself.
  std::vector<Exemplar> exemplars_for(const DataRecord& record, std::size_t n);

  /// Computes embeddings and, for few-shot thought plans, exemplar explanations.
  void prepare(const PromptPlan& plan, const std::vector<DataRecord>& records);
  /// Prompt for one record; call prepare() first for few-shot thought plans.
  PromptDocument build(const PromptPlan& plan, const DataRecord& record);

  /// Builds, sends and parses prompts for `records`. Transport failures become invalid
  /// annotations; any other failure is rethrown.
  std::vector<Annotation> annotate(const PromptPlan& plan, const std::vector<DataRecord>& records);

  /// Explanations gathered so far for a thought mode.
  ExplanationSet explanations(ThoughtMode mode) const;

 private:
  Gateway& gateway_;
  TaskSpec task_;
  const MetricTable* metrics_;
  SessionOptions options_;
  ExemplarPool pool_;
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<double>> embeddings_;  // by text
  std::map<ThoughtMode, ExplanationSet> explanations_;
};

/// Produces the prompt of a fixed plan for any record.
class PromptFactory {
 public:
  PromptFactory(AnnotationSession& session, PromptPlan plan);

  const PromptPlan& plan() const { return plan_; }
  AnnotationSession& session() const { return *session_; }
  PromptDocument operator()(const DataRecord& record) const { return session_->build(plan_, record); }

 private:
  AnnotationSession* session_;
  PromptPlan plan_;
};

}  // namespace apt
