#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "apt/core_model.hpp"
#include "apt/evaluator.hpp"
#include "apt/exemplar_selector.hpp"
#include "apt/gbdt.hpp"
#include "apt/llm_gateway.hpp"
#include "apt/metric_hub.hpp"
#include "apt/metric_selector.hpp"
#include "apt/mock_provider.hpp"
#include "apt/prompt_plan.hpp"
#include "apt/thought_gate.hpp"
#include "json.hpp"

namespace apt {

enum class Step2EvalSet { validation, merged };

/// Every setting of a run. Loaded from a flat JSON object with dotted keys.
struct RunConfig {
  std::filesystem::path run_dir = "run";

  std::filesystem::path dataset_path;
  std::optional<DatasetFormat> dataset_format;
  std::string dataset_name;
  std::optional<std::vector<std::string>> labels;
  std::string task;
  std::size_t subsample_cap = 3000;

  std::uint64_t split_seed = 42;
  std::uint64_t subsample_seed = 42;
  SplitRatios split_ratios;

  std::string provider = "mock";
  std::string base_url = "https://api.openai.com/v1";
  GatewayOptions gateway;
  int parallelism = 4;

  std::vector<std::size_t> n_candidates = {5};
  Step2EvalSet step2_eval_set = Step2EvalSet::validation;

  std::vector<MetricName> metrics{kAllMetrics.begin(), kAllMetrics.end()};
  MetricSource metrics_source = MetricSource::automatic;
  std::string metrics_service_url;
  std::filesystem::path metrics_precomputed_path;
  std::uint64_t stub_seed = 42;

  RankingOptions ranking;
  ThoughtSetting thought = ThoughtSetting::gate;
  bool skip_step2 = false;
  bool skip_step3 = false;
  BaselineParseOptions parse;
  double max_invalid_fraction = 0.5;

  MockConfig mock;

  /// Directory that relative paths in the file were resolved against.
  std::filesystem::path base_dir;

  /// Canonical flat form; excludes run_dir so equal settings hash equally wherever they run.
  nlohmann::ordered_json snapshot() const;
  std::string hash() const;
};

/// Parses a flat config object; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Exclusive owner of a run directory for the lifetime of the object.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path cache_dir() const { return root_ / "cache"; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  void write(const std::string& relative, const std::string& content) const;
  std::optional<std::string> read(const std::string& relative) const;

  /// Writes the config snapshot, or checks it against the stored one.
  void bind_config(const RunConfig& config) const;

 private:
  std::filesystem::path root_;
  int lock_fd_ = -1;
};

/// Saved prompt: plan, task and a digest over both.
struct PromptFile {
  PromptPlan plan;
  TaskSpec task;
  Step2EvalSet pool = Step2EvalSet::validation;
  std::string integrity;

  nlohmann::ordered_json to_json() const;
  /// Throws DataError when the stored digest does not match the content.
  static PromptFile from_json(const nlohmann::json& j);
  static std::string digest(const PromptPlan& plan, const TaskSpec& task, Step2EvalSet pool);
};

/// Shared state of a run: data, splits, gateway, metric table, session.
class RunContext {
 public:
  RunContext(const RunConfig& config, std::shared_ptr<ChatProvider> provider = nullptr);

  const RunConfig& config() const { return config_; }
  RunDirectory& dir() { return *dir_; }
  Gateway& gateway() { return *gateway_; }
  AnnotationSession& session() { return *session_; }
  const TaskSpec& task() const { return task_; }
  const MetricTable& metric_table() const { return table_; }
  const std::vector<DataRecord>& split(const std::string& name) const;
  std::vector<DataRecord> pool_records() const;

  /// Report files under reports/<split>/<name>/.
  void write_report(const std::string& split, const std::string& name, EvaluationReport& report,
                    std::span<const DataRecord> records, std::span<const Annotation> annotations);
  void write_prompt(const std::string& stem, const PromptPlan& plan);

 private:
  RunConfig config_;
  std::unique_ptr<RunDirectory> dir_;
  std::shared_ptr<ChatProvider> provider_;
  std::unique_ptr<Gateway> gateway_;
  TaskSpec task_;
  std::vector<DataRecord> all_;
  std::vector<DataRecord> train_;
  std::vector<DataRecord> validation_;
  std::vector<DataRecord> test_;
  MetricTable table_;
  std::unique_ptr<AnnotationSession> session_;
};

struct TuneResult {
  PromptPlan plan;
  ShotDecision step2;
  SelectionTrace step3;
  ThoughtDecision step4;
  double validation_f1 = 0.0;
};

std::shared_ptr<ChatProvider> make_provider(const RunConfig& config);

TuneResult cmd_tune(const RunConfig& config, std::shared_ptr<ChatProvider> provider = nullptr);

struct AnnotateOptions {
  /// Defaults to prompts/final.plan.json in the run directory.
  std::optional<std::filesystem::path> prompt_file;
  std::string split = "test";
  /// Annotate this file instead of a split; labels are optional.
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> output;
};

/// Returns the path of the written JSONL file.
std::filesystem::path cmd_annotate(const RunConfig& config, const AnnotateOptions& options,
                                   std::shared_ptr<ChatProvider> provider = nullptr);

struct EvaluateOptions {
  std::optional<std::filesystem::path> prompt_file;
  std::string split = "test";
};

/// Evaluates cloze, dictionary, json and the tuned prompt; writes reports/<split>/comparison.csv.
std::vector<EvaluationReport> cmd_evaluate(const RunConfig& config, const EvaluateOptions& options,
                                           std::shared_ptr<ChatProvider> provider = nullptr);

/// Takes `count` null probes and returns them.
std::vector<TimingProbe> cmd_probe(const RunConfig& config, int count, std::shared_ptr<ChatProvider> provider = nullptr);

/// Entry point of the apt-tune executable; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace apt
