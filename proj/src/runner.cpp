#include "apt/runner.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "apt/common.hpp"
#include "apt/openai_provider.hpp"

namespace apt {

namespace {

std::string serialize_json_full(const nlohmann::ordered_json& j) { return serialize_json(j, -1); }

}  // namespace

namespace {

// Reads typed values out of the flat config object and remembers which keys were used.
class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& j) : j_(j) {
    if (!j_.is_object()) throw UsageError("config must be a JSON object");
  }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    try {
      return it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config key \"" + key + "\" has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  const nlohmann::json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw UsageError("unknown config key \"" + key + "\"");
    }
  }

 private:
  const nlohmann::json& j_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view to_string(Step2EvalSet s) { return s == Step2EvalSet::merged ? "merged" : "validation"; }

Step2EvalSet parse_eval_set(std::string_view s) {
  if (s == "validation") return Step2EvalSet::validation;
  if (s == "merged") return Step2EvalSet::merged;
  throw UsageError("step2.eval_set must be validation or merged");
}

std::string_view to_string(MetricSource s) {
  switch (s) {
    case MetricSource::automatic:
      return "auto";
    case MetricSource::precomputed:
      return "precomputed";
    case MetricSource::service:
      return "service";
    case MetricSource::stub:
      return "stub";
  }
  return "auto";
}

std::string relative_or_plain(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  auto rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ConfigReader r(j);
  RunConfig c;
  c.base_dir = base_dir;

  if (auto v = r.get<std::string>("run_dir")) c.run_dir = resolve(base_dir, *v);
  else c.run_dir = base_dir / "run";

  auto dataset = r.get<std::string>("dataset.path");
  if (!dataset || dataset->empty()) throw UsageError("config needs \"dataset.path\"");
  c.dataset_path = resolve(base_dir, *dataset);
  if (auto v = r.get<std::string>("dataset.format")) c.dataset_format = parse_dataset_format(*v);
  r.read("dataset.name", c.dataset_name);
  if (c.dataset_name.empty()) c.dataset_name = c.dataset_path.stem().string();
  c.labels = r.get<std::vector<std::string>>("dataset.labels");
  r.read("dataset.subsample_cap", c.subsample_cap);
  auto task = r.get<std::string>("task");
  if (!task || trim(*task).empty()) throw UsageError("config needs \"task\" (the task domain, e.g. \"sentiment\")");
  c.task = *task;

  r.read("seed.split", c.split_seed);
  r.read("seed.subsample", c.subsample_seed);
  r.read("seed.stub", c.stub_seed);
  if (auto ratios = r.get<std::vector<double>>("split.ratios")) {
    if (ratios->size() != 3) throw UsageError("split.ratios needs three numbers");
    c.split_ratios = {(*ratios)[0], (*ratios)[1], (*ratios)[2]};
  }

  r.read("llm.provider", c.provider);
  if (c.provider != "mock" && c.provider != "openai") throw UsageError("llm.provider must be mock or openai");
  r.read("llm.base_url", c.base_url);
  r.read("llm.chat_model", c.gateway.chat_model);
  r.read("llm.embedding_model", c.gateway.embedding_model);
  r.read("llm.temperature", c.gateway.temperature);
  r.read("llm.max_output_tokens", c.gateway.max_output_tokens);
  r.read("llm.system_preamble", c.gateway.system_preamble);
  r.read("llm.retry_budget", c.gateway.retry_budget);
  if (auto ms = r.get<int>("llm.retry_base_delay_ms")) c.gateway.retry_base_delay = std::chrono::milliseconds(*ms);
  r.read("llm.probe_cadence", c.gateway.probe_cadence);
  r.read("llm.rate_limit_rps", c.gateway.rate_limit_rps);
  r.read("llm.max_in_flight", c.gateway.max_in_flight);
  r.read("llm.cache", c.gateway.cache_enabled);
  r.read("llm.parallelism", c.parallelism);
  if (c.parallelism < 1) throw UsageError("llm.parallelism must be >= 1");
  if (c.gateway.temperature < 0) throw UsageError("llm.temperature must be >= 0");

  r.read("step2.n_candidates", c.n_candidates);
  if (c.n_candidates.empty()) throw UsageError("step2.n_candidates must not be empty");
  for (auto n : c.n_candidates) {
    if (n == 0) throw UsageError("step2.n_candidates entries must be >= 1");
  }
  if (auto v = r.get<std::string>("step2.eval_set")) c.step2_eval_set = parse_eval_set(*v);

  if (auto v = r.get<std::vector<std::string>>("metrics.enabled")) c.metrics = parse_metric_list(*v);
  if (auto v = r.get<std::string>("metrics.source")) c.metrics_source = parse_metric_source(*v);
  r.read("metrics.service_url", c.metrics_service_url);
  if (auto v = r.get<std::string>("metrics.precomputed_path")) c.metrics_precomputed_path = resolve(base_dir, *v);

  r.read("selector.folds", c.ranking.folds);
  r.read("selector.cv_seed", c.ranking.fold_seed);
  if (auto v = r.get<std::string>("selector.score")) {
    if (*v == "f1") c.ranking.score = CvScore::f1;
    else if (*v == "accuracy") c.ranking.score = CvScore::accuracy;
    else throw UsageError("selector.score must be f1 or accuracy");
  }
  r.read("selector.max_invalid_fraction", c.max_invalid_fraction);
  r.read("gbdt.rounds", c.ranking.params.rounds);
  r.read("gbdt.max_depth", c.ranking.params.max_depth);
  r.read("gbdt.learning_rate", c.ranking.params.learning_rate);
  r.read("gbdt.lambda", c.ranking.params.reg_lambda);
  r.read("gbdt.gamma", c.ranking.params.gamma);
  r.read("gbdt.min_child_weight", c.ranking.params.min_child_weight);
  r.read("gbdt.seed", c.ranking.params.seed);

  if (auto v = r.get<std::string>("thought")) c.thought = parse_thought_setting(*v);
  r.read("tune.skip_step2", c.skip_step2);
  r.read("tune.skip_step3", c.skip_step3);
  r.read("parse.strict_first_word", c.parse.strict_first_word);
  if (const auto* m = r.raw("mock")) c.mock = mock_config_from_json(*m);

  r.reject_unknown();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto text = read_file(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw UsageError("config " + path.string() + " is not valid JSON");
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_run_config(j, base);
}

nlohmann::ordered_json RunConfig::snapshot() const {
  nlohmann::ordered_json j;
  j["dataset.path"] = relative_or_plain(dataset_path, base_dir);
  j["dataset.format"] = std::string(dataset_format ? (*dataset_format == DatasetFormat::csv ? "csv" : "jsonl") : "auto");
  j["dataset.name"] = dataset_name;
  j["dataset.labels"] = labels ? nlohmann::ordered_json(*labels) : nlohmann::ordered_json(nullptr);
  j["dataset.subsample_cap"] = subsample_cap;
  j["task"] = task;
  j["seed.split"] = split_seed;
  j["seed.subsample"] = subsample_seed;
  j["seed.stub"] = stub_seed;
  j["split.ratios"] = {split_ratios.train, split_ratios.validation, split_ratios.test};
  j["llm.provider"] = provider;
  j["llm.base_url"] = base_url;
  j["llm.chat_model"] = gateway.chat_model;
  j["llm.embedding_model"] = gateway.embedding_model;
  j["llm.temperature"] = gateway.temperature;
  j["llm.max_output_tokens"] = gateway.max_output_tokens;
  j["llm.system_preamble"] = gateway.system_preamble;
  j["llm.retry_budget"] = gateway.retry_budget;
  j["llm.retry_base_delay_ms"] = gateway.retry_base_delay.count();
  j["llm.probe_cadence"] = gateway.probe_cadence;
  j["llm.rate_limit_rps"] = gateway.rate_limit_rps;
  j["llm.max_in_flight"] = gateway.max_in_flight;
  j["llm.cache"] = gateway.cache_enabled;
  j["llm.parallelism"] = parallelism;
  j["step2.n_candidates"] = n_candidates;
  j["step2.eval_set"] = std::string(to_string(step2_eval_set));
  j["metrics.enabled"] = nlohmann::ordered_json::array();
  for (auto m : metrics) j["metrics.enabled"].push_back(std::string(to_string(m)));
  j["metrics.source"] = std::string(to_string(metrics_source));
  j["metrics.service_url"] = metrics_service_url;
  j["metrics.precomputed_path"] = relative_or_plain(metrics_precomputed_path, base_dir);
  j["selector.folds"] = ranking.folds;
  j["selector.cv_seed"] = ranking.fold_seed;
  j["selector.score"] = ranking.score == CvScore::f1 ? "f1" : "accuracy";
  j["selector.max_invalid_fraction"] = max_invalid_fraction;
  j["gbdt.rounds"] = ranking.params.rounds;
  j["gbdt.max_depth"] = ranking.params.max_depth;
  j["gbdt.learning_rate"] = ranking.params.learning_rate;
  j["gbdt.lambda"] = ranking.params.reg_lambda;
  j["gbdt.gamma"] = ranking.params.gamma;
  j["gbdt.min_child_weight"] = ranking.params.min_child_weight;
  j["gbdt.seed"] = ranking.params.seed;
  j["thought"] = std::string(to_string(thought));
  j["tune.skip_step2"] = skip_step2;
  j["tune.skip_step3"] = skip_step3;
  j["parse.strict_first_word"] = parse.strict_first_word;
  j["mock"] = provider == "mock" ? to_json(mock) : nlohmann::ordered_json(nullptr);
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(snapshot().dump()); }

RunDirectory::RunDirectory(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
  const auto lock_path = root_ / ".lock";
  lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw Error("cannot open lock file " + lock_path.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw UsageError("run directory " + root_.string() + " is in use by another process");
  }
}

RunDirectory::~RunDirectory() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

void RunDirectory::write(const std::string& relative, const std::string& content) const {
  const auto target = root_ / relative;
  std::filesystem::create_directories(target.parent_path());
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, target);
}

std::optional<std::string> RunDirectory::read(const std::string& relative) const {
  const auto p = root_ / relative;
  if (!std::filesystem::exists(p)) return std::nullopt;
  return read_file(p);
}

void RunDirectory::bind_config(const RunConfig& config) const {
  const auto snapshot = serialize_json_full(config.snapshot()) + "\n";
  if (auto existing = read("config.json")) {
    if (*existing != snapshot) {
      throw UsageError("run directory " + root_.string() + " belongs to a different configuration");
    }
    return;
  }
  write("config.json", snapshot);
  write("config.sha256", config.hash() + "\n");
}

std::string PromptFile::digest(const PromptPlan& plan, const TaskSpec& task, Step2EvalSet pool) {
  nlohmann::ordered_json j;
  j["plan"] = plan.to_json();
  j["task"] = task.task_domain;
  j["labels"] = task.label_set.labels();
  j["dataset"] = task.dataset_name;
  j["pool"] = std::string(to_string(pool));
  return sha256_hex(serialize_json_full(j));
}

nlohmann::ordered_json PromptFile::to_json() const {
  nlohmann::ordered_json j;
  j["plan"] = plan.to_json();
  j["task"] = task.task_domain;
  j["labels"] = task.label_set.labels();
  j["dataset"] = task.dataset_name;
  j["pool"] = std::string(to_string(pool));
  j["integrity"] = digest(plan, task, pool);
  return j;
}

PromptFile PromptFile::from_json(const nlohmann::json& j) {
  try {
    PromptFile f{PromptPlan::from_json(j.at("plan")),
                 TaskSpec{j.at("task").get<std::string>(), LabelSet(j.at("labels").get<std::vector<std::string>>()),
                          j.at("dataset").get<std::string>()},
                 parse_eval_set(j.at("pool").get<std::string>()), j.at("integrity").get<std::string>()};
    if (digest(f.plan, f.task, f.pool) != f.integrity) throw DataError("prompt file integrity check failed");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prompt file: ") + e.what());
  }
}

std::shared_ptr<ChatProvider> make_provider(const RunConfig& config) {
  if (config.provider == "mock") return std::make_shared<MockProvider>(config.mock);
  OpenAiEndpoint ep;
  ep.base_url = config.base_url;
  ep.api_key = api_key_from_env();
  if (ep.api_key.empty()) throw UsageError("APT_API_KEY is not set");
  return std::make_shared<OpenAiProvider>(ep);
}

RunContext::RunContext(const RunConfig& config, std::shared_ptr<ChatProvider> provider)
    : config_(config),
      provider_(provider ? std::move(provider) : make_provider(config)),
      task_{config.task, LabelSet({"a", "b"}), config.dataset_name} {
  if (!std::filesystem::exists(config_.dataset_path)) {
    throw UsageError("dataset " + config_.dataset_path.string() + " does not exist");
  }
  dir_ = std::make_unique<RunDirectory>(config_.run_dir);
  dir_->bind_config(config_);

  LoadOptions load;
  if (config_.labels) load.labels = LabelSet(*config_.labels);
  const auto format = config_.dataset_format.value_or(dataset_format_from_path(config_.dataset_path));
  auto loaded = load_dataset(config_.dataset_path, format, load);
  if (!loaded.labels) throw DataError("dataset has no label set");
  task_.label_set = *loaded.labels;
  all_ = stratified_subsample(loaded.records, task_.label_set, config_.subsample_cap, config_.subsample_seed);

  const auto split = split_dataset(all_, task_.label_set, config_.split_seed, config_.split_ratios);
  const auto split_bytes = serialize_json_full(to_json(split)) + "\n";
  if (auto existing = dir_->read("splits.json")) {
    if (*existing != split_bytes) throw DataError("splits.json does not match the dataset; use a fresh run directory");
  } else {
    dir_->write("splits.json", split_bytes);
  }
  train_ = select_records(all_, split.train_ids);
  validation_ = select_records(all_, split.validation_ids);
  test_ = select_records(all_, split.test_ids);

  GatewayOptions gw = config_.gateway;
  gw.cache_dir = dir_->cache_dir();
  gateway_ = std::make_unique<Gateway>(provider_, gw);

  if (!config_.metrics.empty()) {
    MetricAssemblyOptions mo;
    mo.metrics = config_.metrics;
    mo.source = config_.metrics_source;
    if (!config_.metrics_precomputed_path.empty()) mo.precomputed_path = config_.metrics_precomputed_path;
    if (!config_.metrics_service_url.empty()) mo.service = MetricServiceEndpoint{config_.metrics_service_url};
    mo.stub_seed = config_.stub_seed;
    mo.dataset_id = config_.dataset_name;
    // Metrics are computed once per run and frozen in metrics.json.
    if (auto existing = dir_->read("metrics.json")) {
      table_ = MetricTable::from_json(nlohmann::json::parse(*existing));
    } else {
      table_ = assemble_metric_table(all_, mo);
      dir_->write("metrics.json", serialize_json_full(table_.to_json()) + "\n");
    }
    std::vector<std::string> ids;
    for (const auto& r : all_) ids.push_back(r.id);
    table_.require_coverage(ids, config_.metrics);
  }

  session_ = std::make_unique<AnnotationSession>(*gateway_, task_, &table_,
                                                 SessionOptions{config_.parallelism, config_.parse});
}

const std::vector<DataRecord>& RunContext::split(const std::string& name) const {
  if (name == "train") return train_;
  if (name == "validation") return validation_;
  if (name == "test") return test_;
  throw UsageError("unknown split \"" + name + "\" (expected train, validation or test)");
}

std::vector<DataRecord> RunContext::pool_records() const {
  auto pool = train_;
  if (config_.step2_eval_set == Step2EvalSet::merged) pool.insert(pool.end(), validation_.begin(), validation_.end());
  return pool;
}

void RunContext::write_report(const std::string& split, const std::string& name, EvaluationReport& report,
                              std::span<const DataRecord> records, std::span<const Annotation> annotations) {
  report.config_hash = config_.hash();
  const std::string base = "reports/" + split + "/" + name + "/";
  dir_->write(base + "report.json", serialize_json_full(report.to_json()) + "\n");
  dir_->write(base + "report.csv", EvaluationReport::csv_header() + "\n" + report.csv_row() + "\n");
  dir_->write(base + "annotations.jsonl", annotations_jsonl(records, annotations));
}

void RunContext::write_prompt(const std::string& stem, const PromptPlan& plan) {
  const PromptFile file{plan, task_, config_.step2_eval_set, {}};
  dir_->write("prompts/" + stem + ".plan.json", serialize_json_full(file.to_json()) + "\n");
  // A rendered sample for the first validation record.
  if (!validation_.empty()) {
    session_->prepare(plan, {validation_.front()});
    dir_->write("prompts/" + stem + ".json", serialize(session_->build(plan, validation_.front())) + "\n");
  }
}

TuneResult cmd_tune(const RunConfig& config, std::shared_ptr<ChatProvider> provider) {
  RunContext ctx(config, std::move(provider));
  auto& session = ctx.session();
  const auto& train = ctx.split("train");
  const auto& validation = ctx.split("validation");
  TuneResult out;

  // Step 1: JSON template.
  PromptPlan plan = PromptPlan::baseline(PromptKind::json);
  ctx.write_prompt("step1", plan);
  log_info("step 1: JSON template prompt");

  // Step 2: few-shot gate.
  double plan_f1 = 0.0;
  session.set_pool(ctx.pool_records());
  if (config.skip_step2) {
    auto e = evaluate_prompt(PromptFactory(session, plan), validation, "validation");
    plan_f1 = e.report.weighted_f1;
    out.step2.baseline_f1 = plan_f1;
    nlohmann::ordered_json j;
    j["skipped"] = true;
    j["baseline_f1"] = plan_f1;
    ctx.dir().write("decisions/step2.json", serialize_json_full(j) + "\n");
  } else {
    std::vector<DataRecord> eval = validation;
    if (config.step2_eval_set == Step2EvalSet::merged) eval.insert(eval.end(), train.begin(), train.end());
    auto gate = run_shot_gate(session, plan, eval, config.n_candidates,
                              config.step2_eval_set == Step2EvalSet::merged ? "merged" : "validation");
    out.step2 = gate.decision;
    plan = gate.plan;
    plan_f1 = gate.plan_f1;
    if (config.step2_eval_set == Step2EvalSet::merged) {
      plan_f1 = evaluate_prompt(PromptFactory(session, plan), validation, "validation").report.weighted_f1;
    }
    nlohmann::ordered_json j = gate.decision.to_json();
    j["eval_set"] = std::string(to_string(config.step2_eval_set));
    ctx.dir().write("decisions/step2.json", serialize_json_full(j) + "\n");
  }
  ctx.write_prompt("step2", plan);

  // Step 3: metric selection.
  if (config.skip_step3 || config.metrics.empty()) {
    out.step3.baseline_f1 = plan_f1;
    nlohmann::ordered_json j = out.step3.to_json();
    j["skipped"] = true;
    ctx.dir().write("decisions/step3.json", serialize_json_full(j) + "\n");
  } else {
    SelectionOptions so{config.ranking, config.max_invalid_fraction};
    auto sel = select_metrics(session, plan, plan_f1, train, validation, config.metrics, so);
    out.step3 = sel.trace;
    plan = sel.plan;
    plan_f1 = sel.plan_f1;
    ctx.dir().write("decisions/step3.json", serialize_json_full(sel.trace.to_json()) + "\n");
  }
  ctx.write_prompt("step3", plan);

  // Step 4: thought extension.
  auto thought = run_thought_gate(session, plan, validation, config.thought);
  out.step4 = thought.decision;
  if (!thought.evaluations.empty()) {
    plan = thought.plan;
    plan_f1 = thought.plan_f1;
  }
  for (auto& [mode, e] : thought.evaluations) {
    ctx.write_report("validation", "step4-" + std::string(to_string(mode)), e.report, validation, e.annotations);
  }
  ctx.dir().write("decisions/step4.json", serialize_json_full(thought.decision.to_json()) + "\n");
  ctx.write_prompt("step4", plan);
  ctx.write_prompt("final", plan);

  out.plan = plan;
  out.validation_f1 = plan_f1;
  log_info("tuned prompt: " + plan.summary() + " (validation F1 " + format_fixed(plan_f1, 4) + ")");
  return out;
}

namespace {

PromptFile load_prompt_file(RunContext& ctx, const std::optional<std::filesystem::path>& path) {
  std::string text;
  if (path) {
    text = read_file(*path);
  } else if (auto stored = ctx.dir().read("prompts/final.plan.json")) {
    text = *stored;
  } else {
    throw UsageError("no tuned prompt in " + ctx.dir().root().string() + "; run tune first or pass --prompt");
  }
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError("prompt file is not valid JSON");
  auto file = PromptFile::from_json(j);
  if (!(file.task.label_set == ctx.task().label_set)) {
    throw DataError("prompt file labels differ from the dataset labels");
  }
  return file;
}

std::vector<DataRecord> exemplar_pool_for(const RunContext& ctx, const PromptFile& file) {
  auto pool = ctx.split("train");
  if (file.pool == Step2EvalSet::merged) {
    const auto& v = ctx.split("validation");
    pool.insert(pool.end(), v.begin(), v.end());
  }
  return pool;
}

}  // namespace

std::filesystem::path cmd_annotate(const RunConfig& config, const AnnotateOptions& options,
                                   std::shared_ptr<ChatProvider> provider) {
  RunContext ctx(config, std::move(provider));
  const auto file = load_prompt_file(ctx, options.prompt_file);
  auto& session = ctx.session();
  if (file.plan.shot == ShotMode::few) session.set_pool(exemplar_pool_for(ctx, file));

  std::vector<DataRecord> records;
  std::string name = options.split;
  std::optional<MetricTable> extra;
  if (options.input) {
    LoadOptions load;
    load.labels = ctx.task().label_set;
    load.require_labels = false;
    records = load_dataset(*options.input, dataset_format_from_path(*options.input), load).records;
    name = options.input->stem().string();
    if (!file.plan.metrics.empty()) {
      MetricAssemblyOptions mo;
      mo.metrics = file.plan.metrics;
      mo.source = config.metrics_source;
      if (!config.metrics_precomputed_path.empty()) mo.precomputed_path = config.metrics_precomputed_path;
      if (!config.metrics_service_url.empty()) mo.service = MetricServiceEndpoint{config.metrics_service_url};
      mo.stub_seed = config.stub_seed;
      mo.dataset_id = config.dataset_name;
      extra = assemble_metric_table(records, mo);
    }
  } else {
    records = ctx.split(options.split);
  }

  std::vector<Annotation> annotations;
  if (extra) {
    AnnotationSession local(ctx.gateway(), ctx.task(), &*extra, session.options());
    if (file.plan.shot == ShotMode::few) local.set_pool(exemplar_pool_for(ctx, file));
    annotations = local.annotate(file.plan, records);
  } else {
    if (!file.plan.metrics.empty()) {
      std::vector<std::string> ids;
      for (const auto& r : records) ids.push_back(r.id);
      ctx.metric_table().require_coverage(ids, file.plan.metrics);
    }
    annotations = session.annotate(file.plan, records);
  }

  const auto content = annotations_jsonl(records, annotations);
  if (options.output) {
    std::filesystem::create_directories(options.output->parent_path().empty() ? "." : options.output->parent_path());
    std::ofstream out(*options.output, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + options.output->string());
    out << content;
    return *options.output;
  }
  const std::string rel = "annotations/" + name + ".jsonl";
  ctx.dir().write(rel, content);
  return ctx.dir().path(rel);
}

std::vector<EvaluationReport> cmd_evaluate(const RunConfig& config, const EvaluateOptions& options,
                                           std::shared_ptr<ChatProvider> provider) {
  RunContext ctx(config, std::move(provider));
  const auto file = load_prompt_file(ctx, options.prompt_file);
  auto& session = ctx.session();
  const auto& records = ctx.split(options.split);
  if (file.plan.shot == ShotMode::few) session.set_pool(exemplar_pool_for(ctx, file));

  const std::vector<std::pair<std::string, PromptPlan>> prompts = {
      {"cloze", PromptPlan::baseline(PromptKind::cloze)},
      {"dictionary", PromptPlan::baseline(PromptKind::dictionary)},
      {"json", PromptPlan::baseline(PromptKind::json)},
      {"tuned", file.plan},
  };
  std::vector<EvaluationReport> reports;
  std::string csv = EvaluationReport::csv_header() + "\n";
  for (const auto& [name, plan] : prompts) {
    auto e = evaluate_prompt(PromptFactory(session, plan), records, options.split, name);
    ctx.write_report(options.split, name, e.report, records, e.annotations);
    csv += e.report.csv_row() + "\n";
    reports.push_back(e.report);
  }
  ctx.dir().write("reports/" + options.split + "/comparison.csv", csv);
  return reports;
}

std::vector<TimingProbe> cmd_probe(const RunConfig& config, int count, std::shared_ptr<ChatProvider> provider) {
  if (count < 1) throw UsageError("probe count must be >= 1");
  GatewayOptions gw = config.gateway;
  gw.cache_enabled = false;
  Gateway gateway(provider ? std::move(provider) : make_provider(config), gw);
  std::vector<TimingProbe> out;
  for (int i = 0; i < count; ++i) out.push_back(gateway.probe_null());
  return out;
}

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitStage = 3;
constexpr int kExitTransport = 4;

void print_reports(const std::vector<EvaluationReport>& reports) {
  std::cout << EvaluationReport::csv_header() << "\n";
  for (const auto& r : reports) std::cout << r.csv_row() << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Automatic prompt tuning for LLM text annotation", "apt-tune"};
  app.require_subcommand(1);
  std::string config_path;
  std::string run_dir;
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log stage progress");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  auto* tune = app.add_subcommand("tune", "Run steps 1-4 and write the tuned prompt");
  bool skip2 = false;
  bool skip3 = false;
  std::string thought;
  std::size_t crash_after = 0;
  tune->add_option("--config", config_path, "Config file")->required();
  tune->add_option("--run-dir", run_dir, "Override run_dir");
  tune->add_flag("--skip-step2", skip2, "Keep the zero-shot prompt");
  tune->add_flag("--skip-step3", skip3, "Do not add NLP metrics");
  tune->add_option("--thought", thought, "gate | force-cot | force-tot | off");
  tune->add_option("--mock-crash-after", crash_after)->group("");

  auto* annotate = app.add_subcommand("annotate", "Label a split or a file with a tuned prompt");
  std::string prompt_path;
  std::string split = "test";
  std::string input;
  std::string output;
  annotate->add_option("--config", config_path, "Config file")->required();
  annotate->add_option("--run-dir", run_dir, "Override run_dir");
  annotate->add_option("--prompt", prompt_path, "Prompt plan file (default: the run's final prompt)");
  annotate->add_option("--split", split, "train | validation | test");
  annotate->add_option("--input", input, "Dataset file to annotate instead of a split");
  annotate->add_option("--output", output, "Output JSONL path");

  auto* evaluate = app.add_subcommand("evaluate", "Compare cloze, dictionary, json and tuned prompts");
  evaluate->add_option("--config", config_path, "Config file")->required();
  evaluate->add_option("--run-dir", run_dir, "Override run_dir");
  evaluate->add_option("--prompt", prompt_path, "Prompt plan file (default: the run's final prompt)");
  evaluate->add_option("--split", split, "train | validation | test");

  auto* probe = app.add_subcommand("probe", "Measure the null-prompt round trip");
  int probe_count = 3;
  probe->add_option("--config", config_path, "Config file")->required();
  probe->add_option("--count", probe_count, "Number of probes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::info : LogLevel::warn);

  try {
    auto config = load_run_config(config_path);
    if (!run_dir.empty()) config.run_dir = run_dir;

    if (*tune) {
      if (skip2) config.skip_step2 = true;
      if (skip3) config.skip_step3 = true;
      if (!thought.empty()) config.thought = parse_thought_setting(thought);
      std::shared_ptr<ChatProvider> provider;
      if (crash_after > 0) {
        if (config.provider != "mock") throw UsageError("--mock-crash-after needs the mock provider");
        auto mock = std::make_shared<MockProvider>(config.mock);
        mock->crash_after(crash_after);
        provider = mock;
      }
      const auto result = cmd_tune(config, provider);
      std::cout << "plan: " << result.plan.summary() << "\n";
      std::cout << "validation_f1: " << format_fixed(result.validation_f1, 4) << "\n";
      std::cout << "prompt: " << (config.run_dir / "prompts" / "final.plan.json").string() << "\n";
    } else if (*annotate) {
      AnnotateOptions opts;
      if (!prompt_path.empty()) opts.prompt_file = prompt_path;
      opts.split = split;
      if (!input.empty()) opts.input = input;
      if (!output.empty()) opts.output = output;
      std::cout << cmd_annotate(config, opts).string() << "\n";
    } else if (*evaluate) {
      EvaluateOptions opts;
      if (!prompt_path.empty()) opts.prompt_file = prompt_path;
      opts.split = split;
      print_reports(cmd_evaluate(config, opts));
    } else if (*probe) {
      for (const auto& p : cmd_probe(config, probe_count)) {
        std::cout << (p.available() ? format_fixed(*p.null_prompt_seconds, 6) : std::string("unavailable")) << "\n";
      }
    }
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "apt-tune: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TransportError& e) {
    std::cerr << "apt-tune: transport failure: " << e.what() << "\n";
    return kExitTransport;
  } catch (const Error& e) {
    std::cerr << "apt-tune: stage aborted: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "apt-tune: unexpected failure: " << e.what() << "\n";
    return kExitStage;
  }
}

}  // namespace apt
