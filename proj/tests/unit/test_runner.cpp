#include <filesystem>

#include "apt/runner.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
using namespace apt::testing;
namespace fs = std::filesystem;

namespace {

RunConfig scenario_run(const TempDir& dir, const ScenarioOptions& o = {},
                       const nlohmann::json& overrides = nlohmann::json::object(),
                       const std::string& config_name = "config.json") {
  const auto files = write_scenario(dir.path(), o, overrides, config_name);
  return load_run_config(files.config);
}

std::shared_ptr<MockProvider> mock_for(const RunConfig& c) { return std::make_shared<MockProvider>(c.mock); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    out.push_back(text.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("config parsing resolves paths and rejects unknown keys") {
  TempDir dir;
  const auto c = scenario_run(dir);
  CHECK(c.dataset_path == dir.path() / "data.jsonl");
  CHECK(c.run_dir == dir.path() / "run");
  CHECK(c.task == "clickbait detection");
  CHECK(c.provider == "mock");
  CHECK(c.n_candidates == std::vector<std::size_t>{5});
  CHECK(c.hash() == load_run_config(dir / "config.json").hash());

  auto j = scenario_config({});
  j["llm.temprature"] = 0.2;
  CHECK_THROWS_AS(parse_run_config(j, dir.path()), UsageError);
  auto no_data = scenario_config({});
  no_data.erase("dataset.path");
  CHECK_THROWS_AS(parse_run_config(no_data, dir.path()), UsageError);
  auto wrong_type = scenario_config({});
  wrong_type["llm.parallelism"] = "four";
  CHECK_THROWS_AS(parse_run_config(wrong_type, dir.path()), UsageError);

  auto moved = scenario_config({}, "elsewhere");
  CHECK(parse_run_config(moved, dir.path()).hash() == c.hash());
  moved["seed.split"] = 7;
  CHECK(parse_run_config(moved, dir.path()).hash() != c.hash());
}

TEST_CASE("missing dataset is a usage error") {
  TempDir dir;
  auto c = scenario_run(dir);
  fs::remove(c.dataset_path);
  CHECK_THROWS_AS(cmd_tune(c, mock_for(c)), UsageError);
}

TEST_CASE("run directory lock and configuration binding") {
  TempDir dir;
  auto c = scenario_run(dir);
  {
    RunDirectory held(c.run_dir);
    CHECK_THROWS_AS(RunDirectory(c.run_dir), UsageError);
    held.bind_config(c);
    held.bind_config(c);
    auto other = c;
    other.split_seed = 99;
    CHECK_THROWS_AS(held.bind_config(other), UsageError);
  }
  RunDirectory again(c.run_dir);
  CHECK(again.read("config.sha256") == c.hash() + "\n");
}

TEST_CASE("tune, annotate and evaluate on the scenario") {
  TempDir dir;
  auto c = scenario_run(dir);
  auto mock = mock_for(c);
  const auto result = cmd_tune(c, mock);
  CHECK(result.plan.shot == ShotMode::few);
  CHECK(result.plan.n_exemplars == 5);
  CHECK(result.plan.metrics == std::vector<MetricName>{MetricName::toxicity});
  CHECK(result.plan.thought == ThoughtMode::cot);
  CHECK(result.step2.mode == ShotMode::few);
  CHECK(result.step3.selected == std::vector<MetricName>{MetricName::toxicity});
  CHECK(result.step4.chosen == ThoughtMode::cot);

  for (const auto* f : {"config.json", "splits.json", "metrics.json", "decisions/step2.json", "decisions/step3.json",
                        "decisions/step4.json", "prompts/final.plan.json", "prompts/final.json",
                        "prompts/step1.plan.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(c.run_dir / f));
  }
  const auto final_file = PromptFile::from_json(read_json(c.run_dir / "prompts/final.plan.json"));
  CHECK(final_file.plan == result.plan);
  const auto sample = read_text(c.run_dir / "prompts/final.json");
  CHECK(sample.find("\"Examples for thought\"") != std::string::npos);
  CHECK(sample.find("\"Toxicity\"") != std::string::npos);

  SUBCASE("rerun is served from the cache") {
    auto second = mock_for(c);
    const auto again = cmd_tune(c, second);
    CHECK(again.plan == result.plan);
    CHECK(second->chat_calls() == 0);
    CHECK(again.validation_f1 == result.validation_f1);
  }

  SUBCASE("annotate the test split and an unlabeled file") {
    const auto out = cmd_annotate(c, {}, mock_for(c));
    CHECK(out == c.run_dir / "annotations/test.jsonl");
    const auto splits = read_json(c.run_dir / "splits.json");
    const auto lines = split_lines(read_text(out));
    std::size_t rows = 0;
    for (const auto& l : lines) rows += !trim(l).empty();
    CHECK(rows == splits["test"].size());

    std::vector<DataRecord> fresh = {{"u1", "wow you will not believe this", std::nullopt},
                                     {"u2", "Parliament passes the budget", std::nullopt}};
    write_text(dir / "new.jsonl", records_jsonl(fresh, false));
    // The scenario reads metrics from the precomputed file only, so new records need rows there too.
    write_text(c.metrics_precomputed_path,
               read_text(c.metrics_precomputed_path) + scenario_metrics_jsonl(fresh, ScenarioOptions{}));
    AnnotateOptions opts;
    opts.input = dir / "new.jsonl";
    opts.output = dir / "new.out.jsonl";
    cmd_annotate(c, opts, mock_for(c));
    const auto labelled = split_lines(read_text(dir / "new.out.jsonl"));
    REQUIRE(labelled.size() >= 2);
    const auto first = nlohmann::json::parse(labelled[0]);
    CHECK(first["id"] == "u1");
    CHECK_FALSE(first.contains("gold"));
    CHECK(first["label"].is_string());
  }

  SUBCASE("tampered prompt files are rejected") {
    auto j = read_json(c.run_dir / "prompts/final.plan.json");
    j["plan"]["n_exemplars"] = 3;
    write_text(dir / "tampered.json", j.dump());
    AnnotateOptions opts;
    opts.prompt_file = dir / "tampered.json";
    CHECK_THROWS_AS(cmd_annotate(c, opts, mock_for(c)), DataError);
  }

  SUBCASE("evaluate compares four prompts and the tuned one wins") {
    const auto reports = cmd_evaluate(c, {}, mock_for(c));
    REQUIRE(reports.size() == 4);
    CHECK(reports[0].prompt_name == "cloze");
    CHECK(reports[3].prompt_name == "tuned");
    for (std::size_t i = 0; i < 3; ++i) CHECK(reports[3].weighted_f1 > reports[i].weighted_f1);
    CHECK(reports[0].weighted_f1 < reports[1].weighted_f1);
    CHECK(reports[1].weighted_f1 < reports[2].weighted_f1);
    const auto csv = read_text(c.run_dir / "reports/test/comparison.csv");
    CHECK(split_lines(csv).front() == EvaluationReport::csv_header());
    CHECK(fs::exists(c.run_dir / "reports/test/tuned/report.json"));
  }
}

TEST_CASE("ablations") {
  TempDir dir;
  auto c = scenario_run(dir);
  auto skip2 = c;
  skip2.skip_step2 = true;
  skip2.run_dir = dir.path() / "run-skip2";
  const auto a = cmd_tune(skip2, mock_for(c));
  CHECK(a.plan.shot == ShotMode::zero);
  CHECK(a.plan.metrics == std::vector<MetricName>{MetricName::toxicity});
  CHECK(read_json(skip2.run_dir / "decisions/step2.json")["skipped"] == true);

  auto skip3 = c;
  skip3.skip_step3 = true;
  skip3.run_dir = dir.path() / "run-skip3";
  const auto b = cmd_tune(skip3, mock_for(c));
  CHECK(b.plan.shot == ShotMode::few);
  CHECK(b.plan.n_exemplars == 5);
  CHECK(b.plan.metrics.empty());
  CHECK(read_json(skip3.run_dir / "decisions/step3.json")["skipped"] == true);
}

TEST_CASE("two clean runs write identical trees") {
  TempDir dir;
  const auto c1 = scenario_run(dir, {}, {{"run_dir", "run-a"}}, "a.json");
  const auto c2 = scenario_run(dir, {}, {{"run_dir", "run-b"}}, "b.json");
  cmd_tune(c1, mock_for(c1));
  cmd_tune(c2, mock_for(c2));
  const auto t1 = snapshot_tree(c1.run_dir);
  const auto t2 = snapshot_tree(c2.run_dir);
  CHECK(t1.size() == t2.size());
  CHECK(t1 == t2);
}

TEST_CASE("a crashed run resumes without repeating finished requests") {
  TempDir dir;
  const auto clean_cfg = scenario_run(dir, {}, {{"run_dir", "clean"}}, "clean.json");
  auto clean = mock_for(clean_cfg);
  cmd_tune(clean_cfg, clean);

  const auto cfg = scenario_run(dir, {}, {{"run_dir", "crashy"}}, "crashy.json");
  auto crashing = mock_for(cfg);
  crashing->crash_after(clean->chat_calls() / 2);
  CHECK_THROWS_AS(cmd_tune(cfg, crashing), SimulatedCrash);
  auto resumed = mock_for(cfg);
  cmd_tune(cfg, resumed);
  CHECK(crashing->chat_calls() + resumed->chat_calls() == clean->chat_calls());

  const auto a = snapshot_tree(clean_cfg.run_dir);
  const auto b = snapshot_tree(cfg.run_dir);
  for (const auto& [rel, bytes] : a) {
    if (rel.rfind("decisions/", 0) != 0 && rel.rfind("prompts/", 0) != 0) continue;
    CAPTURE(rel);
    REQUIRE(b.count(rel));
    CHECK(b.at(rel) == bytes);
  }
}

TEST_CASE("probe command") {
  TempDir dir;
  auto c = scenario_run(dir);
  const auto probes = cmd_probe(c, 3, mock_for(c));
  REQUIRE(probes.size() == 3);
  CHECK(*probes[0].null_prompt_seconds == doctest::Approx(0.21));
  CHECK_THROWS_AS(cmd_probe(c, 0, mock_for(c)), UsageError);
}
