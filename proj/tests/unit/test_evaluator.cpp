#include <chrono>
#include <random>

#include "apt/evaluator.hpp"
#include "apt/mock_provider.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
using namespace apt::testing;

TEST_CASE("weighted F1 of the worked example") {
  const std::vector<std::string> gold = {"A", "A", "B", "B"};
  const std::vector<std::optional<std::string>> pred = {"A", "B", "B", "B"};
  const auto r = weighted_prf(gold, pred);
  CHECK(r.f1 == doctest::Approx(0.7333333333333333).epsilon(1e-12));
  CHECK(r.precision == doctest::Approx(0.8333333333333333).epsilon(1e-12));
  CHECK(r.recall == doctest::Approx(0.75).epsilon(1e-12));
  REQUIRE(r.per_class.size() == 2);
  CHECK(r.per_class[0].label == "A");
  CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(0.8));
}

TEST_CASE("perfect, all-invalid and malformed inputs") {
  const std::vector<std::string> gold = {"A", "B", "C"};
  const std::vector<std::optional<std::string>> perfect = {"A", "B", "C"};
  const auto p = weighted_prf(gold, perfect);
  CHECK(p.f1 == 1.0);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  const std::vector<std::optional<std::string>> none(3, std::nullopt);
  const auto z = weighted_prf(gold, none);
  CHECK(z.f1 == 0.0);
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  const std::vector<std::optional<std::string>> short_pred = {"A"};
  CHECK_THROWS_AS(weighted_prf(gold, short_pred), DataError);
  CHECK_THROWS_AS(weighted_prf(std::vector<std::string>{}, std::vector<std::optional<std::string>>{}), DataError);
}

TEST_CASE("agrees with a brute-force confusion matrix on 1000 random instances") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + bounded_draw(rng, 200);
    const std::size_t k = 2 + bounded_draw(rng, 5);
    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(pool[bounded_draw(rng, k)]);
      const auto roll = bounded_draw(rng, 10);
      if (roll == 0) {
        pred.push_back(std::nullopt);
      } else if (roll == 1) {
        pred.push_back("zz");  // a label outside the gold classes
      } else {
        pred.push_back(pool[bounded_draw(rng, k)]);
      }
    }
    const auto got = weighted_prf(gold, pred);
    const auto want = brute_force_prf(gold, pred);
    CAPTURE(trial);
    CHECK(std::abs(got.f1 - want.f1) <= 1e-9);
    CHECK(std::abs(got.precision - want.precision) <= 1e-9);
    CHECK(std::abs(got.recall - want.recall) <= 1e-9);
    std::size_t right = 0;
    for (std::size_t i = 0; i < n; ++i) right += pred[i] && *pred[i] == gold[i];
    CHECK(std::abs(got.recall - static_cast<double>(right) / static_cast<double>(n)) <= 1e-9);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("time cost subtracts the probe and averages per token") {
  std::vector<TimingProbe> probes{{0.5, {}}, {std::nullopt, {}}};
  std::vector<ChatResponse> rs(1);
  rs[0].completion_tokens = 10;
  rs[0].request_seconds = 2.0;
  rs[0].probe_index = 0;
  CHECK(time_cost(rs, probes) == doctest::Approx(0.15).epsilon(1e-12));

  auto cached = rs[0];
  cached.from_cache = true;
  cached.request_seconds = 100.0;
  rs.push_back(cached);
  CHECK(time_cost(rs, probes) == doctest::Approx(0.15).epsilon(1e-12));

  auto fast = rs[0];
  fast.request_seconds = 0.1;
  const std::vector<ChatResponse> clamp{fast};
  CHECK(time_cost(clamp, probes) == 0.0);

  auto unprobed = rs[0];
  unprobed.probe_index = 1;
  const std::vector<ChatResponse> lost{unprobed};
  CHECK_FALSE(time_cost(lost, probes));
  const std::vector<ChatResponse> only_cached{cached};
  CHECK_FALSE(time_cost(only_cached, probes));
}

TEST_CASE("report on the scenario matches the mock oracle") {
  ScenarioOptions o;
  const auto records = scenario_records(o);
  const std::vector<DataRecord> sample(records.begin(), records.begin() + 60);
  auto mock = std::make_shared<MockProvider>(scenario_mock(o));
  GatewayOptions gopts;
  gopts.retry_base_delay = std::chrono::milliseconds(1);
  Gateway gw(mock, gopts);
  AnnotationSession session(gw, TaskSpec{"clickbait detection", LabelSet({"clickbait", "news"}), "synthetic"},
                            nullptr);
  const PromptFactory factory(session, PromptPlan::baseline(PromptKind::json));
  const auto e = evaluate_prompt(factory, sample, "validation");

  std::vector<std::string> gold;
  for (const auto& r : sample) gold.push_back(*r.gold_label);
  const auto oracle = brute_force_prf(gold, mock_predictions(sample, o, o.base_accuracy));
  CHECK(e.report.weighted_f1 == doctest::Approx(oracle.f1).epsilon(1e-12));
  CHECK(e.report.parsability == 1.0);
  CHECK(e.report.n_records == 60);
  CHECK(e.report.live_responses == 60);
  CHECK(e.report.split_name == "validation");
  CHECK(e.report.prompt_hash == factory.plan().digest());

  // Mock timing: latency + 0.01 s/token; probe = latency + 0.01.
  double sum = 0.0;
  for (const auto& a : e.annotations) {
    const double t = a.response->completion_tokens;
    sum += (0.01 * t - 0.01) / t;
  }
  REQUIRE(e.report.seconds_per_token);
  CHECK(*e.report.seconds_per_token == doctest::Approx(sum / 60.0).epsilon(1e-9));

  const auto again = evaluate_prompt(factory, sample, "validation");
  CHECK(again.report.cached_responses == 60);
  CHECK(again.report.weighted_f1 == e.report.weighted_f1);
  CHECK_FALSE(again.report.seconds_per_token);
  CHECK(again.report.to_json()["seconds_per_token"] == "unavailable");
}

TEST_CASE("csv and jsonl outputs") {
  CHECK(EvaluationReport::csv_header() ==
        "prompt,split,n_records,f1,precision,recall,parsability,seconds_per_token,prompt_hash,config_hash");
  EvaluationReport r;
  r.prompt_name = "json";
  r.split_name = "test";
  r.n_records = 4;
  r.weighted_f1 = 0.5;
  CHECK(r.csv_row().rfind("json,test,4,0.500000,", 0) == 0);
  CHECK(r.csv_row().find("unavailable") != std::string::npos);

  const std::vector<DataRecord> recs = {{"1", "t", "A"}, {"2", "u", "B"}};
  std::vector<Annotation> anns(2);
  anns[0] = {"1", std::nullopt, ParsedAnnotation::success("1", "A"), ""};
  anns[1] = {"2", std::nullopt, ParsedAnnotation::failure("2", FailureReason::bad_json), ""};
  const auto lines = annotations_jsonl(recs, anns);
  CHECK(lines ==
        "{\"id\":\"1\",\"gold\":\"A\",\"label\":\"A\",\"raw_response_ref\":null}\n"
        "{\"id\":\"2\",\"gold\":\"B\",\"label\":null,\"failure\":\"bad_json\",\"raw_response_ref\":null}\n");
  const auto report = build_report(recs, anns, {});
  CHECK(report.failures.at("bad_json") == 1);
  CHECK(report.confusion.counts.at("B").at(ConfusionTally::kInvalidPrediction) == 1);
  CHECK(report.parsability == 0.5);
}
