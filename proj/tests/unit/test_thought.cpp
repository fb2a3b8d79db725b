#include "apt/mock_provider.hpp"
#include "apt/thought_ext.hpp"
#include "apt/thought_gate.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
using namespace apt::testing;

namespace {

const TaskSpec kTask{"clickbait detection", LabelSet({"clickbait", "news"}), "synthetic"};

std::vector<Exemplar> some_exemplars(std::size_t n, const std::string& marker = "") {
  std::vector<Exemplar> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"e" + std::to_string(i), "exemplar text " + std::to_string(i) + (i % 2 ? marker : ""),
                   i % 2 ? "clickbait" : "news"});
  }
  return out;
}

GatewayOptions quick() {
  GatewayOptions g;
  g.retry_budget = 0;
  g.retry_base_delay = std::chrono::milliseconds(1);
  return g;
}

}  // namespace

TEST_CASE("instructions are exact") {
  CHECK(thought_instruction(ThoughtMode::cot) == "Let's think step by step.");
  CHECK(thought_instruction(ThoughtMode::tot).rfind("Imagine three different experts are answering this question.",
                                                   0) == 0);
  CHECK_THROWS_AS(thought_instruction(ThoughtMode::none), UsageError);
  CHECK(parse_thought_mode("ToT") == ThoughtMode::tot);
  CHECK_THROWS(parse_thought_mode("got"));
}

TEST_CASE("injection rules") {
  const DataRecord r{"1", "wow what happened", "clickbait"};
  const auto base = build_initial_prompt(kTask, r);
  const auto cot = inject_thought(base, {ThoughtMode::cot, {}});
  CHECK(cot.body()["Thought"] == "Let's think step by step.");
  CHECK_FALSE(cot.contains("Examples for thought"));
  CHECK_THROWS_AS(inject_thought(cot, {ThoughtMode::tot, {}}), DataError);

  const auto ex = some_exemplars(2);
  const auto few = attach_examples(base, ex);
  ThoughtVariant partial{ThoughtMode::cot, {{"e0", "why"}}};
  CHECK_THROWS_AS(inject_thought(few, partial, ex), DataError);
  CHECK_THROWS_AS(inject_thought(few, partial), DataError);
  partial.explanations["e1"] = "because";
  const auto full = inject_thought(few, partial, ex);
  REQUIRE(full.body()["Examples for thought"].size() == 2);
  CHECK(full.body()["Examples for thought"][1]["Explanation"] == "because");
  CHECK(full.body()["Examples"].size() == 2);
  CHECK_THROWS(inject_thought(build_cloze_prompt(kTask, r), {ThoughtMode::cot, {}}));
}

TEST_CASE("explanations are generated once and cached") {
  auto mock = std::make_shared<MockProvider>(scenario_mock({}));
  Gateway gw(mock, quick());
  auto ex = some_exemplars(6);
  ex.push_back(ex.front());  // duplicate id
  const auto set = generate_explanations(ex, kTask, ThoughtMode::cot, gw);
  CHECK(set.explanations.size() == 6);
  CHECK(set.dropped.empty());
  CHECK(set.explanations.at("e1") == "because clickbait");
  const auto live = gw.stats().live_requests;
  CHECK(live == 6);
  const auto again = generate_explanations(ex, kTask, ThoughtMode::cot, gw);
  CHECK(again.explanations == set.explanations);
  CHECK(gw.stats().live_requests == live);
}

TEST_CASE("a failed explanation is retried once, then dropped") {
  auto cfg = scenario_mock({});
  cfg.transient_failures = 1;
  auto mock = std::make_shared<MockProvider>(cfg);
  Gateway gw(mock, quick());
  const auto ex = some_exemplars(4);
  const auto recovered = generate_explanations(ex, kTask, ThoughtMode::tot, gw, 1);
  CHECK(recovered.explanations.size() == 4);
  CHECK(recovered.dropped.empty());

  auto poisoned = scenario_mock({});
  poisoned.fail_on = {"poison"};
  Gateway gw2(std::make_shared<MockProvider>(poisoned), quick());
  const auto some = generate_explanations(some_exemplars(5, " poison"), kTask, ThoughtMode::cot, gw2);
  CHECK(some.dropped == std::vector<std::string>{"e1", "e3"});
  CHECK(some.explanations.size() == 3);

  Gateway gw3(std::make_shared<MockProvider>(poisoned), quick());
  auto mostly = some_exemplars(4, " poison");
  mostly[0].text += " poison";
  CHECK_THROWS_AS(generate_explanations(mostly, kTask, ThoughtMode::cot, gw3), StageAbort);
}

namespace {

ThoughtGateResult gate_with(double cot, double tot) {
  ScenarioOptions o;
  o.base_accuracy = 0.6;
  o.cot_delta = cot;
  o.tot_delta = tot;
  const auto records = scenario_records(o);
  const std::vector<DataRecord> validation(records.begin(), records.begin() + 80);
  auto mock = std::make_shared<MockProvider>(scenario_mock(o));
  Gateway gw(mock, quick());
  AnnotationSession session(gw, kTask, nullptr);
  return run_thought_gate(session, PromptPlan::baseline(PromptKind::json), validation, ThoughtSetting::gate);
}

}  // namespace

TEST_CASE("thought gate picks the best variant with none, then cot, on ties") {
  const auto tot = gate_with(0.1, 0.3);
  CHECK(tot.decision.chosen == ThoughtMode::tot);
  CHECK(tot.plan.thought == ThoughtMode::tot);
  CHECK(tot.decision.f1.at(ThoughtMode::tot) > tot.decision.f1.at(ThoughtMode::cot));
  CHECK(tot.plan_f1 == tot.decision.f1.at(ThoughtMode::tot));

  const auto none = gate_with(-0.2, -0.1);
  CHECK(none.decision.chosen == ThoughtMode::none);
  CHECK(none.plan == PromptPlan::baseline(PromptKind::json));

  const auto tie = gate_with(0.2, 0.2);
  CHECK(tie.decision.f1.at(ThoughtMode::cot) == tie.decision.f1.at(ThoughtMode::tot));
  CHECK(tie.decision.chosen == ThoughtMode::cot);

  const auto flat = gate_with(0.0, 0.0);
  CHECK(flat.decision.chosen == ThoughtMode::none);
}

TEST_CASE("forced settings skip the comparison") {
  ScenarioOptions o;
  const auto records = scenario_records(o);
  const std::vector<DataRecord> validation(records.begin(), records.begin() + 20);
  Gateway gw(std::make_shared<MockProvider>(scenario_mock(o)), quick());
  AnnotationSession session(gw, kTask, nullptr);
  const auto forced = run_thought_gate(session, PromptPlan::baseline(PromptKind::json), validation,
                                       ThoughtSetting::force_tot);
  CHECK(forced.decision.chosen == ThoughtMode::tot);
  const auto off = run_thought_gate(session, PromptPlan::baseline(PromptKind::json), validation, ThoughtSetting::off);
  CHECK(off.decision.chosen == ThoughtMode::none);
  CHECK(parse_thought_setting("gate") == ThoughtSetting::gate);
}
