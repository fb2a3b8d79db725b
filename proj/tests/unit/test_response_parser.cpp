#include <filesystem>
#include <random>

#include "apt/response_parser.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
namespace fs = std::filesystem;

TEST_CASE("json response cases") {
  const LabelSet cb({"clickbait", "not clickbait"});
  CHECK(parse_json_response("{\"Label\": \"clickbait\"}", cb).label == std::optional<std::string>("clickbait"));
  const LabelSet ai({"ai", "human"});
  const auto fenced = parse_json_response("Sure! ```json\n{\"Label\": \"AI\"}\n``` hope that helps", ai, "r1");
  CHECK(fenced.label == std::optional<std::string>("ai"));
  CHECK(fenced.record_id == "r1");
  const auto unknown = parse_json_response("{\"Label\": \"maybe\"}", cb);
  CHECK_FALSE(unknown.parsable());
  CHECK(unknown.failure_reason == FailureReason::unknown_label);
}

TEST_CASE("baseline response cases") {
  const LabelSet cb({"clickbait", "not clickbait"});
  CHECK(parse_baseline_response("Label: clickbait.", cb, PromptKind::dictionary).label ==
        std::optional<std::string>("clickbait"));
  CHECK(parse_baseline_response("The label: not clickbait", cb, PromptKind::cloze).label ==
        std::optional<std::string>("not clickbait"));
  const auto none = parse_baseline_response("I cannot classify this.", cb, PromptKind::cloze);
  CHECK(none.failure_reason == FailureReason::missing_anchor);
}

TEST_CASE("strict first-word mode stops at one token") {
  const LabelSet cb({"clickbait", "not clickbait"});
  BaselineParseOptions strict{true};
  const auto p = parse_baseline_response("Label: not clickbait", cb, PromptKind::dictionary, "", strict);
  CHECK_FALSE(p.parsable());
  CHECK(p.failure_reason == FailureReason::unknown_label);
}

TEST_CASE("multi-word extension agrees with an exhaustive label match") {
  const LabelSet labels({"not", "not clickbait", "clickbait", "very not clickbait"});
  const std::vector<std::string> tails = {"not clickbait at all", "not", "clickbait!", "very not clickbait.",
                                          "very not", "not sure"};
  for (const auto& tail : tails) {
    CAPTURE(tail);
    // Oracle: the longest label whose words are a prefix of the tail's cleaned words.
    std::vector<std::string> words;
    for (auto w : split_whitespace(tail)) {
      while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
      words.push_back(to_lower(w));
    }
    std::optional<std::string> best;
    std::size_t best_len = 0;
    for (const auto& l : labels.labels()) {
      const auto lw = split_whitespace(l);
      if (lw.size() > words.size() || lw.size() <= best_len) continue;
      bool match = true;
      for (std::size_t i = 0; i < lw.size(); ++i) match = match && lw[i] == words[i];
      if (match) {
        best = l;
        best_len = lw.size();
      }
    }
    CHECK(parse_baseline_response("Label: " + tail, labels, PromptKind::dictionary).label == best);
  }
}

TEST_CASE("fixture corpus yields the expected outcomes") {
  const fs::path dir = fs::path(APT_FIXTURE_DIR) / "responses";
  std::size_t cases = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    const auto stem = entry.path().stem().string();
    CAPTURE(stem);
    const auto expected = nlohmann::json::parse(apt::testing::read_text(dir / (stem + ".expected.json")));
    const LabelSet labels(expected["labels"].get<std::vector<std::string>>());
    const auto kind = parse_prompt_kind(expected["kind"].get<std::string>());
    const auto raw = apt::testing::read_text(entry.path());
    const auto parsed = parse_response(raw, labels, kind, stem);
    if (expected["label"].is_null()) {
      CHECK_FALSE(parsed.parsable());
      REQUIRE(parsed.failure_reason);
      CHECK(to_string(*parsed.failure_reason) == expected["failure"].get<std::string>());
    } else {
      REQUIRE(parsed.parsable());
      CHECK(*parsed.label == expected["label"].get<std::string>());
      CHECK(labels.index_of(*parsed.label));
      CHECK_FALSE(parsed.failure_reason);
    }
    CHECK(parse_response(raw, labels, kind, stem) == parsed);
    ++cases;
  }
  CHECK(cases >= 20);
}

TEST_CASE("fuzzing never crashes and yields valid annotations") {
  const LabelSet labels({"clickbait", "not clickbait", "ai"});
  std::mt19937_64 rng(2024);
  const std::string alphabet = "{}[]\":,\\ labeLABEL\n\t`jsonaiclickbt0123456789.-";
  for (int i = 0; i < 10000; ++i) {
    std::string raw;
    const auto len = bounded_draw(rng, 200);
    for (std::uint64_t k = 0; k < len; ++k) {
      // Mix raw bytes with characters that steer the scanner into its interesting states.
      if (bounded_draw(rng, 2) == 0) raw.push_back(static_cast<char>(bounded_draw(rng, 256)));
      else raw.push_back(alphabet[bounded_draw(rng, alphabet.size())]);
    }
    const auto p = parse_json_response(raw, labels, "fuzz");
    CHECK(p.parsable() != p.failure_reason.has_value());
    if (p.parsable()) CHECK(labels.index_of(*p.label));
    const auto b = parse_baseline_response(raw, labels, PromptKind::dictionary);
    CHECK(b.parsable() != b.failure_reason.has_value());
  }
}

TEST_CASE("parsability is the share of labelled outcomes") {
  std::vector<ParsedAnnotation> v;
  for (int i = 0; i < 97; ++i) v.push_back(ParsedAnnotation::success("x", "a"));
  for (int i = 0; i < 3; ++i) v.push_back(ParsedAnnotation::failure("y", FailureReason::bad_json));
  CHECK(parsability(v) == doctest::Approx(0.97).epsilon(1e-12));
  std::vector<ParsedAnnotation> bad(5, ParsedAnnotation::failure("z", FailureReason::no_json_found));
  CHECK(parsability(bad) == 0.0);
}

TEST_CASE("json key lookup and failure names") {
  auto k = extract_json_string("x {\"EXPLANATION\": \"because\"} y", "explanation");
  CHECK(k.value == std::optional<std::string>("because"));
  CHECK(find_json_object("a {\"b\": \"}\"} c") == std::optional<std::string_view>("{\"b\": \"}\"}"));
  for (auto r : {FailureReason::no_json_found, FailureReason::bad_json, FailureReason::missing_key,
                 FailureReason::unknown_label, FailureReason::empty_response, FailureReason::missing_anchor,
                 FailureReason::transport_failure}) {
    CHECK(parse_failure_reason(to_string(r)) == r);
  }
}
