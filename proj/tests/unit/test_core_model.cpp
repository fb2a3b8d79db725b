#include <algorithm>
#include <map>
#include <set>

#include "apt/common.hpp"
#include "apt/core_model.hpp"
#include "apt/prompt_doc.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
using apt::testing::TempDir;
using apt::testing::write_text;

namespace {

std::vector<DataRecord> make_records(const std::vector<std::pair<std::string, std::size_t>>& counts) {
  std::vector<DataRecord> out;
  std::size_t i = 0;
  for (const auto& [label, n] : counts) {
    for (std::size_t k = 0; k < n; ++k, ++i) out.push_back({std::to_string(i), "text " + std::to_string(i), label});
  }
  return out;
}

std::map<std::string, std::size_t> label_counts(const std::vector<DataRecord>& records) {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records) ++out[*r.gold_label];
  return out;
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("label set compares case-insensitively and keeps surface forms") {
  LabelSet labels({"Clickbait", "not clickbait"});
  CHECK(labels.index_of("  CLICKBAIT ") == 0u);
  CHECK(labels.canonical("Not Clickbait") == std::optional<std::string>("not clickbait"));
  CHECK_FALSE(labels.index_of("maybe"));
  CHECK_THROWS_AS(LabelSet({"a", "A"}), DataError);
  CHECK_THROWS_AS(LabelSet({"only"}), DataError);
}

TEST_CASE("csv of four rows infers a sorted label set") {
  TempDir dir;
  write_text(dir / "d.csv", "id,text,label\n1,hello,B\n2,\"quoted, text\",A\n3,third,B\n4,fourth,a\n");
  auto loaded = load_dataset(dir / "d.csv", DatasetFormat::csv);
  REQUIRE(loaded.records.size() == 4);
  REQUIRE(loaded.labels);
  CHECK(loaded.labels->labels() == std::vector<std::string>{"A", "B"});
  CHECK(loaded.records[1].text == "quoted, text");
  CHECK(loaded.records[3].gold_label == std::optional<std::string>("A"));
}

TEST_CASE("ids are synthesized as row indices when absent") {
  TempDir dir;
  write_text(dir / "d.csv", "text,label\nfirst,A\nsecond,B\n");
  auto loaded = load_dataset(dir / "d.csv", DatasetFormat::csv);
  CHECK(loaded.records[0].id == "0");
  CHECK(loaded.records[1].id == "1");
}

TEST_CASE("jsonl row missing text names its line") {
  TempDir dir;
  write_text(dir / "d.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":\"A\"}\n{\"id\":\"b\",\"label\":\"B\"}\n");
  const auto msg = error_of([&] { load_dataset(dir / "d.jsonl", DatasetFormat::jsonl); });
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(msg.find("text") != std::string::npos);
}

TEST_CASE("csv with a duplicate id names it") {
  TempDir dir;
  write_text(dir / "d.csv", "id,text,label\n7,one,A\n8,two,B\n7,three,A\n");
  CHECK_THROWS_AS(load_dataset(dir / "d.csv", DatasetFormat::csv), DataError);
  CHECK(error_of([&] { load_dataset(dir / "d.csv", DatasetFormat::csv); }).find("\"7\"") != std::string::npos);
}

TEST_CASE("empty dataset and empty text are rejected") {
  TempDir dir;
  write_text(dir / "e.jsonl", "");
  CHECK_THROWS_AS(load_dataset(dir / "e.jsonl", DatasetFormat::jsonl), DataError);
  write_text(dir / "t.jsonl", "{\"id\":\"a\",\"text\":\"  \",\"label\":\"A\"}\n");
  CHECK_THROWS_AS(load_dataset(dir / "t.jsonl", DatasetFormat::jsonl), DataError);
}

TEST_CASE("label override rejects labels outside it") {
  TempDir dir;
  write_text(dir / "d.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":\"C\"}\n");
  LoadOptions opts;
  opts.labels = LabelSet({"A", "B"});
  CHECK_THROWS_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl, opts), DataError);
}

TEST_CASE("format is inferred from the extension") {
  CHECK(dataset_format_from_path("x/data.csv") == DatasetFormat::csv);
  CHECK(dataset_format_from_path("data.jsonl") == DatasetFormat::jsonl);
  CHECK_THROWS_AS(dataset_format_from_path("data.txt"), UsageError);
}

TEST_CASE("subsample of 6000 balanced records to 3000 keeps 1500 per label") {
  const auto records = make_records({{"A", 3000}, {"B", 3000}});
  LabelSet labels({"A", "B"});
  const auto sub = stratified_subsample(records, labels, 3000, 42);
  REQUIRE(sub.size() == 3000);
  CHECK(label_counts(sub) == std::map<std::string, std::size_t>{{"A", 1500}, {"B", 1500}});
}

TEST_CASE("subsample below the cap is a no-op") {
  const auto records = make_records({{"A", 50}, {"B", 50}});
  const auto sub = stratified_subsample(records, LabelSet({"A", "B"}), 200, 1);
  REQUIRE(sub.size() == records.size());
  for (std::size_t i = 0; i < sub.size(); ++i) CHECK(sub[i].id == records[i].id);
}

TEST_CASE("subsample of 7A/3B to 5 rounds proportionally and is reproducible") {
  const auto records = make_records({{"A", 7}, {"B", 3}});
  LabelSet labels({"A", "B"});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sub = stratified_subsample(records, labels, 5, seed);
    REQUIRE(sub.size() == 5);
    auto counts = label_counts(sub);
    CHECK((counts["A"] == 3 || counts["A"] == 4));
    CHECK((counts["B"] == 1 || counts["B"] == 2));
    const auto again = stratified_subsample(records, labels, 5, seed);
    for (std::size_t i = 0; i < sub.size(); ++i) CHECK(again[i].id == sub[i].id);
  }
  CHECK_THROWS_AS(stratified_subsample(records, labels, 1, 0), UsageError);
}

TEST_CASE("split of 100 balanced records is 60/20/20 with 30/10/10 per label") {
  const auto records = make_records({{"A", 50}, {"B", 50}});
  LabelSet labels({"A", "B"});
  const auto split = split_dataset(records, labels, 42);
  CHECK(split.train_ids.size() == 60);
  CHECK(split.validation_ids.size() == 20);
  CHECK(split.test_ids.size() == 20);
  auto train = label_counts(select_records(records, split.train_ids));
  auto val = label_counts(select_records(records, split.validation_ids));
  CHECK(train["A"] == 30);
  CHECK(val["B"] == 10);
  CHECK(split_dataset(records, labels, 42) == split);
  CHECK(split_from_json(nlohmann::json::parse(to_json(split).dump())) == split);
}

TEST_CASE("split of a single-label dataset fails") {
  const auto records = make_records({{"A", 10}});
  CHECK_THROWS_AS(split_dataset(records, LabelSet({"A", "B"}), 1), DataError);
  CHECK_THROWS_AS(split_dataset(make_records({{"A", 10}, {"B", 10}}), LabelSet({"A", "B"}), 1, {0.5, 0.5, 0.5}),
                  UsageError);
}

TEST_CASE("splits partition the data and respect the stratification bound") {
  LabelSet labels({"A", "B", "C"});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto records = make_records({{"A", 3 + bounded_draw(rng, 40)},
                                       {"B", 3 + bounded_draw(rng, 40)},
                                       {"C", 3 + bounded_draw(rng, 40)}});
    const auto split = split_dataset(records, labels, trial);
    std::set<std::string> all;
    for (const auto* ids : {&split.train_ids, &split.validation_ids, &split.test_ids}) {
      for (const auto& id : *ids) CHECK(all.insert(id).second);
    }
    CHECK(all.size() == records.size());
    const auto total = label_counts(records);
    for (const auto* ids : {&split.train_ids, &split.validation_ids, &split.test_ids}) {
      const auto part = label_counts(select_records(records, *ids));
      const double n = static_cast<double>(ids->size());
      for (const auto& [label, count] : total) {
        const double have = static_cast<double>(part.count(label) ? part.at(label) : 0);
        const double want = static_cast<double>(count) / static_cast<double>(records.size());
        CHECK(std::abs(have / n - want) <= 1.0 / n + 1e-12);
      }
    }
  }
}

TEST_CASE("controlled rounding keeps margins") {
  const auto m = controlled_round({{7, 3}, {5, 5}}, 2, {5, 5}, {6, 4});
  CHECK(m[0][0] + m[0][1] == 5);
  CHECK(m[1][0] + m[1][1] == 5);
  CHECK(m[0][0] + m[1][0] == 6);
}

TEST_CASE("shared helpers") {
  CHECK(format_fixed(0.906, 2) == "0.91");
  CHECK(format_fixed(1.0, 2) == "1.00");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(split_whitespace("  a b\tc\n") == std::vector<std::string>{"a", "b", "c"});
  CHECK(iequals("Label", "LABEL"));
}
