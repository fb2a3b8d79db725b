#include <atomic>
#include <cmath>

#include "apt/llm_gateway.hpp"
#include "apt/mock_provider.hpp"
#include "doctest.h"
#include "scenario.hpp"

using namespace apt;
using apt::testing::TempDir;

namespace {

std::string label_payload(const std::string& text) {
  nlohmann::ordered_json j;
  j["Prompt"] = "Classify the following text by given labels for specified task.";
  j["Text"] = text;
  j["Task"] = "clickbait detection";
  j["Labels"] = {"clickbait", "news"};
  j["Desired format"] = {{"Label", "<label_for_classification>"}};
  return j.dump(4);
}

MockConfig rule_mock() {
  MockConfig m;
  m.rules.push_back({"wow", "clickbait", std::nullopt});
  m.default_label = "news";
  return m;
}

GatewayOptions quick_options() {
  GatewayOptions o;
  o.retry_base_delay = std::chrono::milliseconds(1);
  return o;
}

class FlakyProvider : public ChatProvider {
 public:
  explicit FlakyProvider(bool client_fault) : client_fault_(client_fault) {}
  ProviderReply chat(const ChatRequest&) override {
    ++calls;
    if (client_fault_) throw ConfigurationError("HTTP 401 unauthorized");
    throw TransportError("HTTP 500");
  }
  ProviderEmbedding embed(const std::string&, const std::string&) override { return {{1.0, 2.0}, 0}; }
  std::string name() const override { return "flaky"; }
  std::atomic<int> calls{0};

 private:
  bool client_fault_;
};

class ShapeShiftingEmbedder : public ChatProvider {
 public:
  ProviderReply chat(const ChatRequest&) override { return {"{}", 1, 0.0, 0}; }
  ProviderEmbedding embed(const std::string& text, const std::string&) override {
    return {std::vector<double>(text.size() % 2 == 0 ? 3 : 4, 1.0), 0};
  }
  std::string name() const override { return "shape"; }
};

}  // namespace

TEST_CASE("mock rule answers with the rule label") {
  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway gw(mock, quick_options());
  const auto r = gw.complete(gw.make_request(label_payload("wow, look at this")));
  CHECK(r.raw_text.find("{\"Label\":\"clickbait\"}") != std::string::npos);
  CHECK(r.completion_tokens > 0);
  CHECK_FALSE(r.from_cache);
}

TEST_CASE("identical request twice hits the cache") {
  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway gw(mock, quick_options());
  const auto req = gw.make_request(label_payload("plain news"));
  const auto first = gw.complete(req);
  const auto second = gw.complete(req);
  CHECK(second.from_cache);
  CHECK(second.request_seconds == 0.0);
  CHECK(second.raw_text == first.raw_text);
  CHECK(mock->chat_calls() == 1);
  CHECK(gw.stats().cache_hits == 1);
}

TEST_CASE("cache key covers model and sampling settings") {
  Gateway gw(std::make_shared<MockProvider>(rule_mock()), quick_options());
  auto a = gw.make_request("payload");
  auto b = a;
  b.temperature = 0.7;
  auto c = a;
  c.model = "other";
  CHECK(Gateway::cache_key(a) != Gateway::cache_key(b));
  CHECK(Gateway::cache_key(a) != Gateway::cache_key(c));
  CHECK(Gateway::cache_key(a) == Gateway::cache_key(gw.make_request("payload")));
}

TEST_CASE("persisted cache survives a new gateway") {
  TempDir dir;
  auto opts = quick_options();
  opts.cache_dir = dir.path();
  const auto payload = label_payload("wow persisted");
  std::string key;
  {
    Gateway gw(std::make_shared<MockProvider>(rule_mock()), opts);
    key = gw.complete(gw.make_request(payload)).cache_key;
  }
  CHECK(std::filesystem::exists(dir / ("chat/" + key + ".json")));
  const auto entry = nlohmann::json::parse(apt::testing::read_text(dir / ("chat/" + key + ".json")));
  CHECK(entry["request_hash"] == key);
  CHECK(entry.contains("raw_response"));
  CHECK(entry["usage"].contains("completion_tokens"));
  CHECK(entry.contains("timestamp"));

  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway again(mock, opts);
  const auto r = again.complete(again.make_request(payload));
  CHECK(r.from_cache);
  CHECK(mock->chat_calls() == 0);
}

TEST_CASE("refresh policy bypasses the cache") {
  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway gw(mock, quick_options());
  const auto req = gw.make_request(label_payload("x"));
  gw.complete(req);
  const auto r = gw.complete(req, CachePolicy::refresh);
  CHECK_FALSE(r.from_cache);
  CHECK(mock->chat_calls() == 2);
}

TEST_CASE("three 500s with a retry budget of two is a transport error") {
  auto cfg = rule_mock();
  cfg.transient_failures = 3;
  auto opts = quick_options();
  opts.retry_budget = 2;
  Gateway gw(std::make_shared<MockProvider>(cfg), opts);
  CHECK_THROWS_AS(gw.complete(gw.make_request(label_payload("a"))), TransportError);

  cfg.transient_failures = 2;
  Gateway recovers(std::make_shared<MockProvider>(cfg), opts);
  CHECK_NOTHROW(recovers.complete(recovers.make_request(label_payload("a"))));
}

TEST_CASE("client faults are not retried") {
  auto p = std::make_shared<FlakyProvider>(true);
  Gateway gw(p, quick_options());
  CHECK_THROWS_AS(gw.complete(gw.make_request("x")), ConfigurationError);
  CHECK(p->calls == 1);
  auto t = std::make_shared<FlakyProvider>(false);
  auto opts = quick_options();
  opts.retry_budget = 3;
  opts.probe_cadence = 0;
  Gateway gw2(t, opts);
  CHECK_THROWS_AS(gw2.complete(gw2.make_request("x")), TransportError);
  CHECK(t->calls == 4);
}

TEST_CASE("request invariants") {
  Gateway gw(std::make_shared<MockProvider>(rule_mock()), quick_options());
  CHECK_THROWS(gw.complete(gw.make_request("")));
  auto req = gw.make_request("x");
  req.temperature = -1;
  CHECK_THROWS(gw.complete(req));
}

TEST_CASE("mock embeddings are deterministic and cached") {
  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway gw(mock, quick_options());
  const auto a = gw.embed("abc");
  const auto b = gw.embed("abc");
  CHECK(a.values == b.values);
  CHECK(mock->embed_calls() == 1);
  Gateway other(std::make_shared<MockProvider>(rule_mock()), quick_options());
  CHECK(other.embed("abc").values == a.values);
  CHECK_THROWS(gw.embed(""));
}

TEST_CASE("embedding length must stay constant") {
  Gateway gw(std::make_shared<ShapeShiftingEmbedder>(), quick_options());
  gw.embed("ab");
  CHECK_THROWS(gw.embed("abc"));
}

TEST_CASE("null probe measures the fixed mock latency") {
  auto cfg = rule_mock();
  cfg.latency_seconds = 0.5;
  Gateway gw(std::make_shared<MockProvider>(cfg), quick_options());
  const auto p = gw.probe_null();
  REQUIRE(p.available());
  CHECK(*p.null_prompt_seconds == doctest::Approx(0.5));
}

TEST_CASE("probe cadence of ten gives ceil(N/10) probes") {
  for (int n : {1, 9, 10, 11, 25, 40}) {
    CAPTURE(n);
    auto mock = std::make_shared<MockProvider>(rule_mock());
    auto opts = quick_options();
    opts.probe_cadence = 10;
    Gateway gw(mock, opts);
    for (int i = 0; i < n; ++i) gw.complete(gw.make_request(label_payload("t" + std::to_string(i))));
    CHECK(gw.probes().size() == static_cast<std::size_t>((n + 9) / 10));
    CHECK(mock->probe_calls() == static_cast<std::size_t>((n + 9) / 10));
  }
}

TEST_CASE("unavailable probe does not stop annotation") {
  auto cfg = rule_mock();
  cfg.probe_unavailable = true;
  auto opts = quick_options();
  opts.retry_budget = 1;
  Gateway gw(std::make_shared<MockProvider>(cfg), opts);
  const auto r = gw.complete(gw.make_request(label_payload("t")));
  CHECK_FALSE(r.raw_text.empty());
  REQUIRE(gw.probes().size() == 1);
  CHECK_FALSE(gw.probes()[0].available());
}

TEST_CASE("batch of 100 stays aligned under random latencies") {
  auto cfg = rule_mock();
  cfg.jitter_seconds = 0.003;
  cfg.sleep = true;
  auto mock = std::make_shared<MockProvider>(cfg);
  auto opts = quick_options();
  opts.cache_enabled = false;
  Gateway gw(mock, opts);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 100; ++i) {
    reqs.push_back(gw.make_request(label_payload((i % 3 == 0 ? "wow " : "calm ") + std::to_string(i))));
  }
  const auto out = gw.annotate_batch(reqs, 8);
  REQUIRE(out.size() == 100);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(out[i].ok());
    const bool clickbait = out[i].response->raw_text.find("clickbait") != std::string::npos;
    CHECK(clickbait == (i % 3 == 0));
  }
  CHECK(mock->max_concurrency() <= 8);
}

TEST_CASE("one poisoned request fails in place") {
  auto cfg = rule_mock();
  cfg.fail_on = {"poison"};
  auto opts = quick_options();
  opts.retry_budget = 0;
  Gateway gw(std::make_shared<MockProvider>(cfg), opts);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 100; ++i) reqs.push_back(gw.make_request(label_payload(i == 37 ? "poison" : "ok " + std::to_string(i))));
  const auto out = gw.annotate_batch(reqs, 8);
  int ok = 0;
  for (const auto& o : out) ok += o.ok();
  CHECK(ok == 99);
  CHECK_FALSE(out[37].ok());
  CHECK(out[37].transport_failure);
}

TEST_CASE("parallelism one reproduces sequential timings") {
  auto cfg = rule_mock();
  cfg.latency_seconds = 0.1;
  cfg.seconds_per_token = 0.02;
  cfg.jitter_seconds = 0.05;
  auto opts = quick_options();
  opts.cache_enabled = false;
  Gateway seq(std::make_shared<MockProvider>(cfg), opts);
  Gateway batch(std::make_shared<MockProvider>(cfg), opts);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 20; ++i) reqs.push_back(seq.make_request(label_payload("text " + std::to_string(i))));
  const auto out = batch.annotate_batch(reqs, 1);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const auto s = seq.complete(reqs[i]);
    REQUIRE(out[i].ok());
    CHECK(out[i].response->request_seconds == s.request_seconds);
    CHECK(out[i].response->raw_text == s.raw_text);
  }
}

TEST_CASE("duplicate requests in one batch go out once") {
  auto mock = std::make_shared<MockProvider>(rule_mock());
  Gateway gw(mock, quick_options());
  const auto req = gw.make_request(label_payload("same"));
  const auto out = gw.annotate_batch({req, req, req}, 3);
  CHECK(mock->chat_calls() == 1);
  CHECK_FALSE(out[0].response->from_cache);
  CHECK(out[1].response->from_cache);
  CHECK(out[2].response->raw_text == out[0].response->raw_text);
}

TEST_CASE("in-flight bound holds under concurrency") {
  auto cfg = rule_mock();
  cfg.latency_seconds = 0.002;
  cfg.sleep = true;
  auto mock = std::make_shared<MockProvider>(cfg);
  auto opts = quick_options();
  opts.max_in_flight = 3;
  opts.probe_cadence = 0;
  Gateway gw(mock, opts);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 40; ++i) reqs.push_back(gw.make_request(label_payload("b" + std::to_string(i))));
  gw.annotate_batch(reqs, 16);
  CHECK(mock->max_concurrency() <= 3);
}

TEST_CASE("rate limiter spaces request starts") {
  auto opts = quick_options();
  opts.rate_limit_rps = 200;
  opts.probe_cadence = 0;
  opts.cache_enabled = false;
  Gateway gw(std::make_shared<MockProvider>(rule_mock()), opts);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 21; ++i) reqs.push_back(gw.make_request(label_payload("r" + std::to_string(i))));
  const auto t0 = std::chrono::steady_clock::now();
  gw.annotate_batch(reqs, 8);
  CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(95));
}

TEST_CASE("mock is a pure function of payload and seed") {
  auto cfg = rule_mock();
  cfg.base_accuracy = 0.5;
  cfg.seed = 9;
  MockProvider a(cfg);
  MockProvider b(cfg);
  for (int i = 0; i < 30; ++i) {
    ChatRequest r;
    r.payload = label_payload("text " + std::to_string(i));
    CHECK(a.chat(r).text == b.chat(r).text);
  }
  CHECK(MockProvider::draw("x", 1) == MockProvider::draw("x", 1));
  CHECK(MockProvider::draw("x", 1) != MockProvider::draw("x", 2));
}

TEST_CASE("token count falls back to whitespace tokens") {
  CHECK(fallback_token_count("{\"Label\": \"news\"}") == 2);
  CHECK(fallback_token_count("") == 0);
}
