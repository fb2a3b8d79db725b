#include "apt/mock_provider.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <thread>

#include "apt/prompt_doc.hpp"

namespace apt {

MockConfig mock_config_from_json(const nlohmann::json& j) {
  MockConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw UsageError("mock configuration must be an object");
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    c.base_accuracy = j.value("base_accuracy", 1.0);
    if (j.contains("rules")) {
      for (const auto& r : j["rules"]) {
        MockRule rule{r.at("contains").get<std::string>(), r.at("label").get<std::string>(), std::nullopt};
        if (r.contains("accuracy")) rule.accuracy = r["accuracy"].get<double>();
        c.rules.push_back(std::move(rule));
      }
    }
    if (j.contains("default_label")) c.default_label = j["default_label"].get<std::string>();
    if (j.contains("boosts")) {
      for (const auto& b : j["boosts"]) c.boosts.push_back({b.at("trigger").get<std::string>(), b.at("delta").get<double>()});
    }
    const auto style = j.value("style", std::string("plain"));
    if (style == "plain") c.style = MockStyle::plain;
    else if (style == "fenced") c.style = MockStyle::fenced;
    else if (style == "prose") c.style = MockStyle::prose;
    else throw UsageError("unknown mock style '" + style + "'");
    c.latency_seconds = j.value("latency_seconds", 0.0);
    c.seconds_per_token = j.value("seconds_per_token", 0.0);
    c.jitter_seconds = j.value("jitter_seconds", 0.0);
    c.sleep = j.value("sleep", false);
    c.embedding_dim = j.value("embedding_dim", std::size_t{64});
    if (j.contains("fail_on")) c.fail_on = j["fail_on"].get<std::vector<std::string>>();
    c.transient_failures = j.value("transient_failures", 0);
    c.probe_unavailable = j.value("probe_unavailable", false);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("invalid mock configuration: ") + e.what());
  }
  if (c.embedding_dim < 2) throw UsageError("mock embedding_dim must be >= 2");
  return c;
}

nlohmann::ordered_json to_json(const MockConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["base_accuracy"] = c.base_accuracy;
  j["rules"] = nlohmann::ordered_json::array();
  for (const auto& r : c.rules) {
    nlohmann::ordered_json rj{{"contains", r.contains}, {"label", r.label}};
    if (r.accuracy) rj["accuracy"] = *r.accuracy;
    j["rules"].push_back(rj);
  }
  if (c.default_label) j["default_label"] = *c.default_label;
  j["boosts"] = nlohmann::ordered_json::array();
  for (const auto& b : c.boosts) j["boosts"].push_back({{"trigger", b.trigger}, {"delta", b.delta}});
  j["style"] = c.style == MockStyle::plain ? "plain" : c.style == MockStyle::fenced ? "fenced" : "prose";
  j["latency_seconds"] = c.latency_seconds;
  j["seconds_per_token"] = c.seconds_per_token;
  j["jitter_seconds"] = c.jitter_seconds;
  j["sleep"] = c.sleep;
  j["embedding_dim"] = c.embedding_dim;
  j["fail_on"] = c.fail_on;
  j["transient_failures"] = c.transient_failures;
  j["probe_unavailable"] = c.probe_unavailable;
  return j;
}

MockProvider::MockProvider(MockConfig config)
    : config_(std::move(config)), transient_left_(config_.transient_failures) {}

double MockProvider::draw(const std::string& text, std::uint64_t seed) { return unit_interval(hash64(text, seed)); }

double MockProvider::accuracy_for(const std::string& text, const std::string& payload) const {
  double acc = config_.base_accuracy;
  const std::string lowered = to_lower(text);
  for (const auto& rule : config_.rules) {
    if (lowered.find(to_lower(rule.contains)) != std::string::npos) {
      if (rule.accuracy) acc = *rule.accuracy;
      break;
    }
  }
  for (const auto& b : config_.boosts) {
    if (payload.find(b.trigger) != std::string::npos) acc += b.delta;
  }
  return std::clamp(acc, 0.0, 1.0);
}

namespace {

std::string true_label_of(const MockConfig& config, const std::string& text, const std::vector<std::string>& labels) {
  const std::string lowered = to_lower(text);
  for (const auto& rule : config.rules) {
    if (lowered.find(to_lower(rule.contains)) != std::string::npos) return rule.label;
  }
  if (config.default_label) return *config.default_label;
  return labels.empty() ? std::string("unknown") : labels.front();
}

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const auto a = s.find(open);
  if (a == std::string::npos) return {};
  const auto b = s.find(close, a + open.size());
  if (b == std::string::npos) return {};
  return s.substr(a + open.size(), b - a - open.size());
}

std::vector<std::string> split_labels(const std::string& inner) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= inner.size()) {
    auto comma = inner.find(", ", start);
    if (comma == std::string::npos) comma = inner.size();
    auto item = trim(std::string_view(inner).substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 2;
  }
  return out;
}

}  // namespace

std::string MockProvider::answer_label(const std::string& text, const std::vector<std::string>& labels,
                                       const std::string& payload) const {
  const std::string truth = true_label_of(config_, text, labels);
  const double acc = accuracy_for(text, payload);
  if (draw(text, config_.seed) < acc || labels.size() < 2) return truth;
  std::vector<std::string> others;
  for (const auto& l : labels) {
    if (!iequals(l, truth)) others.push_back(l);
  }
  if (others.empty()) return truth;
  return others[hash64(text, config_.seed ^ 0x5bd1e995ULL) % others.size()];
}

std::string MockProvider::wrap(const std::string& json_text) const {
  switch (config_.style) {
    case MockStyle::plain: return json_text;
    case MockStyle::fenced: return "```json\n" + json_text + "\n```";
    case MockStyle::prose: return "Sure! Here is the classification:\n" + json_text + "\nLet me know if you need more.";
  }
  return json_text;
}

ProviderReply MockProvider::chat(const ChatRequest& request) {
  struct ActiveGuard {
    std::atomic<std::size_t>& active;
    explicit ActiveGuard(std::atomic<std::size_t>& a, std::atomic<std::size_t>& peak) : active(a) {
      const auto now = ++active;
      auto prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
    }
    ~ActiveGuard() { --active; }
  } guard(active_, max_concurrency_);

  const std::string& payload = request.payload;
  ProviderReply reply;
  reply.created = 0;

  if (payload.empty()) {
    if (config_.probe_unavailable) throw TransportError("mock: probe endpoint unavailable");
    ++probe_calls_;
    reply.text = "OK";
    reply.reported_seconds = config_.latency_seconds + config_.seconds_per_token;
    if (config_.sleep) std::this_thread::sleep_for(std::chrono::duration<double>(*reply.reported_seconds));
    return reply;
  }

  if (crash_after_ && chat_calls_.load() >= *crash_after_) throw SimulatedCrash("mock: simulated crash");
  if (transient_left_.fetch_sub(1) > 0) throw TransportError("mock: HTTP 500 internal server error");
  for (const auto& f : config_.fail_on) {
    if (payload.find(f) != std::string::npos) throw TransportError("mock: poisoned request");
  }

  std::string body_text;
  const auto doc = nlohmann::ordered_json::parse(payload, nullptr, false);
  if (!doc.is_discarded() && doc.is_object()) {
    const std::string text = doc.value(std::string(keys::text), std::string());
    std::vector<std::string> labels;
    if (doc.contains(std::string(keys::labels)) && doc[std::string(keys::labels)].is_array()) {
      for (const auto& l : doc[std::string(keys::labels)]) {
        if (l.is_string()) labels.push_back(l.get<std::string>());
      }
    }
    if (doc.contains("True label")) {
      nlohmann::ordered_json out;
      out[std::string(keys::explanation)] = "because " + doc["True label"].get<std::string>();
      body_text = wrap(out.dump());
    } else {
      nlohmann::ordered_json out;
      out[std::string(keys::label)] = answer_label(text, labels, payload);
      body_text = wrap(out.dump());
    }
  } else {
    // Cloze or dictionary rendering.
    std::string text = between(payload, "The text \"", "\" is classified as");
    std::string label_list = between(payload, "with a label in [", "].\n");
    if (text.empty()) text = between(payload, "Text: \"", "\".\n");
    if (label_list.empty()) label_list = between(payload, "Labels: [", "].\n");
    body_text = "Label: " + answer_label(text, split_labels(label_list), payload);
  }

  ++chat_calls_;
  reply.text = body_text;
  const int tokens = fallback_token_count(reply.text);
  double seconds = config_.latency_seconds + config_.seconds_per_token * tokens;
  if (config_.jitter_seconds > 0) seconds += config_.jitter_seconds * unit_interval(hash64(payload, config_.seed + 1));
  reply.reported_seconds = seconds;
  if (config_.sleep) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  return reply;
}

ProviderEmbedding MockProvider::embed(const std::string& text, const std::string& /*model*/) {
  ++embed_calls_;
  // Signed feature hashing of lowercase word tokens; slot 0 carries a constant bias so the
  // vector never has zero norm.
  std::vector<double> v(config_.embedding_dim, 0.0);
  v[0] = 1.0;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const auto h = hash64(token, config_.seed);
    const std::size_t slot = 1 + static_cast<std::size_t>(h % (config_.embedding_dim - 1));
    v[slot] += (h >> 63) ? 1.0 : -1.0;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  return {std::move(v), 0};
}

}  // namespace apt
