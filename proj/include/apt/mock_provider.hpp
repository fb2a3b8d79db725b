#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apt/common.hpp"
#include "apt/llm_gateway.hpp"
#include "json.hpp"

namespace apt {

/// Deterministic stand-in for a chat model.
///
/// The "true" label of a text comes from substring rules. Whether the mock answers
/// correctly is decided by comparing a seeded hash of the text against an accuracy
/// (rule accuracy or base accuracy, shifted by every boost whose trigger appears in the
/// payload). Because the draw depends only on the text, raising the accuracy only ever
/// turns wrong answers into right ones, which makes prompt effects known by construction.
struct MockRule {
  std::string contains;  // case-insensitive substring of the record text
  std::string label;
  std::optional<double> accuracy;
};

struct MockBoost {
  std::string trigger;  // substring of the full payload
  double delta = 0.0;
};

enum class MockStyle { plain, fenced, prose };

struct MockConfig {
  std::uint64_t seed = 0;
  double base_accuracy = 1.0;
  std::vector<MockRule> rules;
  std::optional<std::string> default_label;
  std::vector<MockBoost> boosts;
  MockStyle style = MockStyle::plain;
  double latency_seconds = 0.0;
  double seconds_per_token = 0.0;
  /// Extra per-payload latency in [0, jitter_seconds), derived from the payload hash.
  double jitter_seconds = 0.0;
  /// Actually sleep for the simulated latency.
  bool sleep = false;
  std::size_t embedding_dim = 64;
  /// Payloads containing any of these always fail with a transport error.
  std::vector<std::string> fail_on;
  /// The first N chat calls fail with a transient HTTP 500.
  int transient_failures = 0;
  /// When true the null probe fails like an outage.
  bool probe_unavailable = false;
};

MockConfig mock_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const MockConfig& c);

/// Raised once a crash point set with `crash_after` is reached; simulates the process dying.
class SimulatedCrash : public Error {
 public:
  using Error::Error;
};

class MockProvider : public ChatProvider {
 public:
  explicit MockProvider(MockConfig config);

  ProviderReply chat(const ChatRequest& request) override;
  ProviderEmbedding embed(const std::string& text, const std::string& model) override;
  std::string name() const override { return "mock"; }

  /// Fail every chat call after `n` successful annotation calls.
  void crash_after(std::size_t n) { crash_after_ = n; }

  std::size_t chat_calls() const { return chat_calls_.load(); }
  std::size_t probe_calls() const { return probe_calls_.load(); }
  std::size_t embed_calls() const { return embed_calls_.load(); }
  std::size_t max_concurrency() const { return max_concurrency_.load(); }

  const MockConfig& config() const { return config_; }

  /// Draw in [0,1) deciding correctness for `text`: correct iff draw < accuracy.
  static double draw(const std::string& text, std::uint64_t seed);
  /// Accuracy the mock applies to `text` inside `payload`.
  double accuracy_for(const std::string& text, const std::string& payload) const;

 private:
  std::string answer_label(const std::string& text, const std::vector<std::string>& labels,
                           const std::string& payload) const;
  std::string wrap(const std::string& json_text) const;

  MockConfig config_;
  std::optional<std::size_t> crash_after_;
  std::atomic<int> transient_left_;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> probe_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
  std::atomic<std::size_t> active_{0};
  std::atomic<std::size_t> max_concurrency_{0};
};

}  // namespace apt
