#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace apt {

struct ChatRequest {
  std::string payload;
  std::string model;
  double temperature = 0.0;
  int max_output_tokens = 256;
  /// Optional system message sent before the user payload.
  std::string system_preamble;
};

struct ChatResponse {
  std::string raw_text;
  int completion_tokens = 0;
  double request_seconds = 0.0;
  bool from_cache = false;
  std::string cache_key;
  /// Index into the gateway's probe history of the probe in force when the request went out.
  std::optional<std::size_t> probe_index;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model;
};

struct TimingProbe {
  /// Empty when every probe attempt failed.
  std::optional<double> null_prompt_seconds;
  std::chrono::steady_clock::time_point taken_at;

  bool available() const { return null_prompt_seconds.has_value(); }
};

/// What a provider hands back for one chat call.
struct ProviderReply {
  std::string text;
  std::optional<int> completion_tokens;
  /// Provider-side latency; when set it replaces wall-clock measurement.
  std::optional<double> reported_seconds;
  /// Provider creation timestamp (unix seconds) recorded in the cache.
  std::optional<std::int64_t> created;
};

struct ProviderEmbedding {
  std::vector<double> values;
  std::optional<std::int64_t> created;
};

/// Chat + embedding backend. Implementations throw TransportError for retryable
/// failures and ConfigurationError for client faults.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ProviderReply chat(const ChatRequest& request) = 0;
  virtual ProviderEmbedding embed(const std::string& text, const std::string& model) = 0;
  virtual std::string name() const = 0;
};

struct GatewayOptions {
  std::string chat_model = "gpt-3.5-turbo";
  std::string embedding_model = "text-embedding-ada-002";
  double temperature = 0.0;
  int max_output_tokens = 256;
  std::string system_preamble;
  int retry_budget = 3;
  std::chrono::milliseconds retry_base_delay{500};
  /// A null probe precedes every `probe_cadence`-th live request; 0 disables probing.
  int probe_cadence = 10;
  /// Content-addressed cache root (cache/chat, cache/emb below it). Empty = memory only.
  std::optional<std::filesystem::path> cache_dir;
  bool cache_enabled = true;
  /// Request starts per second; 0 = unlimited.
  double rate_limit_rps = 0.0;
  int max_in_flight = 64;
};

enum class CachePolicy { use, refresh };

struct GatewayStats {
  std::size_t live_requests = 0;
  std::size_t cache_hits = 0;
  std::size_t probes = 0;
  std::size_t live_embeddings = 0;
};

/// Positional result of one request in a batch.
struct BatchOutcome {
  std::optional<ChatResponse> response;
  std::exception_ptr error;
  std::string error_message;
  /// True when the failure is a TransportError (recorded, not fatal to the run).
  bool transport_failure = false;

  bool ok() const { return response.has_value(); }
};

class Gateway {
 public:
  Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options);

  const GatewayOptions& options() const { return options_; }
  ChatProvider& provider() { return *provider_; }

  /// Request with the configured model, temperature and token budget.
  ChatRequest make_request(std::string payload) const;

  ChatResponse complete(const ChatRequest& request, CachePolicy policy = CachePolicy::use);
  EmbeddingVector embed(const std::string& text);
  TimingProbe probe_null();

  /// Runs requests on `parallelism` workers; results are aligned with `requests`.
  std::vector<BatchOutcome> annotate_batch(const std::vector<ChatRequest>& requests, int parallelism);

  std::vector<TimingProbe> probes() const;
  GatewayStats stats() const;

  /// Cache key of a request: digest over the model, sampling settings and payload bytes.
  static std::string cache_key(const ChatRequest& request);

 private:
  struct CachedChat {
    std::string raw_text;
    int completion_tokens = 0;
  };

  ProviderReply call_with_retry(const ChatRequest& request, double& measured_seconds);
  std::optional<CachedChat> cache_lookup(const std::string& key);
  void cache_store(const std::string& key, const ChatRequest& request, const CachedChat& value,
                   std::optional<std::int64_t> created);
  std::optional<std::size_t> probe_for_live_request();
  TimingProbe take_probe_locked();
  void throttle();

  std::shared_ptr<ChatProvider> provider_;
  GatewayOptions options_;

  mutable std::mutex cache_mutex_;
  std::unordered_map<std::string, CachedChat> chat_cache_;
  std::unordered_map<std::string, std::vector<double>> embed_cache_;
  std::optional<std::size_t> embedding_length_;

  mutable std::mutex probe_mutex_;
  std::vector<TimingProbe> probes_;
  std::size_t live_sequence_ = 0;

  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_start_{};

  std::counting_semaphore<4096> in_flight_;

  std::atomic<std::size_t> live_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> live_embeddings_{0};
};

/// Whitespace token count used when the provider reports no usage.
int fallback_token_count(const std::string& text);

}  // namespace apt
