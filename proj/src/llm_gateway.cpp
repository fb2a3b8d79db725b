#include "apt/llm_gateway.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "apt/common.hpp"

namespace apt {

namespace {

constexpr int kMaxInFlight = 4096;

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::optional<nlohmann::json> read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  auto j = nlohmann::json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::int64_t now_unix() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

int fallback_token_count(const std::string& text) { return static_cast<int>(split_whitespace(text).size()); }

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      in_flight_(std::clamp(options_.max_in_flight, 1, kMaxInFlight)) {
  if (!provider_) throw UsageError("gateway needs a provider");
  if (options_.temperature < 0) throw UsageError("temperature must be >= 0");
  if (options_.retry_budget < 0) throw UsageError("retry budget must be >= 0");
}

ChatRequest Gateway::make_request(std::string payload) const {
  ChatRequest r;
  r.payload = std::move(payload);
  r.model = options_.chat_model;
  r.temperature = options_.temperature;
  r.max_output_tokens = options_.max_output_tokens;
  r.system_preamble = options_.system_preamble;
  return r;
}

std::string Gateway::cache_key(const ChatRequest& request) {
  nlohmann::ordered_json material;
  material["model"] = request.model;
  material["temperature"] = request.temperature;
  material["max_output_tokens"] = request.max_output_tokens;
  material["system"] = request.system_preamble;
  material["payload"] = request.payload;
  return sha256_hex(material.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
}

std::optional<Gateway::CachedChat> Gateway::cache_lookup(const std::string& key) {
  if (!options_.cache_enabled) return std::nullopt;
  std::lock_guard lock(cache_mutex_);
  if (auto it = chat_cache_.find(key); it != chat_cache_.end()) return it->second;
  if (!options_.cache_dir) return std::nullopt;
  auto j = read_json_file(*options_.cache_dir / "chat" / (key + ".json"));
  if (!j || !j->contains("raw_response")) return std::nullopt;
  CachedChat c{(*j)["raw_response"].get<std::string>(), (*j)["usage"].value("completion_tokens", 0)};
  chat_cache_.emplace(key, c);
  return c;
}

void Gateway::cache_store(const std::string& key, const ChatRequest& request, const CachedChat& value,
                          std::optional<std::int64_t> created) {
  if (!options_.cache_enabled) return;
  std::lock_guard lock(cache_mutex_);
  chat_cache_[key] = value;
  if (!options_.cache_dir) return;
  nlohmann::ordered_json j;
  j["request_hash"] = key;
  j["model"] = request.model;
  j["raw_response"] = value.raw_text;
  j["usage"] = {{"completion_tokens", value.completion_tokens}};
  j["timestamp"] = created.value_or(now_unix());
  write_atomically(*options_.cache_dir / "chat" / (key + ".json"),
                   j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

void Gateway::throttle() {
  if (options_.rate_limit_rps <= 0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / options_.rate_limit_rps));
  std::chrono::steady_clock::time_point start;
  {
    std::lock_guard lock(rate_mutex_);
    const auto now = std::chrono::steady_clock::now();
    start = std::max(now, next_start_);
    next_start_ = start + interval;
  }
  std::this_thread::sleep_until(start);
}

ProviderReply Gateway::call_with_retry(const ChatRequest& request, double& measured_seconds) {
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retry_budget; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.retry_base_delay * (1 << std::min(attempt - 1, 10)));
    throttle();
    in_flight_.acquire();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto reply = provider_->chat(request);
      in_flight_.release();
      measured_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return reply;
    } catch (const TransportError& e) {
      in_flight_.release();
      last_error = e.what();
    } catch (...) {
      in_flight_.release();
      throw;
    }
  }
  throw TransportError("request failed after " + std::to_string(options_.retry_budget + 1) +
                       " attempts: " + last_error);
}

TimingProbe Gateway::take_probe_locked() {
  ChatRequest probe;
  probe.model = options_.chat_model;
  probe.temperature = options_.temperature;
  probe.max_output_tokens = 1;
  TimingProbe p;
  try {
    double measured = 0;
    auto reply = call_with_retry(probe, measured);
    p.null_prompt_seconds = reply.reported_seconds.value_or(measured);
  } catch (const TransportError&) {
    p.null_prompt_seconds.reset();
  }
  p.taken_at = std::chrono::steady_clock::now();
  probes_.push_back(p);
  return p;
}

TimingProbe Gateway::probe_null() {
  std::lock_guard lock(probe_mutex_);
  return take_probe_locked();
}

std::optional<std::size_t> Gateway::probe_for_live_request() {
  std::lock_guard lock(probe_mutex_);
  const std::size_t seq = live_sequence_++;
  if (options_.probe_cadence > 0 && seq % static_cast<std::size_t>(options_.probe_cadence) == 0) {
    take_probe_locked();
  }
  if (probes_.empty()) return std::nullopt;
  return probes_.size() - 1;
}

ChatResponse Gateway::complete(const ChatRequest& request, CachePolicy policy) {
  if (request.payload.empty()) throw DataError("chat request payload is empty");
  if (request.temperature < 0) throw DataError("chat request temperature must be >= 0");

  const std::string key = cache_key(request);
  if (policy == CachePolicy::use) {
    if (auto hit = cache_lookup(key)) {
      ++cache_hits_;
      ChatResponse r;
      r.raw_text = hit->raw_text;
      r.completion_tokens = hit->completion_tokens;
      r.request_seconds = 0.0;
      r.from_cache = true;
      r.cache_key = key;
      return r;
    }
  }

  const auto probe_index = probe_for_live_request();
  double measured = 0;
  auto reply = call_with_retry(request, measured);
  ++live_requests_;

  ChatResponse r;
  r.raw_text = std::move(reply.text);
  r.completion_tokens = reply.completion_tokens.value_or(fallback_token_count(r.raw_text));
  if (r.completion_tokens == 0 && !r.raw_text.empty()) r.completion_tokens = 1;
  r.request_seconds = reply.reported_seconds.value_or(measured);
  r.from_cache = false;
  r.cache_key = key;
  r.probe_index = probe_index;
  cache_store(key, request, {r.raw_text, r.completion_tokens}, reply.created);
  return r;
}

EmbeddingVector Gateway::embed(const std::string& text) {
  if (trim(text).empty()) throw DataError("cannot embed empty text");
  const std::string& model = options_.embedding_model;
  const std::string key = sha256_hex(model + "\n" + text);

  auto check_length = [&](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) throw ContractError("embedding contains a non-finite value");
    }
    if (v.empty()) throw ContractError("embedding is empty");
    if (!embedding_length_) embedding_length_ = v.size();
    else if (*embedding_length_ != v.size()) {
      throw ContractError("embedding length changed from " + std::to_string(*embedding_length_) + " to " +
                          std::to_string(v.size()));
    }
  };

  if (options_.cache_enabled) {
    std::lock_guard lock(cache_mutex_);
    if (auto it = embed_cache_.find(key); it != embed_cache_.end()) return {it->second, model};
    if (options_.cache_dir) {
      if (auto j = read_json_file(*options_.cache_dir / "emb" / (key + ".json")); j && j->contains("embedding")) {
        auto values = (*j)["embedding"].get<std::vector<double>>();
        check_length(values);
        embed_cache_.emplace(key, values);
        return {values, model};
      }
    }
  }

  ProviderEmbedding reply;
  std::string last_error;
  bool done = false;
  for (int attempt = 0; attempt <= options_.retry_budget && !done; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.retry_base_delay * (1 << std::min(attempt - 1, 10)));
    throttle();
    in_flight_.acquire();
    try {
      reply = provider_->embed(text, model);
      in_flight_.release();
      done = true;
    } catch (const TransportError& e) {
      in_flight_.release();
      last_error = e.what();
    } catch (...) {
      in_flight_.release();
      throw;
    }
  }
  if (!done) throw TransportError("embedding failed after retries: " + last_error);
  ++live_embeddings_;

  auto& values = reply.values;
  std::lock_guard lock(cache_mutex_);
  check_length(values);
  if (options_.cache_enabled) {
    embed_cache_[key] = values;
    if (options_.cache_dir) {
      nlohmann::ordered_json j;
      j["request_hash"] = key;
      j["model"] = model;
      j["embedding"] = values;
      j["timestamp"] = reply.created.value_or(now_unix());
      write_atomically(*options_.cache_dir / "emb" / (key + ".json"), j.dump() + "\n");
    }
  }
  return {values, model};
}

std::vector<BatchOutcome> Gateway::annotate_batch(const std::vector<ChatRequest>& requests, int parallelism) {
  std::vector<BatchOutcome> out(requests.size());

  // Identical requests in one batch go out once; later copies read like cache hits, so
  // the live/cached split does not depend on thread timing.
  std::vector<std::size_t> leader(requests.size());
  std::vector<std::size_t> unique;
  {
    std::unordered_map<std::string, std::size_t> first;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      leader[i] = i;
      if (!options_.cache_enabled) {
        unique.push_back(i);
        continue;
      }
      auto [it, inserted] = first.emplace(cache_key(requests[i]), i);
      if (inserted) unique.push_back(i);
      else leader[i] = it->second;
    }
  }

  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < unique.size(); k = next++) {
      const std::size_t i = unique[k];
      try {
        out[i].response = complete(requests[i]);
      } catch (const TransportError& e) {
        out[i].error = std::current_exception();
        out[i].error_message = e.what();
        out[i].transport_failure = true;
      } catch (const std::exception& e) {
        out[i].error = std::current_exception();
        out[i].error_message = e.what();
      }
    }
  };
  if (workers == 1 || unique.size() <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, unique.size()); ++w) pool.emplace_back(work);
  }

  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (leader[i] == i) continue;
    out[i] = out[leader[i]];
    if (out[i].response) {
      out[i].response->from_cache = true;
      out[i].response->request_seconds = 0.0;
      out[i].response->probe_index.reset();
      ++cache_hits_;
    }
  }
  return out;
}

std::vector<TimingProbe> Gateway::probes() const {
  std::lock_guard lock(probe_mutex_);
  return probes_;
}

GatewayStats Gateway::stats() const {
  GatewayStats s;
  s.live_requests = live_requests_.load();
  s.cache_hits = cache_hits_.load();
  s.live_embeddings = live_embeddings_.load();
  std::lock_guard lock(probe_mutex_);
  s.probes = probes_.size();
  return s;
}

}  // namespace apt
