#include "apt/openai_provider.hpp"

#include <cstdlib>

#include "apt/common.hpp"
#include "httplib.h"
#include "json.hpp"

namespace apt {

std::string api_key_from_env() {
  const char* key = std::getenv("APT_API_KEY");
  return key ? std::string(key) : std::string();
}

OpenAiProvider::OpenAiProvider(OpenAiEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  const auto& url = endpoint_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string OpenAiProvider::post(const std::string& path, const std::string& body) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(endpoint_.connect_timeout_seconds);
  cli.set_read_timeout(endpoint_.read_timeout_seconds);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  auto res = cli.Post(path_prefix_ + path, headers, body, "application/json");
  if (!res) throw TransportError("POST " + path + ": " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status >= 200 && status < 300) return res->body;
  const std::string detail = "POST " + path + ": HTTP " + std::to_string(status) + " " + res->body.substr(0, 200);
  if (status == 408 || status == 429 || status >= 500) throw TransportError(detail);
  throw ConfigurationError(detail);
}

ProviderReply OpenAiProvider::chat(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  body["messages"] = nlohmann::json::array();
  if (!request.system_preamble.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", request.system_preamble}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", request.payload}});

  const auto text = post("/chat/completions", body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw TransportError("chat completion response is not valid JSON with choices");
  }
  const auto& message = j["choices"][0].value("message", nlohmann::json::object());
  ProviderReply reply;
  if (message.contains("content") && message["content"].is_string()) reply.text = message["content"].get<std::string>();
  if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
    reply.completion_tokens = j["usage"]["completion_tokens"].get<int>();
  }
  if (j.contains("created") && j["created"].is_number_integer()) reply.created = j["created"].get<std::int64_t>();
  return reply;
}

ProviderEmbedding OpenAiProvider::embed(const std::string& text, const std::string& model) {
  nlohmann::json body;
  body["model"] = model;
  body["input"] = text;
  const auto raw = post("/embeddings", body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
  const auto j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() || j["data"].empty() ||
      !j["data"][0].contains("embedding") || !j["data"][0]["embedding"].is_array()) {
    throw TransportError("embedding response lacks data[0].embedding");
  }
  ProviderEmbedding out;
  for (const auto& v : j["data"][0]["embedding"]) {
    if (!v.is_number()) throw ContractError("embedding contains a non-numeric entry");
    out.values.push_back(v.get<double>());
  }
  return out;
}

}  // namespace apt
