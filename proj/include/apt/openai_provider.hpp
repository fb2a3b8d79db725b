#pragma once

#include <string>

#include "apt/llm_gateway.hpp"

namespace apt {

struct OpenAiEndpoint {
  /// e.g. "https://api.openai.com/v1" or "http://127.0.0.1:8080/v1".
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  int connect_timeout_seconds = 10;
  int read_timeout_seconds = 120;
};

/// Reads the API key from APT_API_KEY.
std::string api_key_from_env();

/// Client for OpenAI-compatible /chat/completions and /embeddings endpoints.
class OpenAiProvider : public ChatProvider {
 public:
  explicit OpenAiProvider(OpenAiEndpoint endpoint);

  ProviderReply chat(const ChatRequest& request) override;
  ProviderEmbedding embed(const std::string& text, const std::string& model) override;
  std::string name() const override { return "openai"; }

 private:
  std::string post(const std::string& path, const std::string& body);

  OpenAiEndpoint endpoint_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace apt
