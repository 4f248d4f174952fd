#pragma once

#include <chrono>
#include <functional>
#include <stdexcept>
#include <string>

namespace citerec {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Endpoint of an OpenAI-style chat-completions service.
struct ChatConfig {
  std::string url;  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string api_key;
  std::string model;
  std::chrono::milliseconds timeout{60000};
  double temperature = 0.0;

  /// CITEREC_LLM_URL, CITEREC_LLM_API_KEY, CITEREC_LLM_TIMEOUT_MS and the
  /// model name from `model_variable`. Throws TransportError when the URL
  /// or model is unset.
  static ChatConfig from_env(const char* model_variable);
};

inline constexpr const char* kJudgeModelVariable = "CITEREC_JUDGE_MODEL";
inline constexpr const char* kGenerationModelVariable = "CITEREC_GEN_MODEL";

/// Prompt in, completion text out.
using CompletionFn = std::function<std::string(const std::string& prompt)>;

/// Sends one user message and returns choices[0].message.content. Any
/// network, status or shape problem is a TransportError.
std::string chat_complete(const ChatConfig& config, const std::string& prompt);

CompletionFn remote_completion(ChatConfig config);

}  // namespace citerec
