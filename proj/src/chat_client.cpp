#include "citerec/chat_client.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace citerec {

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v == nullptr ? std::string() : std::string(v);
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint URL has no scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

ChatConfig ChatConfig::from_env(const char* model_variable) {
  ChatConfig c;
  c.url = env_or_empty("CITEREC_LLM_URL");
  c.api_key = env_or_empty("CITEREC_LLM_API_KEY");
  c.model = env_or_empty(model_variable);
  if (const auto t = env_or_empty("CITEREC_LLM_TIMEOUT_MS"); !t.empty()) {
    c.timeout = std::chrono::milliseconds(std::stoll(t));
  }
  if (c.url.empty()) throw TransportError("CITEREC_LLM_URL is not set");
  if (c.model.empty()) throw TransportError(std::string(model_variable) + " is not set");
  return c;
}

std::string chat_complete(const ChatConfig& config, const std::string& prompt) {
  const auto target = split_url(config.url);
  httplib::Client client(target.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
  const nlohmann::json body = {
      {"model", config.model},
      {"temperature", config.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};

  auto res = client.Post(target.path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + config.url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw TransportError("endpoint returned invalid JSON");
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("endpoint reply has no choices[0].message.content");
  }
}

CompletionFn remote_completion(ChatConfig config) {
  return [config = std::move(config)](const std::string& prompt) { return chat_complete(config, prompt); };
}

}  // namespace citerec
