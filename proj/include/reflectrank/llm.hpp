#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rr::llm {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 16384;
  std::string model_name;
  std::optional<std::uint64_t> seed;
};

enum class ErrorKind { Timeout, RateLimited, MalformedResponse, AuthFailed };

class LlmError : public std::runtime_error {
 public:
  LlmError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  bool transient() const { return kind_ == ErrorKind::Timeout || kind_ == ErrorKind::RateLimited; }

 private:
  ErrorKind kind_;
};

// Digest over the concatenated role+content sequence. Prompt-builder changes
// deliberately break stale mock scripts.
std::string prompt_digest(const std::vector<ChatMessage>& messages);

class Backend {
 public:
  virtual ~Backend() = default;
  // One attempt, no retries.
  virtual std::string complete_once(const CompletionRequest& request) = 0;
};

struct BackendConfig {
  std::string endpoint_url;
  std::string auth_token;  // overridable via RR_AUTH_TOKEN
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds timeout{30000};
};

// The single entry point all other modules go through. Retries transient
// failures (Timeout, RateLimited) up to config.max_retries; the last error
// is rethrown when retries are exhausted.
std::string complete(Backend& backend, const CompletionRequest& request,
                     const BackendConfig& config);

// OpenAI-style chat-completions endpoint over HTTP.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  std::string complete_once(const CompletionRequest& request) override;
  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
};

// Deterministic scripted backend. Keys are either "digest:<hex>" (exact
// prompt-digest match) or plain scenario labels matched by substring against
// the concatenated prompt text. Digest matches win over labels.
class MockBackend : public Backend {
 public:
  explicit MockBackend(bool strict = true) : strict_(strict) {}

  void register_script(const std::string& key, const std::string& response);
  std::string complete_once(const CompletionRequest& request) override;

 private:
  bool strict_;
  std::map<std::string, std::string> by_digest_;
  std::vector<std::pair<std::string, std::string>> by_label_;  // registration order
  mutable std::mutex mu_;
};

}  // namespace rr::llm
