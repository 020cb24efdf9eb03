#include "reflectrank/llm.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "reflectrank/common.hpp"

namespace rr::llm {

using nlohmann::json;

std::string prompt_digest(const std::vector<ChatMessage>& messages) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& m : messages) {
    h = fnv1a64(m.role, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(m.content, h);
    h = fnv1a64("\x1e", h);
  }
  return to_hex(h);
}

std::string complete(Backend& backend, const CompletionRequest& request,
                     const BackendConfig& config) {
  auto delay = config.initial_backoff;
  int attempt = 0;
  while (true) {
    try {
      return backend.complete_once(request);
    } catch (const LlmError& e) {
      if (!e.transient() || attempt >= config.max_retries) throw;
      ++attempt;
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(delay.count()) * config.backoff_multiplier));
    }
  }
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  if (const char* tok = std::getenv("RR_AUTH_TOKEN")) config_.auth_token = tok;
}

std::string HttpBackend::complete_once(const CompletionRequest& request) {
  // split endpoint_url into host part and path
  std::string url = config_.endpoint_url;
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string host = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);

  httplib::Client client(host);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout));

  json body;
  body["model"] = request.model_name;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  if (request.seed) body["seed"] = *request.seed;
  body["messages"] = json::array();
  for (const auto& m : request.messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Headers headers;
  if (!config_.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + config_.auth_token);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw LlmError(ErrorKind::Timeout, "no response from " + host);
  if (res->status == 401 || res->status == 403)
    throw LlmError(ErrorKind::AuthFailed, "auth failed (" + std::to_string(res->status) + ")");
  if (res->status == 429)
    throw LlmError(ErrorKind::RateLimited, "rate limited");
  if (res->status >= 500)
    throw LlmError(ErrorKind::RateLimited, "server error " + std::to_string(res->status));
  if (res->status != 200)
    throw LlmError(ErrorKind::MalformedResponse, "unexpected status " + std::to_string(res->status));

  try {
    json j = json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw LlmError(ErrorKind::MalformedResponse, std::string("bad response body: ") + e.what());
  }
}

void MockBackend::register_script(const std::string& key, const std::string& response) {
  std::lock_guard lock(mu_);
  if (key.rfind("digest:", 0) == 0) {
    std::string digest = key.substr(7);
    if (strict_ && by_digest_.count(digest))
      throw LlmError(ErrorKind::MalformedResponse, "duplicate mock key " + key);
    by_digest_[digest] = response;
    return;
  }
  for (auto& [label, resp] : by_label_) {
    if (label == key) {
      if (strict_) throw LlmError(ErrorKind::MalformedResponse, "duplicate mock key " + key);
      resp = response;  // lenient: last write wins
      return;
    }
  }
  by_label_.emplace_back(key, response);
}

std::string MockBackend::complete_once(const CompletionRequest& request) {
  std::lock_guard lock(mu_);
  std::string digest = prompt_digest(request.messages);
  if (auto it = by_digest_.find(digest); it != by_digest_.end()) return it->second;
  std::string flat;
  for (const auto& m : request.messages) {
    flat += m.content;
    flat += '\n';
  }
  // later registrations shadow earlier ones in lenient mode
  const std::string* hit = nullptr;
  for (const auto& [label, resp] : by_label_)
    if (flat.find(label) != std::string::npos) hit = &resp;
  if (hit) return *hit;
  throw LlmError(ErrorKind::MalformedResponse, "unscripted prompt (digest " + digest + ")");
}

}  // namespace rr::llm
