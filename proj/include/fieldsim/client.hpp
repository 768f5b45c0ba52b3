#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fieldsim/util.hpp"
#include "json.hpp"

namespace fieldsim::client {

struct ClientError : Error {
  using Error::Error;
};
// Network-level failure (connect, timeout, malformed transport).
struct TransportError : ClientError {
  using ClientError::ClientError;
};
// Non-retryable HTTP status; the response body is attached.
struct ProviderError : ClientError {
  ProviderError(int status, std::string body, const std::string& message)
      : ClientError(message), status(status), body(std::move(body)) {}
  int status = 0;
  std::string body;
};
// Retry policy exhausted without a successful response.
struct ExhaustedRetries : ClientError {
  using ClientError::ClientError;
};
struct MockScriptError : ClientError {
  using ClientError::ClientError;
};

enum class Role { system, user };

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

inline constexpr const char* kDefaultModelId = "gpt-4-turbo-2024-04-09";

// Single-turn chat request. Absent temperature/seed/max_tokens are omitted
// from the wire body entirely so provider defaults apply.
struct ChatRequest {
  std::string model_id = kDefaultModelId;
  std::vector<Message> messages;
  std::optional<double> temperature;
  std::optional<int64_t> seed;
  std::optional<int> max_tokens;

  bool operator==(const ChatRequest&) const = default;

  static ChatRequest single_user(std::string prompt, std::string model = kDefaultModelId);
  const std::string& last_user_content() const;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  double latency_ms = 0.0;
  int attempt_count = 1;
};

struct RetryPolicy {
  int max_attempts = 4;
  double base_backoff_ms = 500.0;
  double backoff_multiplier = 2.0;
  double backoff_ceiling_ms = 8000.0;
  std::set<int> retryable_statuses = {429, 500, 502, 503, 504};

  // base * multiplier^(k-1), capped at the ceiling; k is 1-based.
  double backoff_ms(int attempt) const;
};

nlohmann::json request_to_wire(const ChatRequest& request);
ChatRequest request_from_wire(const nlohmann::json& body);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

// Remote provider speaking the common chat-completions JSON wire format:
// POST {base_url}/chat/completions with a bearer credential taken from the
// FIELDSIM_API_KEY environment variable. Retries per policy on retryable
// statuses and transport failures; the credential is never copied into
// errors or logs.
class HttpProvider final : public ChatProvider {
 public:
  HttpProvider(std::string base_url, RetryPolicy policy, Clock& clock);
  ChatResponse send(const ChatRequest& request) override;

 private:
  std::string host_;         // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
  RetryPolicy policy_;
  Clock& clock_;
};

// Deterministic scripted provider. Rules are evaluated in file order per
// request: prompt_hash compares the fnv1a64 hex of the last user message,
// substring tests containment, and a sequence rule matches if not yet
// consumed (one use each). First match wins; otherwise the script default
// applies or, if none, the request fails.
class MockProvider final : public ChatProvider {
 public:
  struct Rule {
    enum class Kind { prompt_hash, substring, sequence };
    Kind kind = Kind::substring;
    std::string pattern;
    std::string response;
  };

  MockProvider(std::vector<Rule> rules, std::optional<std::string> default_response);
  static std::unique_ptr<MockProvider> from_json(const nlohmann::json& script);

  ChatResponse send(const ChatRequest& request) override;
  void reset();  // rewinds sequence consumption

 private:
  std::vector<Rule> rules_;
  std::optional<std::string> default_response_;
  std::vector<bool> consumed_;
  std::mutex mutex_;
};

std::unique_ptr<MockProvider> load_mock_script(const std::filesystem::path& path);

// Pure-function provider for tests; deterministic iff the callback is.
class CallbackProvider final : public ChatProvider {
 public:
  explicit CallbackProvider(std::function<std::string(const ChatRequest&)> fn)
      : fn_(std::move(fn)) {}
  ChatResponse send(const ChatRequest& request) override {
    return ChatResponse{fn_(request), "stop", 0.0, 1};
  }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

// Sliding-window limiter: at most `requests` sends may start within any
// `interval_ms` window. Internally synchronized; the one shared object
// between concurrent workers.
class RateLimiter {
 public:
  RateLimiter(int requests, uint64_t interval_ms, Clock& clock);
  static RateLimiter unlimited(Clock& clock);

  // Blocks (via the injected clock) until a slot is available, then records
  // the start. Returns the start time.
  uint64_t acquire();

 private:
  int requests_;  // 0 = unlimited
  uint64_t interval_ms_;
  Clock& clock_;
  std::deque<uint64_t> starts_;
  std::mutex mutex_;
};

ChatResponse send_with_rate_limit(ChatProvider& provider, const ChatRequest& request,
                                  RateLimiter& limiter);

inline constexpr const char* kApiKeyEnvVar = "FIELDSIM_API_KEY";

}  // namespace fieldsim::client
