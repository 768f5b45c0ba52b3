#include "fieldsim/client.hpp"

#include <cmath>
#include <cstdlib>

#include "httplib.h"

namespace fieldsim::client {

namespace {

using nlohmann::json;

std::string role_name(Role role) {
  return role == Role::system ? "system" : "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  throw ClientError("unknown message role: " + s);
}

}  // namespace

ChatRequest ChatRequest::single_user(std::string prompt, std::string model) {
  ChatRequest request;
  request.model_id = std::move(model);
  request.messages.push_back({Role::user, std::move(prompt)});
  return request;
}

const std::string& ChatRequest::last_user_content() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) {
      return it->content;
    }
  }
  throw ClientError("request has no user message");
}

double RetryPolicy::backoff_ms(int attempt) const {
  const double raw = base_backoff_ms * std::pow(backoff_multiplier, attempt - 1);
  return std::min(raw, backoff_ceiling_ms);
}

nlohmann::json request_to_wire(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw ClientError("request has no messages");
  }
  if (request.messages.back().role != Role::user) {
    throw ClientError("final message must have role user");
  }
  json body;
  body["model"] = request.model_id;
  body["messages"] = json::array();
  for (const auto& message : request.messages) {
    body["messages"].push_back({{"role", role_name(message.role)}, {"content", message.content}});
  }
  if (request.temperature) {
    body["temperature"] = *request.temperature;
  }
  if (request.seed) {
    body["seed"] = *request.seed;
  }
  if (request.max_tokens) {
    body["max_tokens"] = *request.max_tokens;
  }
  return body;
}

ChatRequest request_from_wire(const nlohmann::json& body) {
  ChatRequest request;
  request.model_id = body.at("model").get<std::string>();
  for (const auto& message : body.at("messages")) {
    request.messages.push_back({role_from_string(message.at("role").get<std::string>()),
                                message.at("content").get<std::string>()});
  }
  if (body.contains("temperature")) {
    request.temperature = body["temperature"].get<double>();
  }
  if (body.contains("seed")) {
    request.seed = body["seed"].get<int64_t>();
  }
  if (body.contains("max_tokens")) {
    request.max_tokens = body["max_tokens"].get<int>();
  }
  return request;
}

HttpProvider::HttpProvider(std::string base_url, RetryPolicy policy, Clock& clock)
    : policy_(policy), clock_(clock) {
  // Split scheme://host[:port] from any path prefix (e.g. /v1).
  size_t scheme = base_url.find("://");
  size_t path_start = std::string::npos;
  if (scheme != std::string::npos) {
    path_start = base_url.find('/', scheme + 3);
  } else {
    path_start = base_url.find('/');
  }
  if (path_start == std::string::npos) {
    host_ = base_url;
  } else {
    host_ = base_url.substr(0, path_start);
    path_prefix_ = base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
      path_prefix_.pop_back();
    }
  }
  if (host_.empty()) {
    throw ClientError("provider base_url is empty");
  }
}

ChatResponse HttpProvider::send(const ChatRequest& request) {
  const std::string body = request_to_wire(request).dump();
  const std::string path = path_prefix_ + "/chat/completions";
  const char* key = std::getenv(kApiKeyEnvVar);

  const uint64_t start = clock_.now_ms();
  std::string last_failure;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    httplib::Client http(host_);
    http.set_connection_timeout(30);
    http.set_read_timeout(120);
    httplib::Headers headers;
    if (key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto result = http.Post(path, headers, body, "application/json");
    if (!result) {
      last_failure = "transport: " + httplib::to_string(result.error());
      if (attempt < policy_.max_attempts) {
        clock_.sleep_ms(static_cast<uint64_t>(policy_.backoff_ms(attempt)));
        continue;
      }
      break;
    }
    if (result->status == 200) {
      json parsed;
      try {
        parsed = json::parse(result->body);
      } catch (const json::parse_error& e) {
        throw TransportError(std::string("malformed provider response: ") + e.what());
      }
      if (!parsed.contains("choices") || parsed["choices"].empty()) {
        throw ProviderError(result->status, result->body, "provider response has no choices");
      }
      const auto& choice = parsed["choices"][0];
      ChatResponse response;
      response.content = choice.at("message").at("content").get<std::string>();
      response.finish_reason = choice.value("finish_reason", "");
      response.latency_ms = static_cast<double>(clock_.now_ms() - start);
      response.attempt_count = attempt;
      return response;
    }
    if (policy_.retryable_statuses.count(result->status) > 0) {
      last_failure = "status " + std::to_string(result->status);
      if (attempt < policy_.max_attempts) {
        clock_.sleep_ms(static_cast<uint64_t>(policy_.backoff_ms(attempt)));
        continue;
      }
      break;
    }
    throw ProviderError(result->status, result->body,
                        "provider returned status " + std::to_string(result->status));
  }
  throw ExhaustedRetries("gave up after " + std::to_string(policy_.max_attempts) +
                         " attempts (" + last_failure + ")");
}

MockProvider::MockProvider(std::vector<Rule> rules, std::optional<std::string> default_response)
    : rules_(std::move(rules)),
      default_response_(std::move(default_response)),
      consumed_(rules_.size(), false) {}

std::unique_ptr<MockProvider> MockProvider::from_json(const nlohmann::json& script) {
  if (!script.is_object()) {
    throw MockScriptError("mock script must be a JSON object");
  }
  std::optional<std::string> default_response;
  if (script.contains("default") && !script["default"].is_null()) {
    if (!script["default"].is_string()) {
      throw MockScriptError("mock script \"default\" must be a string or null");
    }
    default_response = script["default"].get<std::string>();
  }
  std::vector<Rule> rules;
  if (script.contains("rules")) {
    if (!script["rules"].is_array()) {
      throw MockScriptError("mock script \"rules\" must be an array");
    }
    for (const auto& item : script["rules"]) {
      Rule rule;
      const std::string kind = item.at("match_kind").get<std::string>();
      if (kind == "prompt_hash") {
        rule.kind = Rule::Kind::prompt_hash;
      } else if (kind == "substring") {
        rule.kind = Rule::Kind::substring;
      } else if (kind == "sequence") {
        rule.kind = Rule::Kind::sequence;
      } else {
        throw MockScriptError("unknown match_kind \"" + kind + "\"");
      }
      if (rule.kind != Rule::Kind::sequence) {
        rule.pattern = item.at("pattern").get<std::string>();
      }
      rule.response = item.at("response").get<std::string>();
      rules.push_back(std::move(rule));
    }
  }
  return std::make_unique<MockProvider>(std::move(rules), std::move(default_response));
}

ChatResponse MockProvider::send(const ChatRequest& request) {
  const std::string& prompt = request.last_user_content();
  const std::string prompt_hash = hex64(fnv1a64(prompt));

  std::lock_guard<std::mutex> lock(mutex_);
  for (size_t i = 0; i < rules_.size(); ++i) {
    const Rule& rule = rules_[i];
    bool matched = false;
    switch (rule.kind) {
      case Rule::Kind::prompt_hash:
        matched = rule.pattern == prompt_hash;
        break;
      case Rule::Kind::substring:
        matched = prompt.find(rule.pattern) != std::string::npos;
        break;
      case Rule::Kind::sequence:
        matched = !consumed_[i];
        break;
    }
    if (matched) {
      if (rule.kind == Rule::Kind::sequence) {
        consumed_[i] = true;
      }
      return ChatResponse{rule.response, "stop", 0.0, 1};
    }
  }
  if (default_response_) {
    return ChatResponse{*default_response_, "stop", 0.0, 1};
  }
  throw MockScriptError("no mock rule matches request (prompt_hash " + prompt_hash + ")");
}

void MockProvider::reset() {
  std::lock_guard<std::mutex> lock(mutex_);
  std::fill(consumed_.begin(), consumed_.end(), false);
}

std::unique_ptr<MockProvider> load_mock_script(const std::filesystem::path& path) {
  nlohmann::json script;
  try {
    script = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw MockScriptError("malformed mock script " + path.string() + ": " + e.what());
  }
  return MockProvider::from_json(script);
}

RateLimiter::RateLimiter(int requests, uint64_t interval_ms, Clock& clock)
    : requests_(requests), interval_ms_(interval_ms), clock_(clock) {}

RateLimiter RateLimiter::unlimited(Clock& clock) {
  return RateLimiter(0, 0, clock);
}

uint64_t RateLimiter::acquire() {
  std::lock_guard<std::mutex> lock(mutex_);
  if (requests_ <= 0) {
    return clock_.now_ms();
  }
  for (;;) {
    const uint64_t now = clock_.now_ms();
    while (!starts_.empty() && starts_.front() + interval_ms_ <= now) {
      starts_.pop_front();
    }
    if (static_cast<int>(starts_.size()) < requests_) {
      starts_.push_back(now);
      return now;
    }
    const uint64_t wake = starts_.front() + interval_ms_;
    clock_.sleep_ms(wake - now);
  }
}

ChatResponse send_with_rate_limit(ChatProvider& provider, const ChatRequest& request,
                                  RateLimiter& limiter) {
  limiter.acquire();
  return provider.send(request);
}

}  // namespace fieldsim::client
