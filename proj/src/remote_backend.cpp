#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "nl2sql/backends.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;
using std::chrono::milliseconds;

std::string env_or_empty(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  return value == nullptr ? std::string() : std::string(value);
}

std::optional<milliseconds> parse_retry_hint(const httplib::Response& res) {
  if (res.has_header("retry-after-ms")) {
    try {
      return milliseconds(static_cast<long long>(std::stod(res.get_header_value("retry-after-ms"))));
    } catch (const std::exception&) {
    }
  }
  if (res.has_header("Retry-After")) {
    try {
      // Only the delta-seconds form; HTTP dates fall back to backoff.
      return milliseconds(static_cast<long long>(std::stod(res.get_header_value("Retry-After")) * 1000.0));
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

std::string error_detail(const httplib::Response& res) {
  std::string body = res.body.substr(0, 300);
  try {
    json doc = json::parse(res.body);
    if (doc.contains("error") && doc["error"].is_object() && doc["error"].contains("message")) {
      body = doc["error"]["message"].get<std::string>();
    }
  } catch (const std::exception&) {
  }
  return "HTTP " + std::to_string(res.status) + ": " + body;
}

}  // namespace

milliseconds RetryPolicy::backoff(int retry, std::mt19937_64& rng) const {
  double base = static_cast<double>(base_delay.count()) * std::pow(2.0, std::max(0, retry - 1));
  std::uniform_real_distribution<double> spread(1.0 - jitter, 1.0 + jitter);
  double delay = std::min(base * spread(rng), static_cast<double>(max_delay.count()));
  return milliseconds(static_cast<long long>(delay));
}

std::string backend_env_name(std::string_view backend_id, std::string_view suffix) {
  std::string name = "NL2SQL_";
  for (char c : backend_id) {
    name.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_');
  }
  name.push_back('_');
  name.append(suffix);
  return name;
}

RemoteConfig RemoteConfig::from_environment(std::string_view backend_id) {
  RemoteConfig config;
  config.api_key = env_or_empty(backend_env_name(backend_id, "API_KEY"));
  config.base_url = env_or_empty(backend_env_name(backend_id, "BASE_URL"));
  if (config.base_url.empty()) {
    config.base_url = "https://api.openai.com";
  }
  return config;
}

RemoteBackend::RemoteBackend(RemoteConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {
  if (config_.retry.max_attempts < 1) {
    throw ConfigError("retry policy needs at least one attempt");
  }
  // Split an optional path prefix off the base URL.
  std::string url = config_.base_url;
  while (!url.empty() && url.back() == '/') {
    url.pop_back();
  }
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start != std::string::npos) {
    std::string prefix = url.substr(path_start);
    url.resize(path_start);
    // A base URL already ending in /v1 should not produce /v1/v1.
    if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0 &&
        config_.path.rfind("/v1/", 0) == 0) {
      prefix.resize(prefix.size() - 3);
    }
    config_.path = prefix + config_.path;
  }
  scheme_host_ = url;
  sleeper_ = [](milliseconds delay) { std::this_thread::sleep_for(delay); };
}

ChatResponse RemoteBackend::attempt(const ChatRequest& request, std::optional<milliseconds>& retry_hint) {
  retry_hint.reset();
  httplib::Client client(scheme_host_);
  if (!client.is_valid()) {
    throw ConfigError("invalid remote base URL: " + config_.base_url);
  }
  auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
  auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  json body;
  body["model"] = request.model_id;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  body["messages"] = json::array();
  for (const auto& message : request.messages) {
    body["messages"].push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) {
    throw LlmError(LlmError::Kind::kTransport, "transport error: " + httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw LlmError(LlmError::Kind::kAuthentication, error_detail(*res));
  }
  if (res->status == 429) {
    retry_hint = parse_retry_hint(*res);
    throw LlmError(LlmError::Kind::kRateLimit, error_detail(*res));
  }
  if (res->status >= 500 || res->status == 408) {
    retry_hint = parse_retry_hint(*res);
    throw LlmError(LlmError::Kind::kTransport, error_detail(*res));
  }
  if (res->status != 200) {
    throw LlmError(LlmError::Kind::kProtocol, error_detail(*res));
  }

  ChatResponse response;
  response.backend_tag = BackendTag::kRemote;
  try {
    json doc = json::parse(res->body);
    const json& message = doc.at("choices").at(0).at("message");
    response.content = message.at("content").is_null() ? std::string() : message.at("content").get<std::string>();
    if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
      response.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
      response.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw LlmError(LlmError::Kind::kProtocol, std::string("malformed completion body: ") + e.what());
  }
  if (response.prompt_tokens < 0 || response.completion_tokens < 0) {
    throw LlmError(LlmError::Kind::kProtocol, "negative token counts in usage block");
  }
  return response;
}

ChatResponse RemoteBackend::complete(const ChatRequest& request, const CallContext& /*context*/) {
  request.validate();
  auto start = std::chrono::steady_clock::now();
  for (int attempt_no = 1;; ++attempt_no) {
    std::optional<milliseconds> hint;
    try {
      ChatResponse response = attempt(request, hint);
      response.latency = std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - start);
      return response;
    } catch (const LlmError& e) {
      if (!e.retryable() || attempt_no >= config_.retry.max_attempts) {
        throw;
      }
    }
    milliseconds delay;
    {
      std::lock_guard lock(rng_mutex_);
      delay = config_.retry.backoff(attempt_no, rng_);
    }
    if (hint) {
      delay = std::max(delay, std::min(*hint, config_.retry.max_delay));
    }
    sleeper_(delay);
  }
}

}  // namespace nl2sql
