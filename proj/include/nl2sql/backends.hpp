#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nl2sql/llm.hpp"

namespace nl2sql {

struct ScriptedReply {
  std::string content;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

// Deterministic backend for tests and offline runs. A reply keyed by
// cache_key wins; otherwise the Nth call for a role within a sample gets the
// Nth ordered reply for that (sample, role), then the global ordered list.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(bool strict = true) : strict_(strict) {}

  // JSON shape:
  //   {"keyed": {"<cache key>": reply},
  //    "ordered": {"<role>": [reply, ...]},
  //    "samples": {"<sample id>": {"<role>": [reply, ...]}}}
  // where reply is either a string or {"content", "prompt_tokens", "completion_tokens"}.
  // Throws FormatError on malformed scripts.
  void load_json_file(const std::filesystem::path& path);
  void load_json_text(std::string_view text);

  void add_keyed(std::string key, ScriptedReply reply);
  void add_ordered(AgentRole role, ScriptedReply reply);
  void add_ordered(const std::string& sample_id, AgentRole role, ScriptedReply reply);

  ChatResponse complete(const ChatRequest& request, const CallContext& context) override;

  std::size_t calls() const;
  // Requests seen so far, in arrival order.
  std::vector<std::pair<CallContext, ChatRequest>> history() const;

 private:
  using Scope = std::pair<std::string, AgentRole>;

  bool strict_;
  mutable std::mutex mutex_;
  std::map<std::string, ScriptedReply> keyed_;
  std::map<Scope, std::vector<ScriptedReply>> ordered_;
  std::map<Scope, std::size_t> cursor_;
  std::vector<std::pair<CallContext, ChatRequest>> history_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double jitter = 0.2;
  std::chrono::milliseconds max_delay{60000};

  // Delay before retry number `retry` (1-based), ignoring server hints.
  std::chrono::milliseconds backoff(int retry, std::mt19937_64& rng) const;
};

struct RemoteConfig {
  // Scheme + host [+ port], e.g. https://api.openai.com
  std::string base_url;
  std::string api_key;
  std::string path = "/v1/chat/completions";
  std::chrono::milliseconds request_timeout{120000};
  RetryPolicy retry;

  // Reads NL2SQL_<ID>_API_KEY and NL2SQL_<ID>_BASE_URL, where ID is the
  // backend id upper-cased with non-alphanumerics mapped to '_'.
  static RemoteConfig from_environment(std::string_view backend_id);
};

// "NL2SQL_<ID>_<suffix>" for a backend id.
std::string backend_env_name(std::string_view backend_id, std::string_view suffix);

// OpenAI-compatible chat-completions client.
class RemoteBackend : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit RemoteBackend(RemoteConfig config, std::uint64_t seed = std::random_device{}());

  // Replaces the sleep used between retries; tests use it to observe delays.
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  ChatResponse complete(const ChatRequest& request, const CallContext& context) override;

 private:
  ChatResponse attempt(const ChatRequest& request, std::optional<std::chrono::milliseconds>& retry_hint);

  RemoteConfig config_;
  std::string scheme_host_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  Sleeper sleeper_;
};

enum class CacheMode { kOff, kReadWrite, kReplayOnly };

std::string_view to_string(CacheMode mode);
std::optional<CacheMode> parse_cache_mode(std::string_view text);

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

// One JSONL file per cache key: a metadata line, then a content line.
class ReplayCache {
 public:
  explicit ReplayCache(std::filesystem::path directory);

  std::optional<ChatResponse> lookup(const std::string& key) const;
  void store(const std::string& key, const ChatRequest& request, const ChatResponse& response);
  CacheStats stats() const;
  std::size_t clear();
  const std::filesystem::path& directory() const { return directory_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const;

  std::filesystem::path directory_;
  mutable std::mutex write_mutex_;
};

// Counting semaphore bounding concurrent backend calls.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit);

  class Permit {
   public:
    explicit Permit(InFlightLimiter& owner);
    ~Permit();
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InFlightLimiter& owner_;
  };

  std::size_t limit() const { return limit_; }
  std::size_t peak() const;

 private:
  void acquire();
  void release();

  std::size_t limit_;
  std::size_t active_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
};

inline constexpr std::size_t kDefaultMaxInFlight = 4;

// Routes calls to named backends, consulting the replay cache first.
class Gateway {
 public:
  explicit Gateway(std::size_t max_in_flight = kDefaultMaxInFlight) : limiter_(max_in_flight) {}

  void add_backend(std::string id, std::shared_ptr<ChatBackend> backend);
  bool has_backend(const std::string& id) const;
  void set_cache(std::shared_ptr<ReplayCache> cache, CacheMode mode);

  ChatResponse complete(const std::string& backend_id, const ChatRequest& request, const CallContext& context);

  std::size_t max_in_flight() const { return limiter_.limit(); }
  std::size_t peak_in_flight() const { return limiter_.peak(); }

 private:
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
  std::shared_ptr<ReplayCache> cache_;
  CacheMode cache_mode_ = CacheMode::kOff;
  InFlightLimiter limiter_;
};

}  // namespace nl2sql
