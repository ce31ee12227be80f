#include <atomic>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "nl2sql/backends.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;

bool is_cache_key(const std::string& key) {
  if (key.size() != 64) {
    return false;
  }
  for (char c : key) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string_view to_string(CacheMode mode) {
  switch (mode) {
    case CacheMode::kOff:
      return "off";
    case CacheMode::kReadWrite:
      return "read-write";
    case CacheMode::kReplayOnly:
      return "replay-only";
  }
  return "off";
}

std::optional<CacheMode> parse_cache_mode(std::string_view text) {
  for (CacheMode mode : {CacheMode::kOff, CacheMode::kReadWrite, CacheMode::kReplayOnly}) {
    if (to_string(mode) == text) {
      return mode;
    }
  }
  return std::nullopt;
}

ReplayCache::ReplayCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(directory_, ec);
  if (ec || !std::filesystem::is_directory(directory_)) {
    throw IoError("cannot create cache directory " + directory_.string());
  }
}

std::filesystem::path ReplayCache::entry_path(const std::string& key) const {
  if (!is_cache_key(key)) {
    throw ValidationError("malformed cache key: " + key);
  }
  return directory_ / (key + ".jsonl");
}

std::optional<ChatResponse> ReplayCache::lookup(const std::string& key) const {
  std::filesystem::path path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  std::string meta_line;
  std::string content_line;
  if (!std::getline(in, meta_line) || !std::getline(in, content_line)) {
    return std::nullopt;
  }
  try {
    json meta = json::parse(meta_line);
    json content = json::parse(content_line);
    ChatResponse response;
    response.content = content.at("content").get<std::string>();
    response.prompt_tokens = meta.at("prompt_tokens").get<std::int64_t>();
    response.completion_tokens = meta.at("completion_tokens").get<std::int64_t>();
    response.backend_tag = BackendTag::kReplay;
    return response;
  } catch (const json::exception&) {
    // A torn or foreign file counts as a miss.
    return std::nullopt;
  }
}

void ReplayCache::store(const std::string& key, const ChatRequest& request, const ChatResponse& response) {
  std::filesystem::path path = entry_path(key);
  json meta = {{"key", key},
               {"model_id", request.model_id},
               {"temperature", request.temperature},
               {"prompt_tokens", response.prompt_tokens},
               {"completion_tokens", response.completion_tokens},
               {"latency_ms", response.latency.count()},
               {"source", to_string(response.backend_tag)}};
  json content = {{"content", response.content}};

  static std::atomic<unsigned long> counter{0};
  std::lock_guard lock(write_mutex_);
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << meta.dump() << '\n' << content.dump() << '\n';
    if (!out) {
      throw IoError("cannot write cache entry " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot publish cache entry " + path.string());
  }
}

CacheStats ReplayCache::stats() const {
  CacheStats stats;
  for (const auto& entry : std::filesystem::directory_iterator(directory_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl" && is_cache_key(entry.path().stem().string())) {
      ++stats.entries;
      stats.bytes += entry.file_size();
    }
  }
  return stats;
}

std::size_t ReplayCache::clear() {
  std::lock_guard lock(write_mutex_);
  std::vector<std::filesystem::path> doomed;
  for (const auto& entry : std::filesystem::directory_iterator(directory_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl" && is_cache_key(entry.path().stem().string())) {
      doomed.push_back(entry.path());
    }
  }
  for (const auto& path : doomed) {
    std::filesystem::remove(path);
  }
  return doomed.size();
}

InFlightLimiter::InFlightLimiter(std::size_t limit) : limit_(limit) {
  if (limit_ == 0) {
    throw ConfigError("in-flight limit must be positive");
  }
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return active_ < limit_; });
  ++active_;
  peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    --active_;
  }
  cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

InFlightLimiter::Permit::Permit(InFlightLimiter& owner) : owner_(owner) { owner_.acquire(); }

InFlightLimiter::Permit::~Permit() { owner_.release(); }

void Gateway::add_backend(std::string id, std::shared_ptr<ChatBackend> backend) {
  if (id.empty() || !backend) {
    throw ConfigError("backend needs an id and an implementation");
  }
  backends_[std::move(id)] = std::move(backend);
}

bool Gateway::has_backend(const std::string& id) const { return backends_.contains(id); }

void Gateway::set_cache(std::shared_ptr<ReplayCache> cache, CacheMode mode) {
  if (mode != CacheMode::kOff && !cache) {
    throw ConfigError("cache mode " + std::string(to_string(mode)) + " needs a cache directory");
  }
  cache_ = std::move(cache);
  cache_mode_ = mode;
}

ChatResponse Gateway::complete(const std::string& backend_id, const ChatRequest& request, const CallContext& context) {
  request.validate();
  std::string key;
  if (cache_mode_ != CacheMode::kOff) {
    key = cache_key(request);
    if (auto hit = cache_->lookup(key)) {
      return *hit;
    }
    if (cache_mode_ == CacheMode::kReplayOnly) {
      throw LlmError(LlmError::Kind::kCacheMiss, "replay-only cache has no entry for role " +
                                                     std::string(to_string(context.role)) + " (key " + key + ")");
    }
  }
  auto it = backends_.find(backend_id);
  if (it == backends_.end()) {
    throw ConfigError("unknown backend '" + backend_id + "'");
  }
  ChatResponse response;
  {
    InFlightLimiter::Permit permit(limiter_);
    response = it->second->complete(request, context);
  }
  if (cache_mode_ == CacheMode::kReadWrite) {
    cache_->store(key, request, response);
  }
  return response;
}

}  // namespace nl2sql
