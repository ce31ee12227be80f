#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/backends.hpp"
#include "nl2sql/evalkit.hpp"
#include "nl2sql/pipeline.hpp"

namespace nl2sql {

struct BackendSpec {
  enum class Kind { kRemote, kScripted };

  std::string id;
  Kind kind = Kind::kRemote;
  // Remote only. The environment variable wins over this value.
  std::optional<std::string> base_url;
  std::chrono::milliseconds request_timeout{120000};
  RetryPolicy retry;
  // Scripted only.
  std::optional<std::filesystem::path> script;
  bool strict = true;
};

// Everything a run needs, read from a JSON config file and then overridden by
// flags. API keys are never read from here.
struct AppConfig {
  std::vector<BackendSpec> backends;
  // Applied to roles without an explicit route.
  std::optional<RouteTarget> default_route;
  std::map<AgentRole, RouteTarget> routes;
  PriceTable prices;
  PipelineConfig pipeline;
  // Set when the file names a trigger; otherwise ask picks one from --gold.
  bool trigger_explicit = false;
  std::optional<std::filesystem::path> templates_dir;
  std::optional<std::filesystem::path> cache_dir;
  CacheMode cache_mode = CacheMode::kOff;
  std::size_t max_in_flight = kDefaultMaxInFlight;
  std::size_t parallelism = 4;
  std::optional<std::filesystem::path> questions;
  std::optional<std::filesystem::path> tables;
  std::optional<std::filesystem::path> db_root;

  // Fills pipeline.route from default_route and routes. Throws ConfigError
  // when a role stays unmapped or names an undeclared backend.
  void resolve_route();
  const BackendSpec* find_backend(std::string_view id) const;
};

// Relative paths resolve against `base_dir`. Throws ConfigError.
AppConfig parse_config_json(std::string_view text, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

// Instantiates the declared backends and the cache.
std::unique_ptr<Gateway> build_gateway(const AppConfig& config);

}  // namespace nl2sql
