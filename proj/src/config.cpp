#include "nl2sql/config.hpp"

#include <cstdlib>
#include <json.hpp>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;

const json* member(const json& object, const char* key) {
  auto it = object.find(key);
  return it == object.end() || it->is_null() ? nullptr : &*it;
}

template <typename T>
T read_as(const json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path path(value);
  return path.is_absolute() ? path : base / path;
}

std::chrono::milliseconds seconds_to_ms(double seconds, const std::string& where) {
  if (!(seconds > 0.0)) {
    throw ConfigError(where + " must be positive");
  }
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

void reject_secrets(const json& node, const std::string& where) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      std::string lower = to_lower(key);
      if (lower == "api_key" || lower == "apikey" || lower == "token" || lower == "authorization") {
        throw ConfigError(where + "." + key + ": secrets are read from environment variables only");
      }
      reject_secrets(value, where + "." + key);
    }
  } else if (node.is_array()) {
    for (const auto& value : node) {
      reject_secrets(value, where);
    }
  }
}

RouteTarget route_target(const json& node, const std::string& where) {
  if (!node.is_object()) {
    throw ConfigError(where + " must be an object with \"backend\" and \"model\"");
  }
  RouteTarget target;
  if (const json* backend = member(node, "backend")) {
    target.backend_id = read_as<std::string>(*backend, where + ".backend");
  }
  if (const json* model = member(node, "model")) {
    target.model_id = read_as<std::string>(*model, where + ".model");
  }
  if (target.backend_id.empty() || target.model_id.empty()) {
    throw ConfigError(where + " needs both \"backend\" and \"model\"");
  }
  return target;
}

}  // namespace

const BackendSpec* AppConfig::find_backend(std::string_view id) const {
  for (const auto& backend : backends) {
    if (backend.id == id) {
      return &backend;
    }
  }
  return nullptr;
}

void AppConfig::resolve_route() {
  ModelRoute route;
  for (AgentRole role : kAllRoles) {
    auto it = routes.find(role);
    if (it != routes.end()) {
      route.set(role, it->second);
    } else if (default_route) {
      route.set(role, *default_route);
    } else {
      throw ConfigError("no model route for role " + std::string(to_string(role)) +
                        "; set a default route or pass --backend and --model");
    }
    const RouteTarget& target = route.at(role);
    if (find_backend(target.backend_id) == nullptr) {
      throw ConfigError("role " + std::string(to_string(role)) + " routes to undeclared backend '" +
                        target.backend_id + "'");
    }
  }
  route.validate();
  pipeline.route = std::move(route);
}

AppConfig parse_config_json(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  reject_secrets(doc, "config");

  AppConfig config;
  if (const json* backends = member(doc, "backends")) {
    if (!backends->is_object()) {
      throw ConfigError("backends must be an object keyed by backend id");
    }
    for (const auto& [id, node] : backends->items()) {
      const std::string where = "backends." + id;
      if (!node.is_object()) {
        throw ConfigError(where + " must be an object");
      }
      BackendSpec spec;
      spec.id = id;
      std::string type = node.contains("type") ? read_as<std::string>(node["type"], where + ".type") : "remote";
      if (type == "remote") {
        spec.kind = BackendSpec::Kind::kRemote;
        if (const json* url = member(node, "base_url")) {
          spec.base_url = read_as<std::string>(*url, where + ".base_url");
        }
        if (const json* timeout = member(node, "timeout_s")) {
          spec.request_timeout = seconds_to_ms(read_as<double>(*timeout, where + ".timeout_s"), where + ".timeout_s");
        }
        if (const json* attempts = member(node, "max_attempts")) {
          spec.retry.max_attempts = read_as<int>(*attempts, where + ".max_attempts");
          if (spec.retry.max_attempts < 1) {
            throw ConfigError(where + ".max_attempts must be >= 1");
          }
        }
        if (const json* delay = member(node, "base_delay_ms")) {
          spec.retry.base_delay = std::chrono::milliseconds(read_as<long long>(*delay, where + ".base_delay_ms"));
        }
      } else if (type == "scripted") {
        spec.kind = BackendSpec::Kind::kScripted;
        const json* script = member(node, "script");
        if (script == nullptr) {
          throw ConfigError(where + " (scripted) needs a \"script\" file");
        }
        spec.script = resolve(base_dir, read_as<std::string>(*script, where + ".script"));
        if (const json* strict = member(node, "strict")) {
          spec.strict = read_as<bool>(*strict, where + ".strict");
        }
      } else {
        throw ConfigError(where + ".type must be \"remote\" or \"scripted\"");
      }
      config.backends.push_back(std::move(spec));
    }
  }

  if (const json* routes = member(doc, "routes")) {
    if (!routes->is_object()) {
      throw ConfigError("routes must be an object keyed by agent role");
    }
    for (const auto& [key, node] : routes->items()) {
      if (key == "default") {
        config.default_route = route_target(node, "routes.default");
        continue;
      }
      auto role = parse_role(key);
      if (!role) {
        throw ConfigError("routes." + key + ": unknown agent role");
      }
      config.routes[*role] = route_target(node, "routes." + key);
    }
  }

  if (const json* prices = member(doc, "prices")) {
    if (!prices->is_object()) {
      throw ConfigError("prices must be an object keyed by model id");
    }
    double fallback = kDefaultPricePerMTok;
    if (const json* value = member(*prices, "default")) {
      fallback = read_as<double>(*value, "prices.default");
    }
    config.prices = PriceTable(fallback);
    for (const auto& [model, value] : prices->items()) {
      if (model != "default") {
        config.prices.set(model, read_as<double>(value, "prices." + model));
      }
    }
  }

  if (const json* pipeline = member(doc, "pipeline")) {
    if (!pipeline->is_object()) {
      throw ConfigError("pipeline must be an object");
    }
    PipelineConfig& p = config.pipeline;
    for (const auto& [key, value] : pipeline->items()) {
      const std::string where = "pipeline." + key;
      if (key == "max_correction_attempts") {
        p.max_correction_attempts = read_as<int>(value, where);
      } else if (key == "skip_query_plan") {
        p.skip_query_plan = read_as<bool>(value, where);
      } else if (key == "skip_correction") {
        p.skip_correction = read_as<bool>(value, where);
      } else if (key == "trigger") {
        auto trigger = parse_trigger(read_as<std::string>(value, where));
        if (!trigger) {
          throw ConfigError(where + " must be gold_mismatch or execution_error_only");
        }
        p.trigger = *trigger;
        config.trigger_explicit = true;
      } else if (key == "timeout_s") {
        p.timeout = seconds_to_ms(read_as<double>(value, where), where);
      } else if (key == "link_policy") {
        auto policy = parse_link_policy(read_as<std::string>(value, where));
        if (!policy) {
          throw ConfigError(where + " must be repair or fail");
        }
        p.link_policy = *policy;
      } else if (key == "edge_policy") {
        std::string policy = read_as<std::string>(value, where);
        if (policy != "warn" && policy != "error") {
          throw ConfigError(where + " must be warn or error");
        }
        p.edge_policy = policy == "warn" ? EdgePolicy::kWarn : EdgePolicy::kError;
      } else if (key == "sql_agent_sees_schema") {
        p.agent.sql_agent_sees_schema = read_as<bool>(value, where);
      } else if (key == "temperature") {
        p.agent.temperature = read_as<double>(value, where);
      } else if (key == "max_output_tokens") {
        p.agent.max_output_tokens = read_as<int>(value, where);
      } else {
        throw ConfigError(where + ": unknown setting");
      }
    }
    if (p.max_correction_attempts < 0) {
      throw ConfigError("pipeline.max_correction_attempts must be >= 0");
    }
    if (p.agent.temperature < 0.0 || p.agent.max_output_tokens <= 0) {
      throw ConfigError("pipeline temperature must be >= 0 and max_output_tokens positive");
    }
  }

  if (const json* templates = member(doc, "templates_dir")) {
    config.templates_dir = resolve(base_dir, read_as<std::string>(*templates, "templates_dir"));
  }
  if (const json* cache = member(doc, "cache")) {
    if (const json* dir = member(*cache, "dir")) {
      config.cache_dir = resolve(base_dir, read_as<std::string>(*dir, "cache.dir"));
    }
    if (const json* mode = member(*cache, "mode")) {
      auto parsed = parse_cache_mode(read_as<std::string>(*mode, "cache.mode"));
      if (!parsed) {
        throw ConfigError("cache.mode must be off, read-write or replay-only");
      }
      config.cache_mode = *parsed;
    }
  }
  if (const json* limit = member(doc, "max_in_flight")) {
    config.max_in_flight = read_as<std::size_t>(*limit, "max_in_flight");
  }
  if (const json* parallelism = member(doc, "parallelism")) {
    config.parallelism = read_as<std::size_t>(*parallelism, "parallelism");
  }
  if (const json* data = member(doc, "data")) {
    for (auto [key, field] : {std::pair{"questions", &config.questions}, std::pair{"tables", &config.tables},
                              std::pair{"db_root", &config.db_root}}) {
      if (const json* value = member(*data, key)) {
        *field = resolve(base_dir, read_as<std::string>(*value, std::string("data.") + key));
      }
    }
  }
  return config;
}

AppConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse_config_json(read_file(path), std::filesystem::absolute(path).parent_path());
}

std::unique_ptr<Gateway> build_gateway(const AppConfig& config) {
  auto gateway = std::make_unique<Gateway>(config.max_in_flight);
  for (const auto& spec : config.backends) {
    if (spec.kind == BackendSpec::Kind::kScripted) {
      auto backend = std::make_shared<ScriptedBackend>(spec.strict);
      if (!std::filesystem::is_regular_file(*spec.script)) {
        throw ConfigError("script file not found: " + spec.script->string());
      }
      backend->load_json_file(*spec.script);
      gateway->add_backend(spec.id, std::move(backend));
    } else {
      RemoteConfig remote = RemoteConfig::from_environment(spec.id);
      const std::string env_url = backend_env_name(spec.id, "BASE_URL");
      if (spec.base_url && std::getenv(env_url.c_str()) == nullptr) {
        remote.base_url = *spec.base_url;
      }
      remote.request_timeout = spec.request_timeout;
      remote.retry = spec.retry;
      gateway->add_backend(spec.id, std::make_shared<RemoteBackend>(std::move(remote)));
    }
  }
  if (config.cache_mode != CacheMode::kOff) {
    if (!config.cache_dir) {
      throw ConfigError("cache mode " + std::string(to_string(config.cache_mode)) + " needs a cache directory");
    }
    gateway->set_cache(std::make_shared<ReplayCache>(*config.cache_dir), config.cache_mode);
  }
  return gateway;
}

}  // namespace nl2sql
