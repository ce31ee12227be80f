#include "nl2sql/llm.hpp"

#include <charconv>
#include <cmath>

#include "nl2sql/strings.hpp"

namespace nl2sql {

std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::kSchemaLinking:
      return "schema_linking";
    case AgentRole::kSubproblem:
      return "subproblem";
    case AgentRole::kQueryPlan:
      return "query_plan";
    case AgentRole::kSql:
      return "sql";
    case AgentRole::kCorrectionPlan:
      return "correction_plan";
    case AgentRole::kCorrectionSql:
      return "correction_sql";
  }
  return "sql";
}

std::optional<AgentRole> parse_role(std::string_view text) {
  for (AgentRole role : kAllRoles) {
    if (to_string(role) == text) {
      return role;
    }
  }
  return std::nullopt;
}

std::string_view to_string(MessageRole role) {
  switch (role) {
    case MessageRole::kSystem:
      return "system";
    case MessageRole::kUser:
      return "user";
    case MessageRole::kAssistant:
      return "assistant";
  }
  return "user";
}

std::optional<MessageRole> parse_message_role(std::string_view text) {
  for (MessageRole role : {MessageRole::kSystem, MessageRole::kUser, MessageRole::kAssistant}) {
    if (to_string(role) == text) {
      return role;
    }
  }
  return std::nullopt;
}

void ChatRequest::validate() const {
  if (messages.empty()) {
    throw ValidationError("chat request has no messages");
  }
  if (messages.front().role == MessageRole::kAssistant) {
    throw ValidationError("first chat message must come from system or user");
  }
  if (!(temperature >= 0.0)) {
    throw ValidationError("temperature must be >= 0");
  }
  if (max_output_tokens <= 0) {
    throw ValidationError("max_output_tokens must be positive");
  }
}

std::string_view to_string(BackendTag tag) {
  switch (tag) {
    case BackendTag::kRemote:
      return "remote";
    case BackendTag::kScripted:
      return "scripted";
    case BackendTag::kReplay:
      return "replay";
  }
  return "scripted";
}

std::string cache_key(const ChatRequest& request) {
  // Length-prefixed fields keep the encoding unambiguous.
  std::string canonical;
  auto field = [&](std::string_view value) {
    canonical += std::to_string(value.size());
    canonical.push_back(':');
    canonical.append(value);
    canonical.push_back('\n');
  };
  field(request.model_id);
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), request.temperature);
  field(ec == std::errc() ? std::string_view(buf, static_cast<std::size_t>(end - buf)) : "nan");
  for (const auto& message : request.messages) {
    field(to_string(message.role));
    field(message.content);
  }
  return sha256_hex(canonical);
}

double token_cost(std::int64_t tokens, double price_per_mtok) {
  return static_cast<double>(tokens) * price_per_mtok / 1e6;
}

double round_to_cents(double amount) { return std::floor(amount * 100.0 + 0.5) / 100.0; }

CostSummary accumulate_usage(std::span<const ChatResponse> responses, double price_per_mtok) {
  if (price_per_mtok < 0.0) {
    throw ValidationError("price per million tokens must be >= 0");
  }
  CostSummary summary;
  for (const auto& response : responses) {
    summary.prompt_tokens += response.prompt_tokens;
    summary.completion_tokens += response.completion_tokens;
  }
  summary.total_tokens = summary.prompt_tokens + summary.completion_tokens;
  summary.cost = token_cost(summary.total_tokens, price_per_mtok);
  return summary;
}

ModelRoute ModelRoute::uniform(RouteTarget target) {
  ModelRoute route;
  for (AgentRole role : kAllRoles) {
    route.set(role, target);
  }
  return route;
}

void ModelRoute::set(AgentRole role, RouteTarget target) { targets_[role] = std::move(target); }

const RouteTarget& ModelRoute::at(AgentRole role) const {
  auto it = targets_.find(role);
  if (it == targets_.end()) {
    throw ConfigError("no model route for role " + std::string(to_string(role)));
  }
  return it->second;
}

bool ModelRoute::complete() const { return targets_.size() == kAllRoles.size(); }

void ModelRoute::validate() const {
  for (AgentRole role : kAllRoles) {
    const RouteTarget& target = at(role);
    if (target.backend_id.empty() || target.model_id.empty()) {
      throw ConfigError("route for role " + std::string(to_string(role)) + " needs a backend and a model");
    }
  }
}

}  // namespace nl2sql
