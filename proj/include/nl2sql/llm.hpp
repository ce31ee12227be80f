#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/errors.hpp"

namespace nl2sql {

enum class AgentRole { kSchemaLinking, kSubproblem, kQueryPlan, kSql, kCorrectionPlan, kCorrectionSql };

inline constexpr std::array<AgentRole, 6> kAllRoles = {AgentRole::kSchemaLinking,  AgentRole::kSubproblem,
                                                        AgentRole::kQueryPlan,      AgentRole::kSql,
                                                        AgentRole::kCorrectionPlan, AgentRole::kCorrectionSql};

std::string_view to_string(AgentRole role);
std::optional<AgentRole> parse_role(std::string_view text);

enum class MessageRole { kSystem, kUser, kAssistant };

std::string_view to_string(MessageRole role);
std::optional<MessageRole> parse_message_role(std::string_view text);

struct ChatMessage {
  MessageRole role = MessageRole::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

inline constexpr int kDefaultMaxOutputTokens = 4096;

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = kDefaultMaxOutputTokens;

  // Throws ValidationError: empty messages, negative temperature, first
  // message from the assistant, non-positive token cap.
  void validate() const;
};

enum class BackendTag { kRemote, kScripted, kReplay };

std::string_view to_string(BackendTag tag);

struct ChatResponse {
  std::string content;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::chrono::milliseconds latency{0};
  BackendTag backend_tag = BackendTag::kScripted;

  std::int64_t total_tokens() const { return prompt_tokens + completion_tokens; }
};

// Failure modes of a model call. Transport and rate-limit errors are retried
// by the remote backend; the others surface immediately.
class LlmError : public Error {
 public:
  enum class Kind { kTransport, kRateLimit, kAuthentication, kProtocol, kScriptMiss, kCacheMiss };

  LlmError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  bool retryable() const { return kind_ == Kind::kTransport || kind_ == Kind::kRateLimit; }

 private:
  Kind kind_;
};

// Digest over model id, message roles and contents, and temperature. The
// output-token cap is deliberately excluded.
std::string cache_key(const ChatRequest& request);

struct CostSummary {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
  double cost = 0.0;
};

inline constexpr double kDefaultPricePerMTok = 15.0;

// cost = total tokens * price / 1e6.
CostSummary accumulate_usage(std::span<const ChatResponse> responses, double price_per_mtok);
double token_cost(std::int64_t tokens, double price_per_mtok);
// Half-up rounding to cents, for display.
double round_to_cents(double amount);

struct RouteTarget {
  std::string backend_id;
  std::string model_id;

  bool operator==(const RouteTarget&) const = default;
};

// Agent role -> (backend, model). All six roles must be mapped.
class ModelRoute {
 public:
  ModelRoute() = default;
  // Maps every role to the same target.
  static ModelRoute uniform(RouteTarget target);

  void set(AgentRole role, RouteTarget target);
  const RouteTarget& at(AgentRole role) const;
  bool complete() const;
  void validate() const;

 private:
  std::map<AgentRole, RouteTarget> targets_;
};

// Per-call metadata that is not part of the request itself.
struct CallContext {
  AgentRole role = AgentRole::kSql;
  std::string sample_id;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request, const CallContext& context) = 0;
};

}  // namespace nl2sql
