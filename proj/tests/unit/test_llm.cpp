#include <gtest/gtest.h>

#include <random>
#include <set>

#include "nl2sql/errors.hpp"
#include "nl2sql/llm.hpp"

namespace nl2sql {
namespace {

ChatRequest sample_request() {
  ChatRequest request;
  request.model_id = "model-a";
  request.messages = {{MessageRole::kSystem, "You write SQL."}, {MessageRole::kUser, "How many singers?"}};
  return request;
}

TEST(CacheKey, Deterministic) {
  EXPECT_EQ(cache_key(sample_request()), cache_key(sample_request()));
  std::string key = cache_key(sample_request());
  EXPECT_EQ(key.size(), 64u);
  EXPECT_EQ(key.find_first_not_of("0123456789abcdef"), std::string::npos);
}

TEST(CacheKey, OneCharacterChangesTheKey) {
  ChatRequest changed = sample_request();
  changed.messages[1].content = "How many singers!";
  EXPECT_NE(cache_key(changed), cache_key(sample_request()));
}

TEST(CacheKey, IgnoresOutputTokenCap) {
  ChatRequest capped = sample_request();
  capped.max_output_tokens = 17;
  EXPECT_EQ(cache_key(capped), cache_key(sample_request()));
}

TEST(CacheKey, CoversModelTemperatureAndRoles) {
  const std::string base = cache_key(sample_request());
  ChatRequest model = sample_request();
  model.model_id = "model-b";
  ChatRequest warm = sample_request();
  warm.temperature = 0.7;
  ChatRequest role = sample_request();
  role.messages[0].role = MessageRole::kUser;
  std::set<std::string> keys = {base, cache_key(model), cache_key(warm), cache_key(role)};
  EXPECT_EQ(keys.size(), 4u);
}

TEST(CacheKey, FieldBoundariesAreUnambiguous) {
  ChatRequest a = sample_request();
  a.messages = {{MessageRole::kUser, "ab"}, {MessageRole::kUser, "c"}};
  ChatRequest b = sample_request();
  b.messages = {{MessageRole::kUser, "a"}, {MessageRole::kUser, "bc"}};
  EXPECT_NE(cache_key(a), cache_key(b));
}

TEST(ChatRequestValidation, Invariants) {
  EXPECT_NO_THROW(sample_request().validate());
  ChatRequest empty = sample_request();
  empty.messages.clear();
  EXPECT_THROW(empty.validate(), ValidationError);
  ChatRequest negative = sample_request();
  negative.temperature = -0.1;
  EXPECT_THROW(negative.validate(), ValidationError);
  ChatRequest assistant_first = sample_request();
  assistant_first.messages[0].role = MessageRole::kAssistant;
  EXPECT_THROW(assistant_first.validate(), ValidationError);
  ChatRequest no_tokens = sample_request();
  no_tokens.max_output_tokens = 0;
  EXPECT_THROW(no_tokens.validate(), ValidationError);
}

// Independent route: integer micro-dollars, then half-up to cents.
std::int64_t cents_oracle(std::int64_t tokens, std::int64_t dollars_per_mtok) {
  std::int64_t micro_dollars = tokens * dollars_per_mtok;
  return (micro_dollars + 5000) / 10000;
}

TEST(Cost, HeadlineRunCost) {
  std::vector<ChatResponse> responses(1);
  responses[0].prompt_tokens = 2'000'000;
  responses[0].completion_tokens = 838'667;
  CostSummary summary = accumulate_usage(responses, 15.0);
  EXPECT_EQ(summary.total_tokens, 2'838'667);
  EXPECT_EQ(cents_oracle(summary.total_tokens, 15), 4258);
  EXPECT_DOUBLE_EQ(round_to_cents(summary.cost), 42.58);
}

TEST(Cost, OneMillionTokens) {
  std::vector<ChatResponse> responses(4);
  for (auto& r : responses) {
    r.prompt_tokens = 200'000;
    r.completion_tokens = 50'000;
  }
  CostSummary summary = accumulate_usage(responses, kDefaultPricePerMTok);
  EXPECT_EQ(summary.total_tokens, 1'000'000);
  EXPECT_DOUBLE_EQ(summary.cost, 15.0);
  EXPECT_DOUBLE_EQ(round_to_cents(summary.cost), 15.00);
}

TEST(Cost, NoResponses) {
  CostSummary summary = accumulate_usage({}, 15.0);
  EXPECT_EQ(summary.total_tokens, 0);
  EXPECT_DOUBLE_EQ(summary.cost, 0.0);
}

TEST(Cost, NegativePriceRejected) { EXPECT_THROW(accumulate_usage({}, -1.0), ValidationError); }

TEST(Cost, TotalsAreExactSums) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ChatResponse> responses(rng() % 40);
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
    for (auto& r : responses) {
      r.prompt_tokens = static_cast<std::int64_t>(rng() % 100000);
      r.completion_tokens = static_cast<std::int64_t>(rng() % 5000);
      prompt += r.prompt_tokens;
      completion += r.completion_tokens;
    }
    CostSummary summary = accumulate_usage(responses, 15.0);
    EXPECT_EQ(summary.prompt_tokens, prompt);
    EXPECT_EQ(summary.completion_tokens, completion);
    EXPECT_EQ(summary.total_tokens, prompt + completion);
    EXPECT_DOUBLE_EQ(round_to_cents(summary.cost), static_cast<double>(cents_oracle(prompt + completion, 15)) / 100.0);
  }
}

TEST(Cost, HalfUpRounding) {
  EXPECT_DOUBLE_EQ(round_to_cents(0.125), 0.13);
  EXPECT_DOUBLE_EQ(round_to_cents(0.124), 0.12);
  EXPECT_DOUBLE_EQ(round_to_cents(0.0), 0.0);
}

TEST(Route, AllRolesMustBeMapped) {
  ModelRoute route;
  EXPECT_FALSE(route.complete());
  EXPECT_THROW(route.validate(), ConfigError);
  EXPECT_THROW(route.at(AgentRole::kSql), ConfigError);
  for (AgentRole role : kAllRoles) {
    route.set(role, RouteTarget{"b", "m"});
  }
  EXPECT_TRUE(route.complete());
  EXPECT_NO_THROW(route.validate());
  route.set(AgentRole::kSql, RouteTarget{"fast", "small-model"});
  EXPECT_EQ(route.at(AgentRole::kSql).model_id, "small-model");
  EXPECT_EQ(route.at(AgentRole::kQueryPlan).model_id, "m");
}

TEST(Route, UniformRoute) {
  ModelRoute route = ModelRoute::uniform(RouteTarget{"remote", "gpt"});
  EXPECT_TRUE(route.complete());
  for (AgentRole role : kAllRoles) {
    EXPECT_EQ(route.at(role), (RouteTarget{"remote", "gpt"}));
  }
}

TEST(Roles, NamesRoundTrip) {
  std::set<std::string_view> names;
  for (AgentRole role : kAllRoles) {
    names.insert(to_string(role));
    EXPECT_EQ(parse_role(to_string(role)), role);
  }
  EXPECT_EQ(names, (std::set<std::string_view>{"schema_linking", "subproblem", "query_plan", "sql", "correction_plan",
                                                "correction_sql"}));
  EXPECT_FALSE(parse_role("planner"));
  for (MessageRole role : {MessageRole::kSystem, MessageRole::kUser, MessageRole::kAssistant}) {
    EXPECT_EQ(parse_message_role(to_string(role)), role);
  }
}

TEST(LlmErrors, Retryability) {
  EXPECT_TRUE(LlmError(LlmError::Kind::kTransport, "x").retryable());
  EXPECT_TRUE(LlmError(LlmError::Kind::kRateLimit, "x").retryable());
  EXPECT_FALSE(LlmError(LlmError::Kind::kAuthentication, "x").retryable());
  EXPECT_FALSE(LlmError(LlmError::Kind::kScriptMiss, "x").retryable());
  EXPECT_FALSE(LlmError(LlmError::Kind::kProtocol, "x").retryable());
}

}  // namespace
}  // namespace nl2sql
