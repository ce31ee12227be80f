#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nl2sql/backends.hpp"
#include "nl2sql/llm.hpp"
#include "nl2sql/schema.hpp"
#include "nl2sql/taxonomy.hpp"
#include "nl2sql/templates.hpp"

namespace nl2sql {

// Returns the structured block of a chatty response: the first fenced block
// holding an object, else the first balanced {...} outside prose quotes.
// Candidates that parse as JSON win. Throws ExtractionError.
std::string extract_structured_payload(std::string_view response_text);

inline constexpr std::array<std::string_view, 12> kClauseKeys = {
    "SELECT", "FROM",  "WHERE", "GROUP BY", "JOIN",      "DISTINCT",
    "ORDER BY", "HAVING", "EXCEPT", "LIMIT", "UNION", "INTERSECT"};

// "group_by" / "Group By" -> "GROUP BY"; nullopt outside the vocabulary.
std::optional<std::string> normalize_clause_key(std::string_view key);

struct SubproblemSet {
  std::vector<std::pair<std::string, std::string>> clauses;

  const std::string* find(std::string_view clause) const;
  bool empty() const { return clauses.empty(); }
  bool operator==(const SubproblemSet&) const = default;
};

struct QueryPlan {
  std::vector<std::string> steps;
  std::string rationale;

  bool operator==(const QueryPlan&) const = default;
};

struct CorrectionPlan {
  std::vector<ErrorCode> diagnosed_codes;
  std::vector<std::string> unknown_codes;
  std::vector<std::string> repair_steps;
  std::string rationale;
};

// Prompt-ready text for artifacts handed to later stages.
std::string render_subproblems(const SubproblemSet& subproblems);
std::string render_plan(const QueryPlan& plan);
std::string render_correction_plan(const CorrectionPlan& plan);

// Parsers over raw model output. Throw ExtractionError or ValidationError.
LinkedSchema parse_linked_schema(std::string_view response, const std::string& db_id);
SubproblemSet parse_subproblems(std::string_view response, std::vector<std::string>* warnings = nullptr);
QueryPlan parse_query_plan(std::string_view response);
CorrectionPlan parse_correction_plan(std::string_view response, const Taxonomy& taxonomy);
// Steps that parse as complete SQL statements.
std::vector<std::size_t> impure_plan_steps(const QueryPlan& plan);

// One model call made by an agent. A stage that re-asks appends two records;
// a stage that fails before calling the model appends one without a response.
struct StageRecord {
  AgentRole role = AgentRole::kSql;
  // 0 for the initial pass, r for correction round r.
  int round = 0;
  // 1 on the format re-ask.
  int call_index = 0;
  std::string backend_id;
  std::string model_id;
  std::vector<ChatMessage> prompt;
  std::optional<ChatResponse> response;
  // SHA-256 of the parsed artifact's canonical text; empty when parsing failed.
  std::string artifact_digest;
  std::vector<std::string> warnings;
  bool ok = false;
  std::string error;

  std::int64_t prompt_tokens() const { return response ? response->prompt_tokens : 0; }
  std::int64_t completion_tokens() const { return response ? response->completion_tokens : 0; }
};

struct AgentOptions {
  double temperature = 0.0;
  int max_output_tokens = kDefaultMaxOutputTokens;
  bool sql_agent_sees_schema = false;
};

// Everything an agent call needs besides its inputs. Agents hold no state;
// records accumulate in the caller's vector.
struct AgentContext {
  Gateway& gateway;
  const ModelRoute& route;
  const TemplateSet& templates;
  const Taxonomy& taxonomy;
  AgentOptions options;
  std::string sample_id;
  std::vector<StageRecord>& records;
  int round = 0;
};

// Each run_* throws StageError after appending the failed call's record.
LinkedSchema run_schema_linking(AgentContext& ctx, std::string_view question, const DatabaseSchema& schema);
SubproblemSet run_subproblem(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text);
QueryPlan run_query_plan(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                         const SubproblemSet& subproblems);
// `plan_section` is the rendered query plan, or the rendered subproblems when
// planning is skipped. Returns the raw response for sanitization.
std::string run_sql(AgentContext& ctx, std::string_view question, std::string_view plan_section,
                    std::string_view schema_text);
CorrectionPlan run_correction_plan(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                                   std::string_view failed_sql, std::string_view exec_feedback);
std::string run_correction_sql(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                               const CorrectionPlan& plan, std::string_view failed_sql);

}  // namespace nl2sql
