#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/agents.hpp"
#include "nl2sql/executor.hpp"
#include "nl2sql/schema.hpp"

namespace nl2sql {

enum class CorrectionTrigger { kExecutionErrorOnly, kGoldMismatch };

std::string_view to_string(CorrectionTrigger trigger);
std::optional<CorrectionTrigger> parse_trigger(std::string_view text);

// What to do when the schema-linking output names things the schema lacks.
enum class LinkPolicy { kRepair, kFail };

std::string_view to_string(LinkPolicy policy);
std::optional<LinkPolicy> parse_link_policy(std::string_view text);

inline constexpr int kDefaultMaxCorrectionAttempts = 3;

struct PipelineConfig {
  // Correction rounds; each round is one plan call and one SQL call.
  int max_correction_attempts = kDefaultMaxCorrectionAttempts;
  bool skip_query_plan = false;
  bool skip_correction = false;
  CorrectionTrigger trigger = CorrectionTrigger::kGoldMismatch;
  ModelRoute route;
  std::chrono::milliseconds timeout = kDefaultQueryTimeout;
  std::shared_ptr<const TemplateSet> templates;
  AgentOptions agent;
  LinkPolicy link_policy = LinkPolicy::kRepair;
  EdgePolicy edge_policy = EdgePolicy::kWarn;

  // Throws ConfigError. A gold-mismatch trigger needs a gold query.
  void validate(bool has_gold) const;
};

enum class RunStatus { kSolved, kExhausted, kStageError };

std::string_view to_string(RunStatus status);
std::optional<RunStatus> parse_run_status(std::string_view text);

struct Attempt {
  // 0 for the first SQL, r for correction round r.
  int round = 0;
  std::string raw_response;
  // Absent when sanitization failed.
  std::optional<SqlQuery> sql;
  std::vector<std::string> sanitize_notes;
  ExecutionOutcome outcome;
  std::optional<bool> ea;
  bool repeat = false;
};

struct PipelineTrace {
  std::string sample_id;
  std::string question;
  std::string db_id;
  std::optional<std::string> gold_sql;
  std::optional<ExecutionOutcome> gold_outcome;
  std::optional<LinkedSchema> linked_schema;
  std::vector<std::string> link_issues;
  std::vector<StageRecord> stages;
  std::vector<Attempt> attempts;
  RunStatus status = RunStatus::kStageError;
  std::string error;
};

struct PipelineResult {
  std::optional<SqlQuery> final_sql;
  std::optional<ExecutionOutcome> outcome;
  std::optional<bool> ea;
  PipelineTrace trace;

  RunStatus status() const { return trace.status; }
};

struct PipelineInput {
  std::string sample_id;
  std::string question;
  std::filesystem::path db_file;
  std::optional<std::string> gold_query;
};

PipelineResult run_pipeline(Gateway& gateway, const PipelineConfig& config, const DatabaseSchema& schema,
                            const PipelineInput& input);

// True when `candidate` matches any previous attempt token for token.
bool repeat_guard(std::span<const std::string> previous, std::string_view candidate);

// Text handed to the correction planner. Never mentions gold rows.
std::string execution_feedback(const ExecutionOutcome& outcome, bool gold_mismatch);

// Serialized trace, one line.
std::string trace_to_jsonl(const PipelineTrace& trace);
// Human-readable rendering of one trace line. Throws FormatError.
std::string format_trace_line(std::string_view jsonl_line);
// The last line recorded for `sample_id`, if any.
std::optional<std::string> find_trace_line(const std::filesystem::path& trace_file, std::string_view sample_id);

// Appends trace lines to a file; safe to share across threads.
class TraceWriter {
 public:
  explicit TraceWriter(std::filesystem::path path);
  void append(const PipelineTrace& trace);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

}  // namespace nl2sql
