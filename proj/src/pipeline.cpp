#include "nl2sql/pipeline.hpp"

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"
#include "nl2sql/taxonomy.hpp"

namespace nl2sql {
namespace {

constexpr std::size_t kFeedbackPreviewRows = 5;
constexpr std::size_t kFailedResponseChars = 2000;

const TemplateSet& shipped_templates() {
  static const TemplateSet templates = TemplateSet::defaults();
  return templates;
}

}  // namespace

std::string_view to_string(CorrectionTrigger trigger) {
  return trigger == CorrectionTrigger::kGoldMismatch ? "gold_mismatch" : "execution_error_only";
}

std::optional<CorrectionTrigger> parse_trigger(std::string_view text) {
  if (text == "gold_mismatch") {
    return CorrectionTrigger::kGoldMismatch;
  }
  if (text == "execution_error_only") {
    return CorrectionTrigger::kExecutionErrorOnly;
  }
  return std::nullopt;
}

std::string_view to_string(LinkPolicy policy) { return policy == LinkPolicy::kRepair ? "repair" : "fail"; }

std::optional<LinkPolicy> parse_link_policy(std::string_view text) {
  if (text == "repair") {
    return LinkPolicy::kRepair;
  }
  if (text == "fail") {
    return LinkPolicy::kFail;
  }
  return std::nullopt;
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::kSolved:
      return "solved";
    case RunStatus::kExhausted:
      return "exhausted";
    case RunStatus::kStageError:
      return "stage_error";
  }
  return "stage_error";
}

std::optional<RunStatus> parse_run_status(std::string_view text) {
  for (RunStatus status : {RunStatus::kSolved, RunStatus::kExhausted, RunStatus::kStageError}) {
    if (to_string(status) == text) {
      return status;
    }
  }
  return std::nullopt;
}

void PipelineConfig::validate(bool has_gold) const {
  if (max_correction_attempts < 0) {
    throw ConfigError("max_correction_attempts must be >= 0");
  }
  if (timeout.count() <= 0) {
    throw ConfigError("query timeout must be positive");
  }
  if (trigger == CorrectionTrigger::kGoldMismatch && !has_gold) {
    throw ConfigError("the gold_mismatch trigger needs a gold query");
  }
  route.validate();
}

bool repeat_guard(std::span<const std::string> previous, std::string_view candidate) {
  for (const auto& sql : previous) {
    if (same_sql_tokens(sql, candidate)) {
      return true;
    }
  }
  return false;
}

namespace {

int earlier_tries(const std::vector<Attempt>& attempts, std::size_t index) {
  const Attempt& current = attempts[index];
  int tries = 0;
  for (std::size_t i = 0; i < index; ++i) {
    const Attempt& prior = attempts[i];
    if (current.sql && prior.sql ? same_sql_tokens(prior.sql->text(), current.sql->text())
                                 : !current.sql && !prior.sql && trim(prior.raw_response) == trim(current.raw_response)) {
      ++tries;
    }
  }
  return tries;
}

}  // namespace

std::string execution_feedback(const ExecutionOutcome& outcome, bool gold_mismatch) {
  if (const auto* failure = outcome.failure()) {
    return "The query failed with a " + std::string(to_string(failure->kind)) + " error: " + failure->message;
  }
  if (outcome.timed_out()) {
    return "The query did not finish within the time limit. " + outcome.describe() + ".";
  }
  const ResultSet& rs = *outcome.result();
  std::string text = "The query ran without error and returned " + std::to_string(rs.rows.size()) + " row(s) of " +
                     std::to_string(rs.column_count) + " column(s)";
  text += gold_mismatch ? ", but the result does not answer the question correctly." : ".";
  if (!rs.rows.empty()) {
    text += "\nFirst rows of the result:";
    for (std::size_t i = 0; i < std::min(rs.rows.size(), kFeedbackPreviewRows); ++i) {
      text += "\n(";
      for (std::size_t c = 0; c < rs.rows[i].size(); ++c) {
        text += (c > 0 ? ", " : "") + rs.rows[i][c].to_string();
      }
      text += ")";
    }
  }
  return text;
}

PipelineResult run_pipeline(Gateway& gateway, const PipelineConfig& config, const DatabaseSchema& schema,
                            const PipelineInput& input) {
  config.validate(input.gold_query.has_value());
  PipelineResult result;
  PipelineTrace& trace = result.trace;
  trace.sample_id = input.sample_id;
  trace.question = input.question;
  trace.db_id = schema.db_id;
  trace.gold_sql = input.gold_query;

  const TemplateSet& templates = config.templates ? *config.templates : shipped_templates();
  AgentContext ctx{gateway, config.route, templates, default_taxonomy(), config.agent, input.sample_id, trace.stages};

  bool ordered = false;
  if (input.gold_query) {
    try {
      SqlQuery gold = sanitize(*input.gold_query);
      ordered = has_top_level_order_by(gold.text());
      trace.gold_outcome = execute(input.db_file, gold, config.timeout);
    } catch (const SanitizeError& e) {
      trace.gold_outcome = ExecutionFailure{FailureKind::kSyntax, e.what()};
    }
  }

  const bool gold_mode = config.trigger == CorrectionTrigger::kGoldMismatch;
  auto fires = [&](const Attempt& attempt) {
    return gold_mode ? !attempt.ea.value_or(false) : !attempt.outcome.succeeded();
  };
  auto record_attempt = [&](int round, std::string raw) {
    std::vector<std::string> previous;
    for (const auto& prior : trace.attempts) {
      if (prior.sql) {
        previous.push_back(prior.sql->text());
      }
    }
    std::vector<std::string> notes;
    std::optional<SqlQuery> sql;
    std::optional<ExecutionOutcome> outcome;
    try {
      sql = sanitize(raw, &notes);
      outcome = execute(input.db_file, *sql, config.timeout);
    } catch (const SanitizeError& e) {
      outcome = ExecutionFailure{FailureKind::kSyntax, std::string("no SQL statement could be extracted: ") + e.what()};
    }
    Attempt attempt{round, std::move(raw), sql, std::move(notes), *outcome, std::nullopt, false};
    if (sql) {
      attempt.repeat = repeat_guard(previous, sql->text());
    }
    if (trace.gold_outcome) {
      attempt.ea = compare_results(*trace.gold_outcome, attempt.outcome, ordered);
    }
    trace.attempts.push_back(std::move(attempt));
    return trace.attempts.size() - 1;
  };

  try {
    LinkedSchema link = run_schema_linking(ctx, input.question, schema);
    LinkCheck check = validate_linked_schema(schema, link, config.edge_policy);
    for (const auto& issue : check.errors) {
      trace.link_issues.push_back("error: " + issue.describe());
    }
    for (const auto& issue : check.warnings) {
      trace.link_issues.push_back("warning: " + issue.describe());
    }
    if (!check.ok()) {
      if (config.link_policy == LinkPolicy::kFail) {
        trace.linked_schema = link;
        throw StageError("linked schema is invalid: " + check.errors.front().describe());
      }
      link = repair_link(schema, link, config.edge_policy);
    }
    trace.linked_schema = link;
    const std::string linked_text = render_schema_text(schema, link);

    SubproblemSet subproblems = run_subproblem(ctx, input.question, linked_text);
    std::string plan_section;
    if (config.skip_query_plan) {
      plan_section = "Clause subproblems:\n" + render_subproblems(subproblems);
    } else {
      QueryPlan plan = run_query_plan(ctx, input.question, linked_text, subproblems);
      plan_section = "Query plan:\n" + render_plan(plan);
    }
    std::size_t last = record_attempt(0, run_sql(ctx, input.question, plan_section, linked_text));

    const int rounds = config.skip_correction ? 0 : config.max_correction_attempts;
    for (int round = 1; round <= rounds && fires(trace.attempts[last]); ++round) {
      ctx.round = round;
      const Attempt& failed = trace.attempts[last];
      std::string failed_sql;
      std::string feedback;
      if (failed.sql) {
        failed_sql = failed.sql->text();
        feedback = execution_feedback(failed.outcome, gold_mode && failed.outcome.succeeded());
      } else {
        failed_sql = std::string(trim(failed.raw_response)).substr(0, kFailedResponseChars);
        feedback = failed.outcome.failure()->message;
      }
      // Without this a repeated query yields a byte-identical prompt, which a cache or a
      // deterministic model answers the same way every round.
      const int tries = earlier_tries(trace.attempts, last);
      if (tries > 0) {
        feedback += "\nThis query was already tried " + std::to_string(tries) + " time(s) in earlier attempts.";
      }
      CorrectionPlan plan = run_correction_plan(ctx, input.question, linked_text, failed_sql, feedback);
      if (tries > 0) {
        plan.repair_steps.push_back("Do not return the failed query again; it has failed " + std::to_string(tries + 1) +
                                    " times.");
      }
      std::string raw = run_correction_sql(ctx, input.question, linked_text, plan, failed_sql);
      last = record_attempt(round, std::move(raw));
    }
    trace.status = fires(trace.attempts[last]) ? RunStatus::kExhausted : RunStatus::kSolved;
  } catch (const StageError& e) {
    trace.status = RunStatus::kStageError;
    trace.error = e.what();
  } catch (const ValidationError& e) {
    trace.status = RunStatus::kStageError;
    trace.error = e.what();
  }

  if (!trace.attempts.empty()) {
    const Attempt& final_attempt = trace.attempts.back();
    result.final_sql = final_attempt.sql;
    result.outcome = final_attempt.outcome;
    result.ea = final_attempt.ea;
  }
  return result;
}

}  // namespace nl2sql
