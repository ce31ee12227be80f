#include "nl2sql/agents.hpp"

#include <algorithm>
#include <cctype>
#include <json.hpp>
#include <regex>

#include "nl2sql/errors.hpp"
#include "nl2sql/sql_text.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

// Insertion order keeps clauses and tables in the order the model wrote them.
using json = nlohmann::ordered_json;

json parse_payload(std::string_view response) {
  std::string payload = extract_structured_payload(response);
  try {
    return json::parse(payload);
  } catch (const json::parse_error& e) {
    throw ExtractionError(std::string("structured block is not valid JSON: ") + e.what());
  }
}

std::optional<std::string> string_of(const json& value) {
  if (value.is_string()) {
    std::string text(trim(value.get<std::string>()));
    if (!text.empty()) {
      return text;
    }
    return std::nullopt;
  }
  if (value.is_number()) {
    return value.dump();
  }
  if (value.is_object()) {
    for (const char* key : {"step", "description", "text", "instruction"}) {
      if (auto it = value.find(key); it != value.end() && it->is_string()) {
        return string_of(*it);
      }
    }
  }
  return std::nullopt;
}

// "concert.stadium_id" -> {"concert", "stadium_id"}.
std::optional<ColumnRef> parse_dotted(const json& value) {
  if (!value.is_string()) {
    return std::nullopt;
  }
  std::string text(trim(value.get<std::string>()));
  auto dot = text.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == text.size()) {
    return std::nullopt;
  }
  return ColumnRef{text.substr(0, dot), text.substr(dot + 1)};
}

// Numbered or bulleted lines: "1. x", "2) x", "Step 3: x", "- x".
std::vector<std::string> list_items(std::string_view text) {
  static const std::regex item(R"(^\s*(?:(?:[Ss]tep\s*)?\d+\s*[.):]|[-*•])\s+(.+?)\s*$)");
  std::vector<std::string> out;
  for (const auto& line : split_lines(text)) {
    std::smatch m;
    if (std::regex_match(line, m, item)) {
      out.push_back(m[1].str());
    }
  }
  return out;
}

std::vector<std::string> string_list(const json& value) {
  std::vector<std::string> out;
  if (value.is_array()) {
    for (const auto& element : value) {
      if (auto text = string_of(element)) {
        out.push_back(*text);
      }
    }
  } else if (auto text = string_of(value)) {
    out.push_back(*text);
  }
  return out;
}

std::string first_string(const json& object, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    if (auto it = object.find(key); it != object.end()) {
      if (auto text = string_of(*it)) {
        return *text;
      }
    }
  }
  return {};
}

struct StageSpec {
  AgentRole role;
  PromptBindings bindings;
  // Appended to the user prompt on the single format re-ask.
  std::string reminder;
  bool allow_reask = true;
};

std::string canonical_text(const LinkedSchema& link) {
  std::string out;
  for (const auto& [table, columns] : link.kept) {
    out += table + ":";
    for (const auto& column : columns) {
      out += " " + column;
    }
    out += "\n";
  }
  for (const auto& edge : link.join_edges) {
    out += edge.source.to_string() + " = " + edge.target.to_string() + "\n";
  }
  return out;
}
std::string canonical_text(const SubproblemSet& set) { return render_subproblems(set); }
std::string canonical_text(const QueryPlan& plan) { return render_plan(plan); }
std::string canonical_text(const CorrectionPlan& plan) { return render_correction_plan(plan); }
std::string canonical_text(const std::string& text) { return text; }

// Runs one stage: render, call, parse, with at most one re-ask when `parse`
// throws ExtractionError or ValidationError. Every call appends a record.
template <typename Parse>
auto run_stage(AgentContext& ctx, const StageSpec& spec, Parse parse) {
  auto fail = [&](StageRecord& record, const std::string& message) {
    record.ok = false;
    record.error = message;
    ctx.records.push_back(std::move(record));
    throw StageError(std::string(to_string(spec.role)) + " stage failed: " + message);
  };
  StageRecord record;
  record.role = spec.role;
  record.round = ctx.round;

  std::vector<ChatMessage> messages;
  try {
    messages = ctx.templates.at(spec.role).render(spec.bindings);
  } catch (const TemplateError& e) {
    fail(record, e.what());
  }
  const RouteTarget& target = ctx.route.at(spec.role);
  record.backend_id = target.backend_id;
  record.model_id = target.model_id;
  const int max_calls = spec.allow_reask ? 2 : 1;
  for (int call = 0; call < max_calls; ++call) {
    StageRecord current = record;
    current.call_index = call;
    current.prompt = messages;

    ChatRequest request;
    request.model_id = target.model_id;
    request.messages = messages;
    request.temperature = ctx.options.temperature;
    request.max_output_tokens = ctx.options.max_output_tokens;
    try {
      current.response = ctx.gateway.complete(target.backend_id, request, CallContext{spec.role, ctx.sample_id});
    } catch (const Error& e) {
      fail(current, e.what());
    }
    std::string problem;
    try {
      auto artifact = parse(current.response->content, current.warnings);
      current.ok = true;
      current.artifact_digest = sha256_hex(canonical_text(artifact));
      ctx.records.push_back(std::move(current));
      return artifact;
    } catch (const ExtractionError& e) {
      problem = e.what();
    } catch (const ValidationError& e) {
      problem = e.what();
    }
    if (call + 1 == max_calls) {
      fail(current, problem);
    }
    current.error = problem;
    ctx.records.push_back(std::move(current));
    messages.back().content += "\n\n" + problem + ". " + spec.reminder;
  }
  throw StageError("unreachable");
}

std::string require_text(std::string_view content) {
  if (trim(content).empty()) {
    throw ValidationError("empty response");
  }
  return std::string(content);
}

}  // namespace

std::optional<std::string> normalize_clause_key(std::string_view key) {
  std::string normalized;
  for (char c : trim(key)) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    normalized.push_back(up == '_' || up == '-' ? ' ' : up);
  }
  normalized = collapse_whitespace(normalized);
  for (std::string_view clause : kClauseKeys) {
    if (normalized == clause) {
      return normalized;
    }
  }
  return std::nullopt;
}

const std::string* SubproblemSet::find(std::string_view clause) const {
  for (const auto& [key, value] : clauses) {
    if (key == clause) {
      return &value;
    }
  }
  return nullptr;
}

std::string render_subproblems(const SubproblemSet& subproblems) {
  if (subproblems.empty()) {
    return "(no clause subproblems)";
  }
  std::string out;
  for (const auto& [key, value] : subproblems.clauses) {
    if (!out.empty()) {
      out.push_back('\n');
    }
    out += key + ": " + value;
  }
  return out;
}

std::string render_plan(const QueryPlan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (i > 0) {
      out.push_back('\n');
    }
    out += std::to_string(i + 1) + ". " + plan.steps[i];
  }
  return out;
}

std::string render_correction_plan(const CorrectionPlan& plan) {
  std::string out;
  if (!plan.diagnosed_codes.empty()) {
    out += "Diagnosed errors:\n";
    for (const auto& code : plan.diagnosed_codes) {
      out += "- " + code.code + " " + code.title + ": " + code.hint + "\n";
    }
  }
  if (!plan.rationale.empty()) {
    out += "Diagnosis: " + plan.rationale + "\n";
  }
  out += "Repair steps:";
  for (std::size_t i = 0; i < plan.repair_steps.size(); ++i) {
    out += "\n" + std::to_string(i + 1) + ". " + plan.repair_steps[i];
  }
  return out;
}

LinkedSchema parse_linked_schema(std::string_view response, const std::string& db_id) {
  json doc = parse_payload(response);
  if (!doc.is_object() || !doc.contains("tables")) {
    throw ValidationError("schema-link object needs a \"tables\" key");
  }
  LinkedSchema link;
  link.db_id = db_id;
  auto add_table = [&](const std::string& table, const json& columns) {
    std::vector<std::string> names;
    for (const auto& column : string_list(columns)) {
      // Accept "table.column" spellings for the table's own columns.
      auto dot = column.find('.');
      if (dot != std::string::npos && iequals(std::string_view(column).substr(0, dot), table)) {
        names.push_back(column.substr(dot + 1));
      } else {
        names.push_back(column);
      }
    }
    link.kept.emplace_back(table, std::move(names));
  };
  const json& tables = doc["tables"];
  if (tables.is_object()) {
    for (const auto& [table, columns] : tables.items()) {
      add_table(table, columns);
    }
  } else if (tables.is_array()) {
    for (const auto& entry : tables) {
      if (entry.is_string()) {
        add_table(entry.get<std::string>(), json::array());
      } else if (entry.is_object()) {
        std::string name = first_string(entry, {"table", "name"});
        if (name.empty()) {
          throw ValidationError("table entry without a name");
        }
        add_table(name, entry.value("columns", json::array()));
      } else {
        throw ValidationError("tables entries must be names or objects");
      }
    }
  } else {
    throw ValidationError("\"tables\" must be an object or an array");
  }

  if (auto edges = doc.find("join_edges"); edges != doc.end() && edges->is_array()) {
    for (const auto& edge : *edges) {
      std::optional<ColumnRef> lhs;
      std::optional<ColumnRef> rhs;
      if (edge.is_array() && edge.size() == 2) {
        lhs = parse_dotted(edge[0]);
        rhs = parse_dotted(edge[1]);
      } else if (edge.is_object()) {
        lhs = parse_dotted(edge.value("from", edge.value("source", json())));
        rhs = parse_dotted(edge.value("to", edge.value("target", json())));
      }
      if (!lhs || !rhs) {
        throw ValidationError("join edge must pair two table.column names: " + edge.dump());
      }
      link.join_edges.push_back(ForeignKey{*lhs, *rhs});
    }
  }
  if (auto notes = doc.find("notes"); notes != doc.end() && notes->is_string()) {
    link.notes = notes->get<std::string>();
  }
  return link;
}

SubproblemSet parse_subproblems(std::string_view response, std::vector<std::string>* warnings) {
  json doc = parse_payload(response);
  if (!doc.is_object()) {
    throw ValidationError("subproblems must be a JSON object");
  }
  auto warn = [&](std::string message) {
    if (warnings != nullptr) {
      warnings->push_back(std::move(message));
    }
  };
  SubproblemSet set;
  for (const auto& [key, value] : doc.items()) {
    auto clause = normalize_clause_key(key);
    if (!clause) {
      warn("dropped unknown clause key '" + key + "'");
      continue;
    }
    std::vector<std::string> parts = string_list(value);
    if (parts.empty()) {
      warn("dropped empty clause '" + *clause + "'");
      continue;
    }
    std::string text = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
      text += ", " + parts[i];
    }
    if (set.find(*clause) != nullptr) {
      warn("dropped duplicate clause '" + *clause + "'");
      continue;
    }
    set.clauses.emplace_back(*clause, std::move(text));
  }
  return set;
}

QueryPlan parse_query_plan(std::string_view response) {
  QueryPlan plan;
  try {
    json doc = parse_payload(response);
    if (doc.is_object()) {
      if (auto steps = doc.find("steps"); steps != doc.end()) {
        plan.steps = string_list(*steps);
      }
      plan.rationale = first_string(doc, {"reasoning", "rationale"});
    }
  } catch (const ExtractionError&) {
  }
  if (plan.steps.empty()) {
    plan.steps = list_items(response);
  }
  if (plan.steps.empty()) {
    throw ValidationError("query plan has no steps");
  }
  return plan;
}

std::vector<std::size_t> impure_plan_steps(const QueryPlan& plan) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (is_complete_sql_statement(plan.steps[i])) {
      out.push_back(i);
    }
  }
  return out;
}

CorrectionPlan parse_correction_plan(std::string_view response, const Taxonomy& taxonomy) {
  CorrectionPlan plan;
  try {
    json doc = parse_payload(response);
    if (doc.is_object()) {
      if (auto steps = doc.find("repair_steps"); steps != doc.end()) {
        plan.repair_steps = string_list(*steps);
      }
      plan.rationale = first_string(doc, {"diagnosis", "reasoning", "rationale"});
    }
  } catch (const ExtractionError&) {
  }
  if (plan.repair_steps.empty()) {
    plan.repair_steps = list_items(response);
  }
  if (plan.repair_steps.empty()) {
    throw ValidationError("correction plan has no repair steps");
  }
  ParsedCodes codes = parse_codes(response, taxonomy);
  plan.diagnosed_codes = std::move(codes.known);
  plan.unknown_codes = std::move(codes.unknown);
  return plan;
}

LinkedSchema run_schema_linking(AgentContext& ctx, std::string_view question, const DatabaseSchema& schema) {
  StageSpec spec{AgentRole::kSchemaLinking,
                 {{"question", std::string(question)}, {"schema", render_schema_text(schema)}},
                 "Reply with one JSON object with keys \"tables\", \"join_edges\" and \"notes\"."};
  return run_stage(ctx, spec, [&](const std::string& content, std::vector<std::string>&) {
    return parse_linked_schema(content, schema.db_id);
  });
}

SubproblemSet run_subproblem(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text) {
  StageSpec spec{AgentRole::kSubproblem,
                 {{"question", std::string(question)}, {"schema", std::string(linked_schema_text)}},
                 "Reply with one JSON object mapping SQL clause names to partial expressions."};
  return run_stage(ctx, spec, [](const std::string& content, std::vector<std::string>& warnings) {
    return parse_subproblems(content, &warnings);
  });
}

QueryPlan run_query_plan(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                         const SubproblemSet& subproblems) {
  StageSpec spec{AgentRole::kQueryPlan,
                 {{"question", std::string(question)},
                  {"schema", std::string(linked_schema_text)},
                  {"subproblems", render_subproblems(subproblems)}},
                 "Reply with one JSON object with keys \"reasoning\" and \"steps\". Plan steps must describe "
                 "operations in plain language and must not be executable SQL statements."};
  return run_stage(ctx, spec, [](const std::string& content, std::vector<std::string>&) {
    QueryPlan plan = parse_query_plan(content);
    if (auto impure = impure_plan_steps(plan); !impure.empty()) {
      throw ValidationError("plan step " + std::to_string(impure.front() + 1) + " is a complete SQL statement");
    }
    return plan;
  });
}

std::string run_sql(AgentContext& ctx, std::string_view question, std::string_view plan_section,
                    std::string_view schema_text) {
  std::string schema_section;
  if (ctx.options.sql_agent_sees_schema) {
    schema_section = "\nDatabase schema:\n" + std::string(schema_text) + "\n";
  }
  StageSpec spec{AgentRole::kSql,
                 {{"question", std::string(question)},
                  {"plan", std::string(plan_section)},
                  {"schema", std::move(schema_section)}},
                 "",
                 false};
  return run_stage(ctx, spec, [](const std::string& content, std::vector<std::string>&) {
    return require_text(content);
  });
}

CorrectionPlan run_correction_plan(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                                   std::string_view failed_sql, std::string_view exec_feedback) {
  if (trim(failed_sql).empty() || trim(exec_feedback).empty()) {
    throw ValidationError("correction planning needs the failed SQL and its feedback");
  }
  StageSpec spec{AgentRole::kCorrectionPlan,
                 {{"question", std::string(question)},
                  {"schema", std::string(linked_schema_text)},
                  {"failed_sql", std::string(failed_sql)},
                  {"exec_feedback", std::string(exec_feedback)},
                  {"taxonomy", render_summary(ctx.taxonomy)}},
                 "Reply with one JSON object with keys \"diagnosis\", \"error_codes\" and a non-empty "
                 "\"repair_steps\" array."};
  return run_stage(ctx, spec, [&](const std::string& content, std::vector<std::string>& warnings) {
    CorrectionPlan plan = parse_correction_plan(content, ctx.taxonomy);
    for (const auto& code : plan.unknown_codes) {
      warnings.push_back("unknown error code " + code);
    }
    return plan;
  });
}

std::string run_correction_sql(AgentContext& ctx, std::string_view question, std::string_view linked_schema_text,
                               const CorrectionPlan& plan, std::string_view failed_sql) {
  StageSpec spec{AgentRole::kCorrectionSql,
                 {{"question", std::string(question)},
                  {"schema", std::string(linked_schema_text)},
                  {"failed_sql", std::string(failed_sql)},
                  {"correction_plan", render_correction_plan(plan)}},
                 "",
                 false};
  return run_stage(ctx, spec, [](const std::string& content, std::vector<std::string>&) {
    return require_text(content);
  });
}

}  // namespace nl2sql
