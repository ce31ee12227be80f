#include <fstream>
#include <json.hpp>
#include <sstream>

#include "nl2sql/errors.hpp"
#include "nl2sql/pipeline.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;

constexpr std::size_t kTraceRowPreview = 10;

json outcome_json(const ExecutionOutcome& outcome) {
  json out = {{"status", outcome.status()}};
  if (const auto* rs = outcome.result()) {
    out["row_count"] = rs->rows.size();
    out["column_count"] = rs->column_count;
    json rows = json::array();
    for (std::size_t i = 0; i < std::min(rs->rows.size(), kTraceRowPreview); ++i) {
      json row = json::array();
      for (const auto& value : rs->rows[i]) {
        row.push_back(value.to_string());
      }
      rows.push_back(std::move(row));
    }
    out["rows_preview"] = std::move(rows);
  } else if (const auto* failure = outcome.failure()) {
    out["kind"] = to_string(failure->kind);
    out["message"] = failure->message;
  } else {
    out["message"] = outcome.describe();
  }
  return out;
}

json messages_json(const std::vector<ChatMessage>& messages) {
  json out = json::array();
  for (const auto& message : messages) {
    out.push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  return out;
}

json stage_json(const StageRecord& stage) {
  json out = {{"role", to_string(stage.role)},
              {"round", stage.round},
              {"call_index", stage.call_index},
              {"backend_id", stage.backend_id},
              {"model_id", stage.model_id},
              {"prompt", messages_json(stage.prompt)},
              {"artifact_digest", stage.artifact_digest},
              {"warnings", stage.warnings},
              {"ok", stage.ok},
              {"error", stage.error}};
  if (stage.response) {
    out["response"] = {{"content", stage.response->content},
                       {"prompt_tokens", stage.response->prompt_tokens},
                       {"completion_tokens", stage.response->completion_tokens},
                       {"latency_ms", stage.response->latency.count()},
                       {"backend", to_string(stage.response->backend_tag)}};
  } else {
    out["response"] = nullptr;
  }
  return out;
}

json link_json(const LinkedSchema& link) {
  json tables = json::array();
  for (const auto& [table, columns] : link.kept) {
    tables.push_back({{"table", table}, {"columns", columns}});
  }
  json edges = json::array();
  for (const auto& edge : link.join_edges) {
    edges.push_back({edge.source.to_string(), edge.target.to_string()});
  }
  return {{"tables", std::move(tables)}, {"join_edges", std::move(edges)}, {"notes", link.notes}};
}

std::string str_or(const json& doc, const char* key, std::string fallback = "") {
  auto it = doc.find(key);
  return it != doc.end() && it->is_string() ? it->get<std::string>() : fallback;
}

std::string describe_outcome_json(const json& outcome) {
  std::string status = str_or(outcome, "status", "?");
  if (status == "success") {
    return "success, " + std::to_string(outcome.value("row_count", 0)) + " row(s)";
  }
  std::string kind = str_or(outcome, "kind");
  return status + (kind.empty() ? "" : " (" + kind + ")") + ": " + str_or(outcome, "message");
}

}  // namespace

std::string trace_to_jsonl(const PipelineTrace& trace) {
  json doc;
  doc["sample_id"] = trace.sample_id;
  doc["question"] = trace.question;
  doc["db_id"] = trace.db_id;
  doc["gold_sql"] = trace.gold_sql ? json(*trace.gold_sql) : json(nullptr);
  doc["gold_outcome"] = trace.gold_outcome ? outcome_json(*trace.gold_outcome) : json(nullptr);
  doc["linked_schema"] = trace.linked_schema ? link_json(*trace.linked_schema) : json(nullptr);
  doc["link_issues"] = trace.link_issues;
  doc["stages"] = json::array();
  for (const auto& stage : trace.stages) {
    doc["stages"].push_back(stage_json(stage));
  }
  doc["attempts"] = json::array();
  for (const auto& attempt : trace.attempts) {
    doc["attempts"].push_back({{"round", attempt.round},
                               {"raw_response", attempt.raw_response},
                               {"sql", attempt.sql ? json(attempt.sql->text()) : json(nullptr)},
                               {"sanitize_notes", attempt.sanitize_notes},
                               {"outcome", outcome_json(attempt.outcome)},
                               {"ea", attempt.ea ? json(*attempt.ea) : json(nullptr)},
                               {"repeat", attempt.repeat}});
  }
  doc["status"] = to_string(trace.status);
  doc["error"] = trace.error;
  return doc.dump();
}

std::string format_trace_line(std::string_view jsonl_line) {
  json doc;
  try {
    doc = json::parse(jsonl_line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("trace line is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw FormatError("trace line must be an object");
  }
  std::ostringstream out;
  out << "sample " << str_or(doc, "sample_id") << " [" << str_or(doc, "db_id") << "] status "
      << str_or(doc, "status") << "\n";
  out << "question: " << str_or(doc, "question") << "\n";
  if (doc.contains("gold_sql") && doc["gold_sql"].is_string()) {
    out << "gold: " << doc["gold_sql"].get<std::string>() << "\n";
  }
  if (std::string error = str_or(doc, "error"); !error.empty()) {
    out << "error: " << error << "\n";
  }
  if (doc.contains("link_issues")) {
    for (const auto& issue : doc["link_issues"]) {
      out << "link " << issue.get<std::string>() << "\n";
    }
  }
  out << "stages:\n";
  int index = 1;
  for (const auto& stage : doc.value("stages", json::array())) {
    out << "  " << index++ << ". " << str_or(stage, "role") << " round " << stage.value("round", 0);
    if (stage.value("call_index", 0) > 0) {
      out << " (re-ask)";
    }
    if (const json& response = stage["response"]; response.is_object()) {
      out << " " << response.value("prompt_tokens", 0) << "+" << response.value("completion_tokens", 0)
          << " tokens via " << str_or(response, "backend");
    }
    out << (stage.value("ok", false) ? " ok" : " FAILED: " + str_or(stage, "error")) << "\n";
    for (const auto& warning : stage.value("warnings", json::array())) {
      out << "     warning: " << warning.get<std::string>() << "\n";
    }
  }
  out << "attempts:\n";
  for (const auto& attempt : doc.value("attempts", json::array())) {
    out << "  round " << attempt.value("round", 0) << ": ";
    out << (attempt["sql"].is_string() ? attempt["sql"].get<std::string>() : std::string("<no SQL extracted>"))
        << "\n";
    out << "     -> " << describe_outcome_json(attempt.value("outcome", json::object()));
    if (attempt["ea"].is_boolean()) {
      out << (attempt["ea"].get<bool>() ? ", matches gold" : ", differs from gold");
    }
    if (attempt.value("repeat", false)) {
      out << ", repeats an earlier attempt";
    }
    out << "\n";
  }
  return out.str();
}

std::optional<std::string> find_trace_line(const std::filesystem::path& trace_file, std::string_view sample_id) {
  std::ifstream in(trace_file, std::ios::binary);
  if (!in) {
    throw IoError("cannot read trace file " + trace_file.string());
  }
  std::optional<std::string> found;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    try {
      json doc = json::parse(line);
      if (doc.is_object() && str_or(doc, "sample_id") == sample_id) {
        found = line;
      }
    } catch (const json::parse_error&) {
      // Torn trailing line from an interrupted run.
    }
  }
  return found;
}

TraceWriter::TraceWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  std::ofstream touch(path_, std::ios::app);
  if (!touch) {
    throw IoError("cannot open trace file " + path_.string());
  }
}

void TraceWriter::append(const PipelineTrace& trace) {
  std::string line = trace_to_jsonl(trace);
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) {
    throw IoError("cannot append to trace file " + path_.string());
  }
}

}  // namespace nl2sql
