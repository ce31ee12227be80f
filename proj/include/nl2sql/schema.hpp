#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nl2sql {

// Coarse column types used in prompts. Mirrors the benchmark tables file.
enum class ColumnType { kText, kNumber, kTime, kBoolean, kOthers };

std::string_view to_string(ColumnType type);
std::optional<ColumnType> parse_column_type(std::string_view text);

// Maps an engine-declared type ("VARCHAR(20)", "INT", "datetime") onto the
// five logical types.
ColumnType logical_type_from_declared(std::string_view declared);

struct Column {
  std::string name;
  ColumnType type = ColumnType::kText;

  bool operator==(const Column&) const = default;
};

struct ColumnRef {
  std::string table;
  std::string column;

  bool operator==(const ColumnRef&) const = default;
  std::string to_string() const { return table + "." + column; }
};

// Case-insensitive equality on both endpoints.
bool same_ref(const ColumnRef& lhs, const ColumnRef& rhs);

struct ForeignKey {
  ColumnRef source;
  ColumnRef target;

  bool operator==(const ForeignKey&) const = default;
};

struct TableDef {
  std::string name;
  std::vector<Column> columns;
  std::vector<std::string> primary_keys;

  const Column* find_column(std::string_view column) const;
  bool is_primary_key(std::string_view column) const;

  bool operator==(const TableDef&) const = default;
};

struct DatabaseSchema {
  std::string db_id;
  std::vector<TableDef> tables;
  std::vector<ForeignKey> foreign_keys;

  const TableDef* find_table(std::string_view table) const;
  // True when (source, target) is a declared key in either direction.
  bool has_foreign_key(const ForeignKey& edge) const;

  bool operator==(const DatabaseSchema&) const = default;
};

// The question-relevant crop produced by the schema linking agent.
struct LinkedSchema {
  std::string db_id;
  std::vector<std::pair<std::string, std::vector<std::string>>> kept;
  std::vector<ForeignKey> join_edges;
  std::string notes;

  bool operator==(const LinkedSchema&) const = default;
};

// Throws ValidationError on the first broken invariant (duplicate names,
// dangling key references).
void validate_schema(const DatabaseSchema& schema);

std::vector<DatabaseSchema> parse_tables_json(std::string_view text);
std::vector<DatabaseSchema> load_tables_json(const std::filesystem::path& path);

// Reads the catalog of an embedded database file. Declared foreign keys whose
// endpoints do not resolve are skipped.
DatabaseSchema introspect_database(const std::filesystem::path& db_file);

std::string render_schema_text(const DatabaseSchema& schema);
std::string render_schema_text(const DatabaseSchema& parent, const LinkedSchema& link);

// Every table and column of the parent, every declared foreign key.
LinkedSchema full_link(const DatabaseSchema& schema);

enum class LinkIssueKind {
  kEmpty,
  kUnknownTable,
  kUnknownColumn,
  kNonForeignKeyEdge,
  kEdgeEndpointNotKept,
};

std::string_view to_string(LinkIssueKind kind);

struct LinkIssue {
  LinkIssueKind kind;
  std::string entity;

  std::string describe() const;
  bool operator==(const LinkIssue&) const = default;
};

enum class EdgePolicy { kWarn, kError };

struct LinkCheck {
  std::vector<LinkIssue> errors;
  std::vector<LinkIssue> warnings;

  bool ok() const { return errors.empty(); }
};

LinkCheck validate_linked_schema(const DatabaseSchema& parent, const LinkedSchema& link,
                                 EdgePolicy edge_policy = EdgePolicy::kWarn);

// Drops unknown tables/columns and edges that fail validation, and restores the
// parent's casing. Falls back to the full schema when nothing valid remains.
LinkedSchema repair_link(const DatabaseSchema& parent, const LinkedSchema& link,
                         EdgePolicy edge_policy = EdgePolicy::kWarn);

}  // namespace nl2sql
