#include "nl2sql/schema.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"
#include "sqlite_handle.hpp"

namespace nl2sql {
namespace {

using json = nlohmann::json;

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

bool is_plain_identifier(std::string_view name) {
  if (name.empty() || !(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) {
    return false;
  }
  return std::all_of(name.begin(), name.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
  });
}

std::string quote_identifier(std::string_view name) {
  if (is_plain_identifier(name)) {
    return std::string(name);
  }
  std::string out = "\"";
  for (char ch : name) {
    if (ch == '"') {
      out.push_back('"');
    }
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

const std::vector<std::string>* kept_columns(const LinkedSchema& link, std::string_view table) {
  for (const auto& [name, columns] : link.kept) {
    if (iequals(name, table)) {
      return &columns;
    }
  }
  return nullptr;
}

bool is_kept(const LinkedSchema& link, const ColumnRef& ref) {
  const auto* columns = kept_columns(link, ref.table);
  if (columns == nullptr) {
    return false;
  }
  return std::any_of(columns->begin(), columns->end(),
                     [&](const std::string& c) { return iequals(c, ref.column); });
}

bool ref_exists(const DatabaseSchema& schema, const ColumnRef& ref) {
  const TableDef* table = schema.find_table(ref.table);
  return table != nullptr && table->find_column(ref.column) != nullptr;
}

// Renders one CREATE TABLE block. Foreign keys are annotated on the source column.
void render_table(std::ostringstream& out, const TableDef& table, const std::vector<const Column*>& columns,
                  const std::vector<ForeignKey>& keys) {
  out << "CREATE TABLE " << quote_identifier(table.name) << " (\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const Column& column = *columns[i];
    out << "  " << quote_identifier(column.name) << ' ' << to_string(column.type);
    if (table.is_primary_key(column.name)) {
      out << " PRIMARY KEY";
    }
    if (i + 1 < columns.size()) {
      out << ',';
    }
    for (const auto& key : keys) {
      if (iequals(key.source.table, table.name) && iequals(key.source.column, column.name)) {
        out << "  -- FOREIGN KEY -> " << key.target.table << '.' << key.target.column;
      }
    }
    out << '\n';
  }
  out << ");\n";
}

int json_int(const json& value, std::size_t entry, const char* field) {
  if (!value.is_number_integer()) {
    throw FormatError(std::string("expected integer in ") + field, entry);
  }
  return value.get<int>();
}

const json& required(const json& object, std::size_t entry, const char* primary, const char* fallback) {
  if (object.contains(primary)) {
    return object.at(primary);
  }
  if (fallback != nullptr && object.contains(fallback)) {
    return object.at(fallback);
  }
  throw FormatError(std::string("missing field ") + primary, entry);
}

DatabaseSchema parse_entry(const json& entry, std::size_t index) {
  if (!entry.is_object()) {
    throw FormatError("expected an object", index);
  }
  const json& db_id = required(entry, index, "db_id", nullptr);
  const json& table_names = required(entry, index, "table_names_original", "table_names");
  const json& column_names = required(entry, index, "column_names_original", "column_names");
  const json& column_types = required(entry, index, "column_types", nullptr);
  const json& primary_keys = required(entry, index, "primary_keys", nullptr);
  const json& foreign_keys = required(entry, index, "foreign_keys", nullptr);
  if (!db_id.is_string() || !table_names.is_array() || !column_names.is_array() || !column_types.is_array() ||
      !primary_keys.is_array() || !foreign_keys.is_array()) {
    throw FormatError("field has the wrong type", index);
  }
  if (column_types.size() != column_names.size()) {
    throw FormatError("column_types and column_names differ in length", index);
  }

  DatabaseSchema schema;
  schema.db_id = db_id.get<std::string>();
  for (const auto& name : table_names) {
    if (!name.is_string()) {
      throw FormatError("table name is not a string", index);
    }
    schema.tables.push_back(TableDef{name.get<std::string>(), {}, {}});
  }
  if (schema.tables.empty()) {
    throw ValidationError("database " + schema.db_id + " has no tables");
  }

  // Column slot i maps to (table index, position within that table); slot 0 is
  // usually the [-1, "*"] wildcard.
  std::vector<std::optional<ColumnRef>> slots;
  slots.reserve(column_names.size());
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    const json& pair = column_names[i];
    if (!pair.is_array() || pair.size() != 2 || !pair[1].is_string()) {
      throw FormatError("column entry must be [table_index, name]", index);
    }
    int table_index = json_int(pair[0], index, "column_names_original");
    if (table_index < 0) {
      slots.emplace_back(std::nullopt);
      continue;
    }
    if (static_cast<std::size_t>(table_index) >= schema.tables.size()) {
      throw ValidationError("database " + schema.db_id + ": column " + std::to_string(i) +
                            " references missing table index " + std::to_string(table_index));
    }
    if (!column_types[i].is_string()) {
      throw FormatError("column type is not a string", index);
    }
    auto type = parse_column_type(column_types[i].get<std::string>());
    if (!type) {
      throw FormatError("unknown column type '" + column_types[i].get<std::string>() + "'", index);
    }
    TableDef& table = schema.tables[static_cast<std::size_t>(table_index)];
    table.columns.push_back(Column{pair[1].get<std::string>(), *type});
    slots.emplace_back(ColumnRef{table.name, table.columns.back().name});
  }

  auto resolve = [&](const json& value, const char* field) -> const ColumnRef& {
    int slot = json_int(value, index, field);
    if (slot < 0 || static_cast<std::size_t>(slot) >= slots.size() || !slots[static_cast<std::size_t>(slot)]) {
      throw ValidationError("database " + schema.db_id + ": " + field + " column index " + std::to_string(slot) +
                            " is out of range");
    }
    return *slots[static_cast<std::size_t>(slot)];
  };

  for (const auto& key : primary_keys) {
    // Newer releases list composite keys as nested arrays.
    std::vector<json> members = key.is_array() ? key.get<std::vector<json>>() : std::vector<json>{key};
    for (const auto& member : members) {
      const ColumnRef& ref = resolve(member, "primary_keys");
      TableDef* table = nullptr;
      for (auto& t : schema.tables) {
        if (t.name == ref.table) {
          table = &t;
          break;
        }
      }
      if (!table->is_primary_key(ref.column)) {
        table->primary_keys.push_back(ref.column);
      }
    }
  }

  for (const auto& pair : foreign_keys) {
    if (!pair.is_array() || pair.size() != 2) {
      throw FormatError("foreign key must be [column_index, column_index]", index);
    }
    ForeignKey key{resolve(pair[0], "foreign_keys"), resolve(pair[1], "foreign_keys")};
    bool duplicate = std::any_of(schema.foreign_keys.begin(), schema.foreign_keys.end(), [&](const ForeignKey& k) {
      return same_ref(k.source, key.source) && same_ref(k.target, key.target);
    });
    if (!duplicate) {
      schema.foreign_keys.push_back(std::move(key));
    }
  }

  validate_schema(schema);
  return schema;
}

}  // namespace

std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::kText:
      return "text";
    case ColumnType::kNumber:
      return "number";
    case ColumnType::kTime:
      return "time";
    case ColumnType::kBoolean:
      return "boolean";
    case ColumnType::kOthers:
      return "others";
  }
  return "others";
}

std::optional<ColumnType> parse_column_type(std::string_view text) {
  for (ColumnType type :
       {ColumnType::kText, ColumnType::kNumber, ColumnType::kTime, ColumnType::kBoolean, ColumnType::kOthers}) {
    if (iequals(text, to_string(type))) {
      return type;
    }
  }
  return std::nullopt;
}

ColumnType logical_type_from_declared(std::string_view declared) {
  std::string lower = to_lower(declared);
  if (lower.empty()) {
    return ColumnType::kOthers;
  }
  if (contains(lower, "bool")) {
    return ColumnType::kBoolean;
  }
  if (contains(lower, "date") || contains(lower, "time") || contains(lower, "year")) {
    return ColumnType::kTime;
  }
  if (contains(lower, "char") || contains(lower, "text") || contains(lower, "clob") || contains(lower, "string")) {
    return ColumnType::kText;
  }
  for (std::string_view marker : {"int", "real", "floa", "doub", "num", "dec"}) {
    if (contains(lower, marker)) {
      return ColumnType::kNumber;
    }
  }
  return ColumnType::kOthers;
}

bool same_ref(const ColumnRef& lhs, const ColumnRef& rhs) {
  return iequals(lhs.table, rhs.table) && iequals(lhs.column, rhs.column);
}

const Column* TableDef::find_column(std::string_view column) const {
  for (const auto& c : columns) {
    if (iequals(c.name, column)) {
      return &c;
    }
  }
  return nullptr;
}

bool TableDef::is_primary_key(std::string_view column) const {
  return std::any_of(primary_keys.begin(), primary_keys.end(),
                     [&](const std::string& pk) { return iequals(pk, column); });
}

const TableDef* DatabaseSchema::find_table(std::string_view table) const {
  for (const auto& t : tables) {
    if (iequals(t.name, table)) {
      return &t;
    }
  }
  return nullptr;
}

bool DatabaseSchema::has_foreign_key(const ForeignKey& edge) const {
  return std::any_of(foreign_keys.begin(), foreign_keys.end(), [&](const ForeignKey& key) {
    return (same_ref(key.source, edge.source) && same_ref(key.target, edge.target)) ||
           (same_ref(key.source, edge.target) && same_ref(key.target, edge.source));
  });
}

void validate_schema(const DatabaseSchema& schema) {
  for (std::size_t i = 0; i < schema.tables.size(); ++i) {
    const TableDef& table = schema.tables[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (iequals(schema.tables[j].name, table.name)) {
        throw ValidationError("database " + schema.db_id + ": duplicate table " + table.name);
      }
    }
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      for (std::size_t d = 0; d < c; ++d) {
        if (iequals(table.columns[c].name, table.columns[d].name)) {
          throw ValidationError("database " + schema.db_id + ": duplicate column " + table.name + "." +
                                table.columns[c].name);
        }
      }
    }
    for (const auto& pk : table.primary_keys) {
      if (table.find_column(pk) == nullptr) {
        throw ValidationError("database " + schema.db_id + ": primary key " + table.name + "." + pk +
                              " is not a column");
      }
    }
  }
  for (const auto& key : schema.foreign_keys) {
    for (const ColumnRef* ref : {&key.source, &key.target}) {
      if (!ref_exists(schema, *ref)) {
        throw ValidationError("database " + schema.db_id + ": foreign key endpoint " + ref->to_string() +
                              " does not exist");
      }
    }
  }
}

std::vector<DatabaseSchema> parse_tables_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("tables file is not valid JSON: ") + e.what());
  }
  if (!root.is_array()) {
    throw FormatError("tables file must hold a top-level array");
  }
  std::vector<DatabaseSchema> schemas;
  schemas.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    try {
      schemas.push_back(parse_entry(root[i], i));
    } catch (const json::exception& e) {
      throw FormatError(e.what(), i);
    }
  }
  return schemas;
}

std::vector<DatabaseSchema> load_tables_json(const std::filesystem::path& path) {
  return parse_tables_json(read_file(path));
}

DatabaseSchema introspect_database(const std::filesystem::path& db_file) {
  auto db = detail::open_read_only(db_file);
  DatabaseSchema schema;
  schema.db_id = db_file.stem().string();

  auto tables = detail::prepare_or_throw(
      db.get(), "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid");
  while (sqlite3_step(tables.get()) == SQLITE_ROW) {
    schema.tables.push_back(TableDef{detail::column_text(tables.get(), 0), {}, {}});
  }

  struct PendingKey {
    ColumnRef source;
    std::string target_table;
    std::string target_column;
  };
  std::vector<PendingKey> pending;

  for (auto& table : schema.tables) {
    std::string quoted = quote_identifier(table.name);
    if (quoted == table.name) {
      quoted = "\"" + table.name + "\"";
    }
    auto info = detail::prepare_or_throw(db.get(), "PRAGMA table_info(" + quoted + ")");
    std::vector<std::pair<int, std::string>> pk_order;
    while (sqlite3_step(info.get()) == SQLITE_ROW) {
      std::string name = detail::column_text(info.get(), 1);
      std::string declared = detail::column_text(info.get(), 2);
      int pk = sqlite3_column_int(info.get(), 5);
      table.columns.push_back(Column{name, logical_type_from_declared(declared)});
      if (pk > 0) {
        pk_order.emplace_back(pk, name);
      }
    }
    std::sort(pk_order.begin(), pk_order.end());
    for (auto& [order, name] : pk_order) {
      table.primary_keys.push_back(name);
    }

    auto keys = detail::prepare_or_throw(db.get(), "PRAGMA foreign_key_list(" + quoted + ")");
    while (sqlite3_step(keys.get()) == SQLITE_ROW) {
      pending.push_back(PendingKey{ColumnRef{table.name, detail::column_text(keys.get(), 3)},
                                   detail::column_text(keys.get(), 2), detail::column_text(keys.get(), 4)});
    }
  }

  for (const auto& key : pending) {
    const TableDef* source = schema.find_table(key.source.table);
    const TableDef* target = schema.find_table(key.target_table);
    if (source == nullptr || target == nullptr) {
      continue;
    }
    const Column* source_column = source->find_column(key.source.column);
    std::string target_column = key.target_column;
    // A bare REFERENCES parent points at the parent's primary key.
    if (target_column.empty() && target->primary_keys.size() == 1) {
      target_column = target->primary_keys.front();
    }
    const Column* target_col = target->find_column(target_column);
    if (source_column == nullptr || target_col == nullptr) {
      continue;
    }
    ForeignKey fk{ColumnRef{source->name, source_column->name}, ColumnRef{target->name, target_col->name}};
    if (std::none_of(schema.foreign_keys.begin(), schema.foreign_keys.end(),
                     [&](const ForeignKey& k) { return k == fk; })) {
      schema.foreign_keys.push_back(std::move(fk));
    }
  }
  return schema;
}

std::string render_schema_text(const DatabaseSchema& schema) {
  std::ostringstream out;
  bool first = true;
  for (const auto& table : schema.tables) {
    if (!first) {
      out << '\n';
    }
    first = false;
    std::vector<const Column*> columns;
    for (const auto& c : table.columns) {
      columns.push_back(&c);
    }
    render_table(out, table, columns, schema.foreign_keys);
  }
  return out.str();
}

std::string render_schema_text(const DatabaseSchema& parent, const LinkedSchema& link) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [table_name, column_names] : link.kept) {
    const TableDef* table = parent.find_table(table_name);
    if (table == nullptr) {
      continue;
    }
    std::vector<const Column*> columns;
    for (const auto& name : column_names) {
      if (const Column* c = table->find_column(name)) {
        columns.push_back(c);
      }
    }
    if (!first) {
      out << '\n';
    }
    first = false;
    render_table(out, *table, columns, link.join_edges);
  }
  return out.str();
}

LinkedSchema full_link(const DatabaseSchema& schema) {
  LinkedSchema link;
  link.db_id = schema.db_id;
  for (const auto& table : schema.tables) {
    std::vector<std::string> columns;
    for (const auto& c : table.columns) {
      columns.push_back(c.name);
    }
    link.kept.emplace_back(table.name, std::move(columns));
  }
  link.join_edges = schema.foreign_keys;
  return link;
}

std::string_view to_string(LinkIssueKind kind) {
  switch (kind) {
    case LinkIssueKind::kEmpty:
      return "empty-link";
    case LinkIssueKind::kUnknownTable:
      return "unknown-table";
    case LinkIssueKind::kUnknownColumn:
      return "unknown-column";
    case LinkIssueKind::kNonForeignKeyEdge:
      return "non-fk-edge";
    case LinkIssueKind::kEdgeEndpointNotKept:
      return "edge-endpoint-not-kept";
  }
  return "unknown";
}

std::string LinkIssue::describe() const { return std::string(to_string(kind)) + ": " + entity; }

LinkCheck validate_linked_schema(const DatabaseSchema& parent, const LinkedSchema& link, EdgePolicy edge_policy) {
  LinkCheck check;
  if (link.kept.empty()) {
    check.errors.push_back(LinkIssue{LinkIssueKind::kEmpty, link.db_id});
  }
  for (const auto& [table_name, columns] : link.kept) {
    const TableDef* table = parent.find_table(table_name);
    if (table == nullptr) {
      check.errors.push_back(LinkIssue{LinkIssueKind::kUnknownTable, table_name});
      continue;
    }
    for (const auto& column : columns) {
      if (table->find_column(column) == nullptr) {
        check.errors.push_back(LinkIssue{LinkIssueKind::kUnknownColumn, table_name + "." + column});
      }
    }
  }
  for (const auto& edge : link.join_edges) {
    std::string entity = edge.source.to_string() + " = " + edge.target.to_string();
    bool endpoints_exist = true;
    for (const ColumnRef* ref : {&edge.source, &edge.target}) {
      if (parent.find_table(ref->table) == nullptr) {
        check.errors.push_back(LinkIssue{LinkIssueKind::kUnknownTable, ref->table});
        endpoints_exist = false;
      } else if (!ref_exists(parent, *ref)) {
        check.errors.push_back(LinkIssue{LinkIssueKind::kUnknownColumn, ref->to_string()});
        endpoints_exist = false;
      }
    }
    if (!endpoints_exist) {
      continue;
    }
    if (!is_kept(link, edge.source) || !is_kept(link, edge.target)) {
      check.errors.push_back(LinkIssue{LinkIssueKind::kEdgeEndpointNotKept, entity});
    }
    if (!parent.has_foreign_key(edge)) {
      auto& bucket = edge_policy == EdgePolicy::kError ? check.errors : check.warnings;
      bucket.push_back(LinkIssue{LinkIssueKind::kNonForeignKeyEdge, entity});
    }
  }
  return check;
}

LinkedSchema repair_link(const DatabaseSchema& parent, const LinkedSchema& link, EdgePolicy edge_policy) {
  LinkedSchema repaired;
  repaired.db_id = parent.db_id;
  repaired.notes = link.notes;
  for (const auto& [table_name, columns] : link.kept) {
    const TableDef* table = parent.find_table(table_name);
    if (table == nullptr) {
      continue;
    }
    std::vector<std::string> kept;
    for (const auto& column : columns) {
      const Column* c = table->find_column(column);
      if (c != nullptr && std::find(kept.begin(), kept.end(), c->name) == kept.end()) {
        kept.push_back(c->name);
      }
    }
    if (kept.empty()) {
      continue;
    }
    bool merged = false;
    for (auto& [existing, existing_columns] : repaired.kept) {
      if (existing == table->name) {
        for (auto& c : kept) {
          if (std::find(existing_columns.begin(), existing_columns.end(), c) == existing_columns.end()) {
            existing_columns.push_back(c);
          }
        }
        merged = true;
      }
    }
    if (!merged) {
      repaired.kept.emplace_back(table->name, std::move(kept));
    }
  }
  if (repaired.kept.empty()) {
    LinkedSchema fallback = full_link(parent);
    fallback.notes = link.notes;
    return fallback;
  }
  for (const auto& edge : link.join_edges) {
    if (!ref_exists(parent, edge.source) || !ref_exists(parent, edge.target)) {
      continue;
    }
    if (!is_kept(repaired, edge.source) || !is_kept(repaired, edge.target)) {
      continue;
    }
    if (edge_policy == EdgePolicy::kError && !parent.has_foreign_key(edge)) {
      continue;
    }
    const TableDef* source = parent.find_table(edge.source.table);
    const TableDef* target = parent.find_table(edge.target.table);
    repaired.join_edges.push_back(
        ForeignKey{ColumnRef{source->name, source->find_column(edge.source.column)->name},
                   ColumnRef{target->name, target->find_column(edge.target.column)->name}});
  }
  return repaired;
}

}  // namespace nl2sql
