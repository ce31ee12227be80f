#pragma once

#include <sqlite3.h>

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace nl2sql::detail {

struct SqliteCloser {
  void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
};

struct StmtFinalizer {
  void operator()(sqlite3_stmt* stmt) const { sqlite3_finalize(stmt); }
};

using SqlitePtr = std::unique_ptr<sqlite3, SqliteCloser>;
using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtFinalizer>;

// Opens a database file read-only and immutable, so no journal or lock file is
// ever written next to it. Throws OpenError when the file is missing.
SqlitePtr open_read_only(const std::filesystem::path& db_file);

// Prepares a statement or throws OpenError carrying the engine message.
StmtPtr prepare_or_throw(sqlite3* db, std::string_view sql);

std::string column_text(sqlite3_stmt* stmt, int column);

}  // namespace nl2sql::detail
