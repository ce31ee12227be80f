#include "sqlite_handle.hpp"

#include <cctype>
#include <cstdio>
#include <system_error>

#include "nl2sql/errors.hpp"

namespace nl2sql::detail {
namespace {

std::string uri_escape(const std::string& path) {
  std::string out;
  for (unsigned char ch : path) {
    if (std::isalnum(ch) || ch == '/' || ch == '.' || ch == '-' || ch == '_' || ch == '~') {
      out.push_back(static_cast<char>(ch));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", ch);
      out += buf;
    }
  }
  return out;
}

}  // namespace

SqlitePtr open_read_only(const std::filesystem::path& db_file) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(db_file, ec)) {
    throw OpenError("database file not found: " + db_file.string());
  }
  auto absolute = std::filesystem::absolute(db_file, ec);
  std::string uri = "file:" + uri_escape((ec ? db_file : absolute).string()) + "?mode=ro&immutable=1";

  sqlite3* raw = nullptr;
  int rc = sqlite3_open_v2(uri.c_str(), &raw, SQLITE_OPEN_READONLY | SQLITE_OPEN_URI | SQLITE_OPEN_NOMUTEX,
                           nullptr);
  SqlitePtr db(raw);
  if (rc != SQLITE_OK) {
    std::string message = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
    throw OpenError("cannot open " + db_file.string() + ": " + message);
  }
  // Touch the header so corrupt files fail here instead of mid-query.
  char* err = nullptr;
  rc = sqlite3_exec(db.get(), "SELECT count(*) FROM sqlite_master", nullptr, nullptr, &err);
  if (rc != SQLITE_OK) {
    std::string message = err ? err : sqlite3_errstr(rc);
    sqlite3_free(err);
    throw OpenError("cannot read " + db_file.string() + ": " + message);
  }
  return db;
}

StmtPtr prepare_or_throw(sqlite3* db, std::string_view sql) {
  sqlite3_stmt* raw = nullptr;
  int rc = sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &raw, nullptr);
  StmtPtr stmt(raw);
  if (rc != SQLITE_OK) {
    throw OpenError(std::string("catalog query failed: ") + sqlite3_errmsg(db));
  }
  return stmt;
}

std::string column_text(sqlite3_stmt* stmt, int column) {
  const unsigned char* text = sqlite3_column_text(stmt, column);
  if (text == nullptr) {
    return {};
  }
  return std::string(reinterpret_cast<const char*>(text),
                     static_cast<std::size_t>(sqlite3_column_bytes(stmt, column)));
}

}  // namespace nl2sql::detail
