#include "nl2sql/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"
#include "sqlite_handle.hpp"

namespace nl2sql {
namespace {

struct Deadline {
  std::chrono::steady_clock::time_point at;
  bool expired = false;
};

int progress_callback(void* arg) {
  auto* deadline = static_cast<Deadline*>(arg);
  if (std::chrono::steady_clock::now() >= deadline->at) {
    deadline->expired = true;
    return 1;
  }
  return 0;
}

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

}  // namespace

ScalarValue ScalarValue::integer(std::int64_t value) { return ScalarValue(Storage(value)); }

ScalarValue ScalarValue::real(double value) {
  // Only integral values inside the int64 range collapse.
  if (std::isfinite(value) && value == std::trunc(value) && value >= -9223372036854775808.0 &&
      value < 9223372036854775808.0) {
    return ScalarValue(Storage(static_cast<std::int64_t>(value)));
  }
  return ScalarValue(Storage(value));
}

ScalarValue ScalarValue::text(std::string value) { return ScalarValue(Storage(std::move(value))); }

ScalarValue ScalarValue::blob(std::string_view bytes) { return ScalarValue(Storage(BlobDigest{sha256_hex(bytes)})); }

std::string ScalarValue::to_string() const {
  struct Visitor {
    std::string operator()(const Null&) const { return "NULL"; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_real(v); }
    std::string operator()(const std::string& v) const { return "'" + v + "'"; }
    std::string operator()(const BlobDigest& v) const { return "blob:" + v.hex.substr(0, 16); }
  };
  return std::visit(Visitor{}, storage_);
}

bool ScalarValue::operator<(const ScalarValue& other) const {
  if (storage_.index() != other.storage_.index()) {
    return storage_.index() < other.storage_.index();
  }
  switch (storage_.index()) {
    case 0:
      return false;
    case 1:
      return std::get<std::int64_t>(storage_) < std::get<std::int64_t>(other.storage_);
    case 2:
      return std::get<double>(storage_) < std::get<double>(other.storage_);
    case 3:
      return std::get<std::string>(storage_) < std::get<std::string>(other.storage_);
    default:
      return std::get<BlobDigest>(storage_).hex < std::get<BlobDigest>(other.storage_).hex;
  }
}

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::kSyntax:
      return "syntax";
    case FailureKind::kMissingEntity:
      return "missing_entity";
    case FailureKind::kType:
      return "type";
    case FailureKind::kOther:
      return "other";
  }
  return "other";
}

FailureKind classify_engine_message(std::string_view message) {
  std::string lower = to_lower(message);
  if (contains(lower, "syntax error") || contains(lower, "incomplete input") || contains(lower, "unrecognized token")) {
    return FailureKind::kSyntax;
  }
  if (contains(lower, "no such table") || contains(lower, "no such column") || contains(lower, "no such function") ||
      contains(lower, "ambiguous column name")) {
    return FailureKind::kMissingEntity;
  }
  if (contains(lower, "datatype mismatch") || contains(lower, "type mismatch")) {
    return FailureKind::kType;
  }
  return FailureKind::kOther;
}

std::string_view ExecutionOutcome::status() const {
  switch (value_.index()) {
    case 0:
      return "success";
    case 1:
      return "failure";
    default:
      return "timeout";
  }
}

std::string ExecutionOutcome::describe() const {
  if (const auto* rs = result()) {
    return "success: " + std::to_string(rs->rows.size()) + " row(s), " + std::to_string(rs->column_count) +
           " column(s)";
  }
  if (const auto* f = failure()) {
    return "failure (" + std::string(to_string(f->kind)) + "): " + f->message;
  }
  return "timeout after " + std::to_string(std::get<ExecutionTimeout>(value_).limit.count()) + " ms";
}

ExecutionOutcome execute(const std::filesystem::path& db_file, const SqlQuery& query,
                         std::chrono::milliseconds timeout) {
  auto db = detail::open_read_only(db_file);
  Deadline deadline{std::chrono::steady_clock::now() + timeout};
  sqlite3_progress_handler(db.get(), 1000, &progress_callback, &deadline);

  sqlite3_stmt* raw = nullptr;
  const std::string& sql = query.text();
  int rc = sqlite3_prepare_v2(db.get(), sql.c_str(), static_cast<int>(sql.size()), &raw, nullptr);
  detail::StmtPtr stmt(raw);
  if (rc != SQLITE_OK) {
    if (deadline.expired) {
      return ExecutionTimeout{timeout};
    }
    std::string message = sqlite3_errmsg(db.get());
    return ExecutionFailure{classify_engine_message(message), message};
  }
  if (!stmt) {
    return ExecutionFailure{FailureKind::kSyntax, "empty statement"};
  }
  if (!sqlite3_stmt_readonly(stmt.get())) {
    return ExecutionFailure{FailureKind::kOther, "statement is not read-only"};
  }

  ResultSet result;
  result.column_count = static_cast<std::size_t>(sqlite3_column_count(stmt.get()));
  while (true) {
    rc = sqlite3_step(stmt.get());
    if (rc == SQLITE_DONE) {
      break;
    }
    if (rc != SQLITE_ROW) {
      if (deadline.expired || rc == SQLITE_INTERRUPT) {
        return ExecutionTimeout{timeout};
      }
      std::string message = sqlite3_errmsg(db.get());
      return ExecutionFailure{classify_engine_message(message), message};
    }
    Row row;
    row.reserve(result.column_count);
    for (int c = 0; c < static_cast<int>(result.column_count); ++c) {
      switch (sqlite3_column_type(stmt.get(), c)) {
        case SQLITE_INTEGER:
          row.push_back(ScalarValue::integer(sqlite3_column_int64(stmt.get(), c)));
          break;
        case SQLITE_FLOAT:
          row.push_back(ScalarValue::real(sqlite3_column_double(stmt.get(), c)));
          break;
        case SQLITE_TEXT:
          row.push_back(ScalarValue::text(detail::column_text(stmt.get(), c)));
          break;
        case SQLITE_BLOB: {
          const void* bytes = sqlite3_column_blob(stmt.get(), c);
          int size = sqlite3_column_bytes(stmt.get(), c);
          row.push_back(ScalarValue::blob(
              std::string_view(static_cast<const char*>(bytes), static_cast<std::size_t>(size))));
          break;
        }
        default:
          row.push_back(ScalarValue::null());
      }
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

bool compare_results(const ExecutionOutcome& gold, const ExecutionOutcome& pred, bool order_sensitive) {
  const ResultSet* g = gold.result();
  const ResultSet* p = pred.result();
  if (g == nullptr || p == nullptr) {
    return false;
  }
  if (g->column_count != p->column_count || g->rows.size() != p->rows.size()) {
    return false;
  }
  if (order_sensitive) {
    return g->rows == p->rows;
  }
  std::vector<Row> lhs = g->rows;
  std::vector<Row> rhs = p->rows;
  std::sort(lhs.begin(), lhs.end());
  std::sort(rhs.begin(), rhs.end());
  return lhs == rhs;
}

}  // namespace nl2sql
