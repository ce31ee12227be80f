#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nl2sql/sql_text.hpp"

namespace nl2sql {

// A canonical cell value. Integral reals collapse to integers; blobs are kept
// as a digest so rows stay comparable and printable.
class ScalarValue {
 public:
  struct Null {
    bool operator==(const Null&) const = default;
  };
  struct BlobDigest {
    std::string hex;
    bool operator==(const BlobDigest&) const = default;
  };
  using Storage = std::variant<Null, std::int64_t, double, std::string, BlobDigest>;

  ScalarValue() = default;
  static ScalarValue null() { return ScalarValue(); }
  static ScalarValue integer(std::int64_t value);
  static ScalarValue real(double value);
  static ScalarValue text(std::string value);
  static ScalarValue blob(std::string_view bytes);

  const Storage& storage() const { return storage_; }
  bool is_null() const { return std::holds_alternative<Null>(storage_); }
  std::string to_string() const;

  bool operator==(const ScalarValue&) const = default;
  // Total order: null < integer < real < text < blob, then by value.
  bool operator<(const ScalarValue& other) const;

 private:
  explicit ScalarValue(Storage storage) : storage_(std::move(storage)) {}
  Storage storage_ = Null{};
};

using Row = std::vector<ScalarValue>;

struct ResultSet {
  std::size_t column_count = 0;
  std::vector<Row> rows;

  bool operator==(const ResultSet&) const = default;
};

enum class FailureKind { kSyntax, kMissingEntity, kType, kOther };

std::string_view to_string(FailureKind kind);
FailureKind classify_engine_message(std::string_view message);

struct ExecutionFailure {
  FailureKind kind = FailureKind::kOther;
  std::string message;

  bool operator==(const ExecutionFailure&) const = default;
};

struct ExecutionTimeout {
  std::chrono::milliseconds limit{0};

  bool operator==(const ExecutionTimeout&) const = default;
};

class ExecutionOutcome {
 public:
  using Variant = std::variant<ResultSet, ExecutionFailure, ExecutionTimeout>;

  ExecutionOutcome(ResultSet result) : value_(std::move(result)) {}
  ExecutionOutcome(ExecutionFailure failure) : value_(std::move(failure)) {}
  ExecutionOutcome(ExecutionTimeout timeout) : value_(timeout) {}

  bool succeeded() const { return std::holds_alternative<ResultSet>(value_); }
  bool timed_out() const { return std::holds_alternative<ExecutionTimeout>(value_); }
  const ResultSet* result() const { return std::get_if<ResultSet>(&value_); }
  const ExecutionFailure* failure() const { return std::get_if<ExecutionFailure>(&value_); }
  const Variant& value() const { return value_; }

  // "success", "failure" or "timeout".
  std::string_view status() const;
  std::string describe() const;

  bool operator==(const ExecutionOutcome&) const = default;

 private:
  Variant value_;
};

inline constexpr std::chrono::milliseconds kDefaultQueryTimeout{30000};

// Read-only execution. Engine errors come back as ExecutionFailure; only a
// missing or unreadable database file throws (OpenError).
ExecutionOutcome execute(const std::filesystem::path& db_file, const SqlQuery& query,
                         std::chrono::milliseconds timeout = kDefaultQueryTimeout);

// Execution-accuracy comparison. Failures and timeouts never match. Ordered
// mode compares row sequences; otherwise rows are compared as multisets.
bool compare_results(const ExecutionOutcome& gold, const ExecutionOutcome& pred, bool order_sensitive);

}  // namespace nl2sql
