#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nl2sql {

enum class TokenKind { kWord, kNumber, kString, kQuotedIdentifier, kPunct };

struct Token {
  TokenKind kind;
  std::string_view text;  // view into the lexed source
  std::size_t offset = 0;
};

struct LexResult {
  std::vector<Token> tokens;
  // Set when the input ends inside a string, quoted identifier or block comment.
  std::optional<std::size_t> error_offset;
};

// SQLite-flavoured lexer. Comments are skipped; the returned views alias `sql`.
LexResult lex_sql(std::string_view sql);

// True when `text` is exactly one complete SELECT / WITH / VALUES statement
// under a permissive grammar (an optional trailing semicolon is allowed).
bool is_complete_sql_statement(std::string_view text);

// A sanitized, single, non-empty statement with no fences or trailing semicolon.
class SqlQuery {
 public:
  const std::string& text() const { return text_; }
  bool operator==(const SqlQuery&) const = default;

 private:
  explicit SqlQuery(std::string text) : text_(std::move(text)) {}
  friend SqlQuery sanitize(std::string_view raw, std::vector<std::string>* notes);

  std::string text_;
};

// Extracts the SQL statement from a model response: strips code fences, leading
// prose before the first SELECT/WITH/VALUES, trailing prose and semicolons, and
// keeps only the first statement. Dropped material is described in `notes`.
// Throws SanitizeError when no statement can be found.
SqlQuery sanitize(std::string_view raw, std::vector<std::string>* notes = nullptr);

// True iff ORDER BY appears at the outermost statement level. Unlexable input
// yields false.
bool has_top_level_order_by(std::string_view sql);

// Token comparison ignoring whitespace and the case of bare words; literal
// contents stay significant.
bool same_sql_tokens(std::string_view lhs, std::string_view rhs);

}  // namespace nl2sql
