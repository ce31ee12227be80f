#include "nl2sql/sql_text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

bool is_word_start(unsigned char ch) { return std::isalpha(ch) || ch == '_' || ch >= 0x80; }
bool is_word_char(unsigned char ch) { return std::isalnum(ch) || ch == '_' || ch == '$' || ch >= 0x80; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  // Returns false at end of input or on a lexing error (see error()).
  bool next(Token& out) {
    skip_trivia();
    if (error_ || pos_ >= src_.size()) {
      return false;
    }
    std::size_t start = pos_;
    unsigned char ch = static_cast<unsigned char>(src_[pos_]);
    TokenKind kind = TokenKind::kPunct;
    if (ch == '\'') {
      kind = TokenKind::kString;
      if (!skip_quoted('\'')) return fail(start);
    } else if (ch == '"' || ch == '`') {
      kind = TokenKind::kQuotedIdentifier;
      if (!skip_quoted(static_cast<char>(ch))) return fail(start);
    } else if (ch == '[') {
      kind = TokenKind::kQuotedIdentifier;
      std::size_t close = src_.find(']', pos_ + 1);
      if (close == std::string_view::npos) return fail(start);
      pos_ = close + 1;
    } else if (std::isdigit(ch) || (ch == '.' && pos_ + 1 < src_.size() &&
                                    std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      kind = TokenKind::kNumber;
      lex_number();
    } else if (is_word_start(ch)) {
      kind = TokenKind::kWord;
      while (pos_ < src_.size() && is_word_char(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
      }
    } else {
      static constexpr std::array<std::string_view, 11> kMulti = {"->>", "||", "<=", ">=", "<>", "!=",
                                                                   "==", "<<", ">>", "->", "::"};
      std::size_t len = 1;
      for (auto op : kMulti) {
        if (src_.substr(pos_, op.size()) == op) {
          len = op.size();
          break;
        }
      }
      pos_ += len;
    }
    out = Token{kind, src_.substr(start, pos_ - start), start};
    return true;
  }

  std::optional<std::size_t> error() const { return error_; }
  std::size_t position() const { return pos_; }

 private:
  bool fail(std::size_t at) {
    error_ = at;
    return false;
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      unsigned char ch = static_cast<unsigned char>(src_[pos_]);
      if (std::isspace(ch)) {
        ++pos_;
      } else if (src_.substr(pos_, 2) == "--") {
        std::size_t eol = src_.find('\n', pos_);
        pos_ = eol == std::string_view::npos ? src_.size() : eol + 1;
      } else if (src_.substr(pos_, 2) == "/*") {
        std::size_t close = src_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) {
          error_ = pos_;
          return;
        }
        pos_ = close + 2;
      } else {
        return;
      }
    }
  }

  bool skip_quoted(char quote) {
    ++pos_;
    while (pos_ < src_.size()) {
      if (src_[pos_] == quote) {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == quote) {
          pos_ += 2;
          continue;
        }
        ++pos_;
        return true;
      }
      ++pos_;
    }
    return false;
  }

  void lex_number() {
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    if (src_.substr(pos_, 2) == "0x" || src_.substr(pos_, 2) == "0X") {
      pos_ += 2;
      while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return;
    }
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::optional<std::size_t> error_;
};

constexpr std::array<std::string_view, 52> kReserved = {
    "ALL",     "AND",       "AS",     "ASC",     "BETWEEN", "BY",     "CASE",    "CAST",   "COLLATE",
    "CREATE",  "CROSS",     "DELETE", "DESC",    "DISTINCT", "DROP",  "ELSE",    "END",    "ESCAPE",
    "EXCEPT",  "EXISTS",    "FROM",   "FULL",    "GLOB",    "GROUP",  "HAVING",  "IN",     "INNER",
    "INSERT",  "INTERSECT", "INTO",   "IS",      "ISNULL",  "JOIN",   "LEFT",    "LIKE",   "LIMIT",
    "MATCH",   "NATURAL",   "NOT",    "NOTNULL", "NULL",    "OFFSET", "ON",      "OR",     "ORDER",
    "OUTER",   "REGEXP",    "RIGHT",  "SELECT",  "TABLE",   "THEN",   "UNION",
};
constexpr std::array<std::string_view, 6> kReservedTail = {"UPDATE", "USING", "VALUES", "WHEN", "WHERE", "WITH"};

bool is_reserved(std::string_view word) {
  auto match = [&](std::string_view kw) { return iequals(kw, word); };
  return std::any_of(kReserved.begin(), kReserved.end(), match) ||
         std::any_of(kReservedTail.begin(), kReservedTail.end(), match);
}

// Recursive-descent recognizer. It accepts a superset of SQLite's query
// grammar; expressions are checked for operand/operator alternation only.
class Recognizer {
 public:
  explicit Recognizer(const std::vector<Token>& tokens) : t_(tokens) {}

  bool complete_statement() {
    if (!statement()) return false;
    while (accept_punct(";")) {
    }
    return pos_ == t_.size();
  }

 private:
  bool at_end() const { return pos_ >= t_.size(); }

  bool peek_kw(std::string_view kw, std::size_t ahead = 0) const {
    std::size_t i = pos_ + ahead;
    return i < t_.size() && t_[i].kind == TokenKind::kWord && iequals(t_[i].text, kw);
  }
  bool peek_punct(std::string_view p, std::size_t ahead = 0) const {
    std::size_t i = pos_ + ahead;
    return i < t_.size() && t_[i].kind == TokenKind::kPunct && t_[i].text == p;
  }
  bool accept_kw(std::string_view kw) {
    if (peek_kw(kw)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_punct(std::string_view p) {
    if (peek_punct(p)) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool name() {
    if (at_end()) return false;
    const Token& tok = t_[pos_];
    if (tok.kind == TokenKind::kQuotedIdentifier || (tok.kind == TokenKind::kWord && !is_reserved(tok.text))) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool alias() {
    if (accept_kw("AS")) {
      if (!at_end() && t_[pos_].kind == TokenKind::kString) {
        ++pos_;
        return true;
      }
      return name();
    }
    std::size_t save = pos_;
    if (name()) return true;
    pos_ = save;
    return true;  // aliases are optional
  }

  bool statement() {
    if (accept_kw("WITH")) {
      accept_kw("RECURSIVE");
      do {
        if (!cte()) return false;
      } while (accept_punct(","));
    }
    if (!compound()) return false;
    if (accept_kw("ORDER")) {
      if (!accept_kw("BY")) return false;
      do {
        if (!ordering_term()) return false;
      } while (accept_punct(","));
    }
    if (accept_kw("LIMIT")) {
      if (!expr()) return false;
      if (accept_kw("OFFSET") || accept_punct(",")) {
        if (!expr()) return false;
      }
    }
    return true;
  }

  bool cte() {
    if (!name()) return false;
    if (accept_punct("(")) {
      do {
        if (!name()) return false;
      } while (accept_punct(","));
      if (!accept_punct(")")) return false;
    }
    if (!accept_kw("AS")) return false;
    accept_kw("NOT");
    accept_kw("MATERIALIZED");
    return accept_punct("(") && statement() && accept_punct(")");
  }

  bool compound() {
    if (!core()) return false;
    while (true) {
      if (accept_kw("UNION")) {
        accept_kw("ALL");
      } else if (!accept_kw("INTERSECT") && !accept_kw("EXCEPT")) {
        return true;
      }
      if (!core()) return false;
    }
  }

  bool core() {
    if (accept_kw("VALUES")) {
      do {
        if (!accept_punct("(") || !expr_list() || !accept_punct(")")) return false;
      } while (accept_punct(","));
      return true;
    }
    if (!accept_kw("SELECT")) return false;
    if (!accept_kw("DISTINCT")) accept_kw("ALL");
    do {
      if (!result_column()) return false;
    } while (accept_punct(","));
    if (accept_kw("FROM") && !from_clause()) return false;
    if (accept_kw("WHERE") && !expr()) return false;
    if (accept_kw("GROUP")) {
      if (!accept_kw("BY") || !expr_list()) return false;
    }
    if (accept_kw("HAVING") && !expr()) return false;
    if (accept_kw("WINDOW")) {
      do {
        if (!name() || !accept_kw("AS") || !balanced_parens()) return false;
      } while (accept_punct(","));
    }
    return true;
  }

  bool result_column() {
    if (accept_punct("*")) return true;
    std::size_t save = pos_;
    if (name() && accept_punct(".") && accept_punct("*")) return true;
    pos_ = save;
    return expr() && alias();
  }

  bool join_operator() {
    std::size_t save = pos_;
    accept_kw("NATURAL");
    if (accept_kw("LEFT") || accept_kw("RIGHT") || accept_kw("FULL")) {
      accept_kw("OUTER");
    } else if (!accept_kw("INNER")) {
      accept_kw("CROSS");
    }
    if (accept_kw("JOIN")) return true;
    pos_ = save;
    return false;
  }

  bool from_clause() {
    if (!table_or_subquery()) return false;
    while (true) {
      if (accept_punct(",")) {
        if (!table_or_subquery()) return false;
        continue;
      }
      if (!join_operator()) return true;
      if (!table_or_subquery()) return false;
      if (accept_kw("ON")) {
        if (!expr()) return false;
      } else if (accept_kw("USING")) {
        if (!accept_punct("(")) return false;
        do {
          if (!name()) return false;
        } while (accept_punct(","));
        if (!accept_punct(")")) return false;
      }
    }
  }

  bool table_or_subquery() {
    if (accept_punct("(")) {
      std::size_t save = pos_;
      if (statement() && accept_punct(")")) return alias();
      pos_ = save;
      return from_clause() && accept_punct(")") && alias();
    }
    if (!name()) return false;
    if (accept_punct(".") && !name()) return false;
    if (peek_punct("(")) {  // table-valued function
      if (!balanced_parens()) return false;
    }
    if (!alias()) return false;
    if (accept_kw("INDEXED")) return accept_kw("BY") && name();
    if (peek_kw("NOT") && peek_kw("INDEXED", 1)) pos_ += 2;
    return true;
  }

  bool ordering_term() {
    if (!expr()) return false;
    if (!accept_kw("ASC")) accept_kw("DESC");
    if (accept_kw("NULLS")) {
      if (!accept_kw("FIRST") && !accept_kw("LAST")) return false;
    }
    return true;
  }

  bool expr_list() {
    do {
      if (!expr()) return false;
    } while (accept_punct(","));
    return true;
  }

  bool balanced_parens() {
    if (!accept_punct("(")) return false;
    int depth = 1;
    while (!at_end() && depth > 0) {
      if (peek_punct("(")) ++depth;
      if (peek_punct(")")) --depth;
      ++pos_;
    }
    return depth == 0;
  }

  bool binary_operator(bool allow_logical) {
    static constexpr std::array<std::string_view, 20> kOps = {"||", "*",  "/",  "%",  "+",  "-", "<<",
                                                              ">>", "&",  "|",  "<",  "<=", ">", ">=",
                                                              "=",  "==", "!=", "<>", "->", "->>"};
    if (!at_end() && t_[pos_].kind == TokenKind::kPunct &&
        std::find(kOps.begin(), kOps.end(), t_[pos_].text) != kOps.end()) {
      ++pos_;
      return true;
    }
    if (allow_logical && (accept_kw("AND") || accept_kw("OR"))) return true;
    return false;
  }

  // Postfix predicates: [NOT] IN/BETWEEN/LIKE..., IS [NOT], ISNULL, COLLATE.
  bool postfix(bool allow_logical, bool& consumed) {
    consumed = true;
    std::size_t save = pos_;
    bool negated = accept_kw("NOT");
    if (accept_kw("IN")) {
      if (accept_punct("(")) {
        if (accept_punct(")")) return true;
        std::size_t inner = pos_;
        if (statement() && accept_punct(")")) return true;
        pos_ = inner;
        return expr_list() && accept_punct(")");
      }
      if (!name()) return false;
      if (accept_punct(".")) return name();
      return true;
    }
    if (accept_kw("BETWEEN")) {
      return expr(false) && accept_kw("AND") && expr(false);
    }
    if (accept_kw("LIKE") || accept_kw("GLOB") || accept_kw("REGEXP") || accept_kw("MATCH")) {
      if (!unary()) return false;
      if (accept_kw("ESCAPE")) return unary();
      return true;
    }
    if (negated && accept_kw("NULL")) return true;
    pos_ = save;
    if (accept_kw("IS")) {
      accept_kw("NOT");
      if (accept_kw("DISTINCT") && !accept_kw("FROM")) return false;
      return unary();
    }
    if (accept_kw("ISNULL") || accept_kw("NOTNULL")) return true;
    if (accept_kw("COLLATE")) return name();
    (void)allow_logical;
    consumed = false;
    return true;
  }

  bool expr(bool allow_logical = true) {
    if (!unary()) return false;
    while (true) {
      bool consumed = false;
      if (!postfix(allow_logical, consumed)) return false;
      if (consumed) continue;
      if (binary_operator(allow_logical)) {
        if (!unary()) return false;
        continue;
      }
      return true;
    }
  }

  bool unary() {
    if (accept_punct("-") || accept_punct("+") || accept_punct("~")) return unary();
    if (peek_kw("NOT") && !peek_kw("EXISTS", 1)) {
      ++pos_;
      return unary();
    }
    return primary();
  }

  bool primary() {
    if (at_end()) return false;
    const Token& tok = t_[pos_];
    if (tok.kind == TokenKind::kNumber || tok.kind == TokenKind::kString) {
      ++pos_;
      return true;
    }
    if (accept_punct("?")) return true;
    if (accept_kw("NULL")) return true;
    if (accept_punct("(")) {
      std::size_t save = pos_;
      if (statement() && accept_punct(")")) return true;
      pos_ = save;
      return expr_list() && accept_punct(")");
    }
    if (peek_kw("NOT") && peek_kw("EXISTS", 1)) {
      pos_ += 2;
      return accept_punct("(") && statement() && accept_punct(")");
    }
    if (accept_kw("EXISTS")) {
      return accept_punct("(") && statement() && accept_punct(")");
    }
    if (accept_kw("CASE")) {
      if (!peek_kw("WHEN") && !expr()) return false;
      if (!peek_kw("WHEN")) return false;
      while (accept_kw("WHEN")) {
        if (!expr() || !accept_kw("THEN") || !expr()) return false;
      }
      if (accept_kw("ELSE") && !expr()) return false;
      return accept_kw("END");
    }
    if (accept_kw("CAST")) {
      if (!accept_punct("(") || !expr() || !accept_kw("AS")) return false;
      if (!name()) return false;
      while (name()) {
      }
      if (peek_punct("(") && !balanced_parens()) return false;
      return accept_punct(")");
    }
    // Function call: any word directly followed by "(".
    if (tok.kind == TokenKind::kWord && peek_punct("(", 1) && !is_reserved(tok.text)) {
      pos_ += 2;
      if (!accept_punct(")")) {
        accept_kw("DISTINCT");
        if (!accept_punct("*") && !expr_list()) return false;
        if (!accept_punct(")")) return false;
      }
      if (accept_kw("FILTER")) {
        if (!accept_punct("(") || !accept_kw("WHERE") || !expr() || !accept_punct(")")) return false;
      }
      if (accept_kw("OVER")) {
        if (peek_punct("(")) return balanced_parens();
        return name();
      }
      return true;
    }
    if (!name()) return false;
    for (int parts = 0; parts < 2 && peek_punct("."); ++parts) {
      ++pos_;
      if (!name()) return false;
    }
    return true;
  }

  const std::vector<Token>& t_;
  std::size_t pos_ = 0;
};

bool is_statement_keyword(std::string_view word) {
  return iequals(word, "SELECT") || iequals(word, "WITH") || iequals(word, "VALUES");
}

// Statements the executor refuses. Spotting them keeps a write from being cut
// down to a readable tail such as the VALUES clause of an INSERT.
bool is_write_keyword(std::string_view word) {
  constexpr std::array<std::string_view, 12> kWrites = {"INSERT", "UPDATE", "DELETE", "REPLACE", "CREATE", "DROP",
                                                        "ALTER",  "PRAGMA", "ATTACH", "DETACH",  "VACUUM", "REINDEX"};
  return std::any_of(kWrites.begin(), kWrites.end(), [&](std::string_view kw) { return iequals(kw, word); });
}

bool is_upper_word(std::string_view word) {
  return std::none_of(word.begin(), word.end(), [](char ch) { return std::islower(static_cast<unsigned char>(ch)); });
}

// A keyword is at a statement position when only spaces separate it from the
// start of its line, or it follows a colon.
bool at_statement_position(std::string_view text, std::size_t at) {
  std::size_t i = at;
  while (i > 0 && (text[i - 1] == ' ' || text[i - 1] == '\t')) {
    --i;
  }
  return i == 0 || text[i - 1] == '\n' || text[i - 1] == '\r' || text[i - 1] == ':' || text[i - 1] == '`';
}

std::optional<std::size_t> find_statement_start(std::string_view text) {
  struct Candidate {
    std::size_t offset;
    bool upper;
    bool positioned;
  };
  std::vector<Candidate> candidates;
  std::optional<std::size_t> first_write;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_start(static_cast<unsigned char>(text[i])) ||
        (i > 0 && is_word_char(static_cast<unsigned char>(text[i - 1])))) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && is_word_char(static_cast<unsigned char>(text[end]))) ++end;
    std::string_view word = text.substr(i, end - i);
    if (is_statement_keyword(word)) {
      candidates.push_back({i, is_upper_word(word), at_statement_position(text, i)});
    } else if (!first_write && is_write_keyword(word) && is_upper_word(word) && at_statement_position(text, i) &&
               !trim(text.substr(end)).starts_with(':')) {
      first_write = i;
    }
    i = end;
  }
  auto read_start = [&]() -> std::optional<std::size_t> {
    for (const auto& c : candidates) {
      if (c.upper && c.positioned) return c.offset;
    }
    for (const auto& c : candidates) {
      if (c.positioned) return c.offset;
    }
    for (const auto& c : candidates) {
      if (c.upper) return c.offset;
    }
    return std::nullopt;
  }();
  if (first_write && (!read_start || *first_write < *read_start)) return first_write;
  return read_start;
}

// Returns the body of the first fenced block that contains a statement keyword,
// or the whole text when there are no fences.
std::string_view unfence(std::string_view text, std::vector<std::string>* notes) {
  std::size_t search = 0;
  while (true) {
    std::size_t open = text.find("```", search);
    if (open == std::string_view::npos) break;
    std::size_t body_start = open + 3;
    while (body_start < text.size() && std::isalnum(static_cast<unsigned char>(text[body_start]))) ++body_start;
    std::size_t close = text.find("```", body_start);
    std::string_view body =
        text.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
    if (find_statement_start(body)) {
      if (notes) notes->push_back("removed code fences");
      return body;
    }
    if (close == std::string_view::npos) break;
    search = close + 3;
  }
  return text;
}

constexpr std::array<std::string_view, 24> kContinuationWords = {
    "SELECT", "FROM",  "WHERE",  "GROUP",     "ORDER",  "HAVING",  "LIMIT", "OFFSET",
    "JOIN",   "INNER", "LEFT",   "RIGHT",     "CROSS",  "NATURAL", "ON",    "USING",
    "AND",    "OR",    "UNION",  "INTERSECT", "EXCEPT", "WHEN",    "ELSE",  "END"};

// Trailing lines only count as prose when they open with an ordinary word.
bool looks_like_prose(std::string_view line, std::string_view previous) {
  std::string_view body = trim(line);
  if (body.empty()) return true;
  std::string_view prev = trim(previous);
  if (!prev.empty() && (prev.back() == ',' || prev.back() == '(' || prev.back() == '=')) return false;
  if (!std::isalpha(static_cast<unsigned char>(body[0]))) return false;
  std::size_t end = 0;
  while (end < body.size() && is_word_char(static_cast<unsigned char>(body[end]))) ++end;
  std::string_view word = body.substr(0, end);
  return std::none_of(kContinuationWords.begin(), kContinuationWords.end(),
                      [&](std::string_view kw) { return iequals(kw, word); });
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t count) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i > 0) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

std::string strip_trailing_semicolons(std::string_view text) {
  text = trim(text);
  while (!text.empty() && text.back() == ';') {
    text.remove_suffix(1);
    text = trim(text);
  }
  return std::string(text);
}

}  // namespace

LexResult lex_sql(std::string_view sql) {
  LexResult result;
  Lexer lexer(sql);
  Token tok{};
  while (lexer.next(tok)) {
    result.tokens.push_back(tok);
  }
  result.error_offset = lexer.error();
  return result;
}

bool is_complete_sql_statement(std::string_view text) {
  LexResult lexed = lex_sql(text);
  if (lexed.error_offset || lexed.tokens.empty()) {
    return false;
  }
  Recognizer recognizer(lexed.tokens);
  return recognizer.complete_statement();
}

SqlQuery sanitize(std::string_view raw, std::vector<std::string>* notes) {
  std::string_view text = unfence(raw, notes);
  auto start = find_statement_start(text);
  if (!start) {
    throw SanitizeError("no SQL statement found in response");
  }
  if (notes && !trim(text.substr(0, *start)).empty()) {
    notes->push_back("removed leading prose");
  }
  std::string_view rest = text.substr(*start);
  // A stray fence with no opening partner still ends the statement.
  if (std::size_t fence = rest.find("```"); fence != std::string_view::npos) {
    if (notes) notes->push_back("removed stray code fence");
    rest = rest.substr(0, fence);
  }

  // The statement region ends at the first semicolon or blank line.
  Lexer lexer(rest);
  Token tok{};
  std::size_t region_end = rest.size();
  std::size_t previous_end = 0;
  bool first = true;
  while (lexer.next(tok)) {
    if (!first) {
      std::string_view gap = rest.substr(previous_end, tok.offset - previous_end);
      std::size_t nl = gap.find('\n');
      if (nl != std::string_view::npos && gap.find('\n', nl + 1) != std::string_view::npos &&
          trim(gap).empty()) {
        region_end = previous_end;
        break;
      }
    }
    first = false;
    if (tok.kind == TokenKind::kPunct && tok.text == ";") {
      region_end = tok.offset;
      break;
    }
    previous_end = tok.offset + tok.text.size();
  }
  if (notes && !trim(rest.substr(std::min(region_end, rest.size()))).empty()) {
    std::string_view dropped = trim(rest.substr(region_end));
    if (!dropped.empty() && dropped.front() == ';') dropped = trim(dropped.substr(1));
    if (!dropped.empty()) notes->push_back("dropped trailing text: " + std::string(dropped.substr(0, 80)));
  }
  std::string region(trim(rest.substr(0, region_end)));

  // Drop trailing prose lines when the remaining prefix is a complete statement.
  std::vector<std::string> lines = split_lines(region);
  if (lines.size() > 1 && !is_complete_sql_statement(region)) {
    for (std::size_t keep = lines.size() - 1; keep >= 1; --keep) {
      if (!looks_like_prose(lines[keep], lines[keep - 1])) break;
      std::string candidate = join_lines(lines, keep);
      if (is_complete_sql_statement(candidate)) {
        if (notes) notes->push_back("dropped trailing prose lines");
        region = candidate;
        break;
      }
    }
  }

  std::string cleaned = strip_trailing_semicolons(region);
  if (cleaned.empty()) {
    throw SanitizeError("no SQL statement found in response");
  }
  return SqlQuery(std::move(cleaned));
}

bool has_top_level_order_by(std::string_view sql) {
  LexResult lexed = lex_sql(sql);
  if (lexed.error_offset) {
    return false;
  }
  int depth = 0;
  bool found = false;
  const auto& tokens = lexed.tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& tok = tokens[i];
    if (tok.kind == TokenKind::kPunct) {
      if (tok.text == "(") ++depth;
      if (tok.text == ")" && --depth < 0) return false;
      continue;
    }
    if (depth == 0 && tok.kind == TokenKind::kWord && iequals(tok.text, "ORDER") && i + 1 < tokens.size() &&
        tokens[i + 1].kind == TokenKind::kWord && iequals(tokens[i + 1].text, "BY")) {
      found = true;
    }
  }
  return depth == 0 && found;
}

bool same_sql_tokens(std::string_view lhs, std::string_view rhs) {
  LexResult a = lex_sql(lhs);
  LexResult b = lex_sql(rhs);
  if (a.error_offset || b.error_offset) {
    return collapse_whitespace(lhs) == collapse_whitespace(rhs);
  }
  return std::equal(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(),
                    [](const Token& x, const Token& y) {
                      if (x.kind != y.kind) {
                        return false;
                      }
                      // Keywords and bare identifiers are case-insensitive in SQLite.
                      return x.kind == TokenKind::kWord ? iequals(x.text, y.text) : x.text == y.text;
                    });
}

}  // namespace nl2sql
