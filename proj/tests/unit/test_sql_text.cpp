#include <gtest/gtest.h>

#include <json.hpp>
#include <random>

#include "nl2sql/errors.hpp"
#include "nl2sql/sql_text.hpp"
#include "test_support.hpp"

namespace nl2sql {
namespace {

struct CorpusEntry {
  std::string id;
  std::string raw;
  std::optional<std::string> expected;
};

const std::vector<CorpusEntry>& corpus() {
  static const std::vector<CorpusEntry> entries = [] {
    std::vector<CorpusEntry> out;
    for (const auto& item : nlohmann::json::parse(testing::read_fixture("sanitizer_corpus.json"))) {
      CorpusEntry entry{item.at("id"), item.at("raw"), std::nullopt};
      if (item.contains("expected")) {
        entry.expected = item.at("expected").get<std::string>();
      }
      out.push_back(std::move(entry));
    }
    return out;
  }();
  return entries;
}

TEST(SanitizeCorpus, HasEnoughCoverage) {
  EXPECT_GE(corpus().size(), 20u);
  std::size_t errors = 0;
  for (const auto& entry : corpus()) {
    errors += entry.expected ? 0 : 1;
  }
  EXPECT_GE(errors, 4u);
}

TEST(SanitizeCorpus, ExactExpectedOutput) {
  for (const auto& entry : corpus()) {
    if (entry.expected) {
      try {
        EXPECT_EQ(sanitize(entry.raw).text(), *entry.expected) << entry.id;
      } catch (const SanitizeError& e) {
        ADD_FAILURE() << entry.id << " raised " << e.what();
      }
    } else {
      EXPECT_THROW(sanitize(entry.raw), SanitizeError) << entry.id;
    }
  }
}

TEST(SanitizeCorpus, Idempotent) {
  for (const auto& entry : corpus()) {
    if (entry.expected) {
      std::string once = sanitize(entry.raw).text();
      EXPECT_EQ(sanitize(once).text(), once) << entry.id;
    }
  }
}

TEST(Sanitize, OutputInvariants) {
  for (const auto& entry : corpus()) {
    if (!entry.expected) {
      continue;
    }
    std::string text = sanitize(entry.raw).text();
    EXPECT_FALSE(text.empty());
    EXPECT_EQ(text.find("```"), std::string::npos) << entry.id;
    EXPECT_NE(text.back(), ';') << entry.id;
    EXPECT_FALSE(std::isspace(static_cast<unsigned char>(text.back()))) << entry.id;
  }
}

TEST(Sanitize, NotesDescribeWhatWasDropped) {
  std::vector<std::string> notes;
  sanitize("Sure:\n```sql\nSELECT a FROM t; SELECT b FROM t;\n```", &notes);
  ASSERT_GE(notes.size(), 2u);
  bool fences = false;
  bool trailing = false;
  for (const auto& note : notes) {
    fences = fences || note.find("fence") != std::string::npos;
    trailing = trailing || note.find("SELECT b FROM t") != std::string::npos;
  }
  EXPECT_TRUE(fences);
  EXPECT_TRUE(trailing);
}

// Property: wrapping a clean statement in fences, prose and semicolons never
// changes what sanitize returns, and sanitize is idempotent on the result.
TEST(Sanitize, WrappersDoNotChangeTheStatement) {
  const std::vector<std::string> statements = {
      "SELECT count(*) FROM singer",
      "SELECT Name, Age FROM singer WHERE Country = 'France' ORDER BY Age",
      "WITH t AS (SELECT 1 AS x) SELECT x FROM t",
      "SELECT T1.Name FROM stadium AS T1 JOIN concert AS T2 ON T1.Stadium_ID = T2.Stadium_ID GROUP BY T1.Name",
      "SELECT Name FROM singer WHERE Name LIKE '%;%'",
  };
  const std::vector<std::string> prefixes = {"", "Here is the query:\n", "SQL: ", "```sql\n", "Answer:\n```\n"};
  const std::vector<std::string> suffixes = {"", ";", " ;;", ";\n\nThis answers the question.", "\n```",
                                             ";\n```\nDone."};
  std::mt19937 rng(7);
  for (const auto& statement : statements) {
    for (int trial = 0; trial < 40; ++trial) {
      const std::string& prefix = prefixes[rng() % prefixes.size()];
      std::string suffix = suffixes[rng() % suffixes.size()];
      if (prefix.find("```") != std::string::npos && suffix.find("```") == std::string::npos) {
        suffix += "\n```";
      }
      std::string raw = prefix + statement + suffix;
      SqlQuery query = sanitize(raw);
      EXPECT_EQ(query.text(), statement) << raw;
      EXPECT_EQ(sanitize(query.text()), query);
    }
  }
}

TEST(OrderBy, TopLevelOnly) {
  EXPECT_TRUE(has_top_level_order_by("SELECT a FROM t ORDER BY a"));
  EXPECT_FALSE(has_top_level_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a) LIMIT 3"));
  EXPECT_FALSE(has_top_level_order_by("SELECT a FROM t"));
  EXPECT_TRUE(has_top_level_order_by("select a from t order   by a desc limit 1"));
  EXPECT_TRUE(has_top_level_order_by("SELECT a FROM t UNION SELECT b FROM u ORDER BY 1"));
  EXPECT_FALSE(has_top_level_order_by("SELECT a FROM t WHERE b = 'ORDER BY'"));
  EXPECT_FALSE(has_top_level_order_by("SELECT \"order by\" FROM t"));
  EXPECT_FALSE(has_top_level_order_by("SELECT a FROM t WHERE a IN (SELECT a FROM u ORDER BY a LIMIT 2)"));
  EXPECT_FALSE(has_top_level_order_by("SELECT a FROM t -- ORDER BY a"));
  EXPECT_FALSE(has_top_level_order_by("SELECT 'unterminated ORDER BY"));
}

TEST(CompleteStatement, PermissiveGrammar) {
  EXPECT_TRUE(is_complete_sql_statement("SELECT name FROM singer"));
  EXPECT_TRUE(is_complete_sql_statement("SELECT name FROM singer;"));
  EXPECT_TRUE(is_complete_sql_statement("select count(*) from singer where age > 30"));
  EXPECT_TRUE(is_complete_sql_statement("WITH t AS (SELECT 1) SELECT * FROM t"));
  EXPECT_TRUE(is_complete_sql_statement("SELECT 1"));
  EXPECT_FALSE(is_complete_sql_statement("Select the singers older than 30"));
  EXPECT_FALSE(is_complete_sql_statement("Join singer to concert on Singer_ID"));
  EXPECT_FALSE(is_complete_sql_statement("SELECT name FROM"));
  EXPECT_FALSE(is_complete_sql_statement("SELECT name FROM singer WHERE"));
  EXPECT_FALSE(is_complete_sql_statement("SELECT (name FROM singer"));
  EXPECT_FALSE(is_complete_sql_statement("SELECT a FROM t; SELECT b FROM t"));
  EXPECT_FALSE(is_complete_sql_statement("Count the rows of the singer table."));
  EXPECT_FALSE(is_complete_sql_statement(""));
}

TEST(SameTokens, WhitespaceInsensitiveLiteralSensitive) {
  EXPECT_TRUE(same_sql_tokens("SELECT a FROM t", "SELECT  a\n FROM\tt"));
  EXPECT_TRUE(same_sql_tokens("SELECT a FROM t WHERE x=1", "SELECT a FROM t WHERE x = 1"));
  EXPECT_FALSE(same_sql_tokens("SELECT a FROM t WHERE b = 'x y'", "SELECT a FROM t WHERE b = 'x  y'"));
  EXPECT_FALSE(same_sql_tokens("SELECT a FROM t", "SELECT b FROM t"));
  EXPECT_TRUE(same_sql_tokens("select Name from SINGER", "SELECT name FROM singer"));
  EXPECT_FALSE(same_sql_tokens("SELECT a FROM t WHERE b = 'X'", "SELECT a FROM t WHERE b = 'x'"));
}

TEST(Lexer, StringsCommentsAndErrors) {
  LexResult lexed = lex_sql("SELECT 'it''s' /* c */ FROM \"t x\" -- tail");
  ASSERT_FALSE(lexed.error_offset);
  ASSERT_EQ(lexed.tokens.size(), 4u);
  EXPECT_EQ(lexed.tokens[1].kind, TokenKind::kString);
  EXPECT_EQ(lexed.tokens[1].text, "'it''s'");
  EXPECT_EQ(lexed.tokens[3].kind, TokenKind::kQuotedIdentifier);
  EXPECT_TRUE(lex_sql("SELECT 'open").error_offset.has_value());
  EXPECT_TRUE(lex_sql("SELECT /* open").error_offset.has_value());
}

}  // namespace
}  // namespace nl2sql
