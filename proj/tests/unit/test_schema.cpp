#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>
#include <set>

#include "nl2sql/errors.hpp"
#include "nl2sql/schema.hpp"
#include "nl2sql/strings.hpp"
#include "test_support.hpp"

namespace nl2sql {
namespace {

using testing::TempDir;

const DatabaseSchema& find_db(const std::vector<DatabaseSchema>& all, std::string_view id) {
  for (const auto& db : all) {
    if (db.db_id == id) {
      return db;
    }
  }
  throw std::runtime_error("missing db " + std::string(id));
}

const std::vector<DatabaseSchema>& fixture_tables() {
  static const std::vector<DatabaseSchema> tables = load_tables_json(testing::fixture_path("tables.json"));
  return tables;
}

std::string one_db_json(std::string_view body) { return "[{\"db_id\": \"d\", " + std::string(body) + "}]"; }

TEST(TablesJson, ConcertSingerEntryFieldByField) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  ASSERT_EQ(db.tables.size(), 4u);
  EXPECT_EQ(db.tables[0].name, "stadium");
  EXPECT_EQ(db.tables[3].name, "singer_in_concert");

  const TableDef& stadium = db.tables[0];
  std::vector<std::string> names;
  for (const auto& c : stadium.columns) {
    names.push_back(c.name);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"Stadium_ID", "Location", "Name", "Capacity", "Highest", "Lowest",
                                             "Average"}));
  EXPECT_EQ(stadium.primary_keys, std::vector<std::string>{"Stadium_ID"});
  EXPECT_EQ(stadium.columns[1].type, ColumnType::kText);
  EXPECT_EQ(stadium.columns[4].type, ColumnType::kNumber);

  const TableDef& singer = db.tables[1];
  ASSERT_EQ(singer.columns.size(), 7u);
  EXPECT_EQ(singer.columns[6].name, "Is_male");
  EXPECT_EQ(singer.columns[6].type, ColumnType::kOthers);

  // concert column 18 -> stadium column 1, singer_in_concert 21 -> singer 8,
  // singer_in_concert 20 -> concert 15.
  ASSERT_EQ(db.foreign_keys.size(), 3u);
  EXPECT_EQ(db.foreign_keys[0], (ForeignKey{{"concert", "Stadium_ID"}, {"stadium", "Stadium_ID"}}));
  EXPECT_EQ(db.foreign_keys[1], (ForeignKey{{"singer_in_concert", "Singer_ID"}, {"singer", "Singer_ID"}}));
  EXPECT_EQ(db.foreign_keys[2], (ForeignKey{{"singer_in_concert", "concert_ID"}, {"concert", "concert_ID"}}));
  EXPECT_EQ(db.tables[3].primary_keys, std::vector<std::string>{"concert_ID"});
}

TEST(TablesJson, CompositeKeysAsNestedArrays) {
  const DatabaseSchema& db = find_db(fixture_tables(), "festival");
  ASSERT_EQ(db.tables.size(), 8u);
  EXPECT_EQ(db.tables[3].primary_keys, (std::vector<std::string>{"concert_ID", "Singer_ID"}));
  EXPECT_EQ(db.foreign_keys.size(), 7u);
}

TEST(TablesJson, EmptyTableListIsRejected) {
  std::string text = one_db_json(
      "\"table_names_original\": [], \"column_names_original\": [[-1, \"*\"]], \"column_types\": [\"text\"], "
      "\"primary_keys\": [], \"foreign_keys\": []");
  EXPECT_THROW(parse_tables_json(text), ValidationError);
}

TEST(TablesJson, ForeignKeyIndexOutOfRangeNamesTheDatabase) {
  std::string text = one_db_json(
      "\"table_names_original\": [\"t\"], \"column_names_original\": [[-1, \"*\"], [0, \"a\"]], "
      "\"column_types\": [\"text\", \"number\"], \"primary_keys\": [1], \"foreign_keys\": [[1, 9]]");
  try {
    parse_tables_json(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("database d"), std::string::npos) << e.what();
  }
}

TEST(TablesJson, MalformedEntryCarriesItsIndex) {
  std::string good = one_db_json(
      "\"table_names_original\": [\"t\"], \"column_names_original\": [[-1, \"*\"], [0, \"a\"]], "
      "\"column_types\": [\"text\", \"number\"], \"primary_keys\": [], \"foreign_keys\": []");
  std::string text = good.substr(0, good.size() - 1) + ", {\"db_id\": 5}]";
  try {
    parse_tables_json(text);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.entry_index(), std::optional<std::size_t>(1));
  }
}

TEST(TablesJson, DuplicateColumnsDifferingOnlyInCaseAreRejected) {
  std::string text = one_db_json(
      "\"table_names_original\": [\"t\"], \"column_names_original\": [[-1, \"*\"], [0, \"Name\"], [0, \"name\"]], "
      "\"column_types\": [\"text\", \"text\", \"text\"], \"primary_keys\": [], \"foreign_keys\": []");
  EXPECT_THROW(parse_tables_json(text), ValidationError);
}

TEST(TablesJson, MissingFileIsAnIoProblem) {
  EXPECT_THROW(load_tables_json("/nonexistent/tables.json"), Error);
}

TEST(Introspect, SingleTableFixture) {
  TempDir dir;
  auto file = dir / "t.sqlite";
  testing::build_db_from_script("CREATE TABLE t(a INTEGER PRIMARY KEY, b TEXT);", file);
  DatabaseSchema db = introspect_database(file);
  ASSERT_EQ(db.tables.size(), 1u);
  EXPECT_EQ(db.tables[0].name, "t");
  ASSERT_EQ(db.tables[0].columns.size(), 2u);
  EXPECT_EQ(db.tables[0].columns[0], (Column{"a", ColumnType::kNumber}));
  EXPECT_EQ(db.tables[0].columns[1], (Column{"b", ColumnType::kText}));
  EXPECT_EQ(db.tables[0].primary_keys, std::vector<std::string>{"a"});
  EXPECT_EQ(db.db_id, "t");
}

TEST(Introspect, DeclaredForeignKey) {
  TempDir dir;
  auto file = dir / "fk.sqlite";
  testing::build_db_from_script(
      "CREATE TABLE parent(id INTEGER PRIMARY KEY, label TEXT);"
      "CREATE TABLE child(id INTEGER PRIMARY KEY, parent_id INTEGER REFERENCES parent(id));",
      file);
  DatabaseSchema db = introspect_database(file);
  ASSERT_EQ(db.foreign_keys.size(), 1u);
  EXPECT_EQ(db.foreign_keys[0], (ForeignKey{{"child", "parent_id"}, {"parent", "id"}}));
}

TEST(Introspect, EmptyDatabaseHasNoTables) {
  TempDir dir;
  auto file = dir / "empty.sqlite";
  testing::build_db_from_script("", file);
  DatabaseSchema db = introspect_database(file);
  EXPECT_TRUE(db.tables.empty());
}

TEST(Introspect, CorruptFileIsAnOpenError) {
  TempDir dir;
  auto file = dir / "junk.sqlite";
  testing::write_text(file, std::string(4096, 'x'));
  EXPECT_THROW(introspect_database(file), OpenError);
  EXPECT_THROW(introspect_database(dir / "missing.sqlite"), OpenError);
}

// The festival entry in tables.json was written by hand from festival.sql, so
// it is an independent reading of the same DDL.
TEST(Introspect, MatchesHandWrittenCatalogOfFestival) {
  TempDir dir;
  auto file = testing::build_festival_db(dir.path());
  DatabaseSchema live = introspect_database(file);
  const DatabaseSchema& expected = find_db(fixture_tables(), "festival");
  EXPECT_EQ(live.db_id, "festival");
  EXPECT_EQ(live.tables, expected.tables);
  auto sorted = [](std::vector<ForeignKey> keys) {
    std::sort(keys.begin(), keys.end(), [](const ForeignKey& a, const ForeignKey& b) {
      return std::tie(a.source.table, a.source.column) < std::tie(b.source.table, b.source.column);
    });
    return keys;
  };
  EXPECT_EQ(sorted(live.foreign_keys), sorted(expected.foreign_keys));
}

TEST(Introspect, DoesNotModifyTheFile) {
  TempDir dir;
  auto file = testing::build_festival_db(dir.path());
  std::string before = testing::file_digest(file);
  introspect_database(file);
  EXPECT_EQ(testing::file_digest(file), before);
}

TEST(Render, SingleTableBlock) {
  DatabaseSchema db{"d", {TableDef{"t", {{"a", ColumnType::kNumber}, {"b", ColumnType::kText}}, {"a"}}}, {}};
  EXPECT_EQ(render_schema_text(db), "CREATE TABLE t (\n  a number PRIMARY KEY,\n  b text\n);\n");
}

TEST(Render, LinkKeepingTwoOfFiveTables) {
  const DatabaseSchema& db = find_db(fixture_tables(), "festival");
  LinkedSchema link{"festival",
                    {{"concert", {"concert_ID", "Stadium_ID"}}, {"stadium", {"Stadium_ID", "Name"}}},
                    {ForeignKey{{"concert", "Stadium_ID"}, {"stadium", "Stadium_ID"}}},
                    ""};
  std::string text = render_schema_text(db, link);
  std::regex block("CREATE TABLE");
  EXPECT_EQ(std::distance(std::sregex_iterator(text.begin(), text.end(), block), std::sregex_iterator()), 2);
  EXPECT_NE(text.find("-- FOREIGN KEY -> stadium.Stadium_ID"), std::string::npos);
  EXPECT_EQ(text.find("singer"), std::string::npos);
  EXPECT_EQ(render_schema_text(db, link), text);
}

std::map<std::string, std::set<std::string>> names_from_rendering(const std::string& text) {
  std::map<std::string, std::set<std::string>> out;
  std::regex table_line(R"(^CREATE TABLE (\S+) \($)");
  std::regex column_line(R"(^  (\S+) (text|number|time|boolean|others))");
  std::string current;
  for (const auto& line : split_lines(text)) {
    std::smatch m;
    if (std::regex_search(line, m, table_line)) {
      current = m[1];
      out[current];
    } else if (std::regex_search(line, m, column_line)) {
      out[current].insert(m[1]);
    }
  }
  return out;
}

TEST(Render, RoundTripRecoversNames) {
  for (const auto& db : fixture_tables()) {
    std::map<std::string, std::set<std::string>> expected;
    for (const auto& t : db.tables) {
      for (const auto& c : t.columns) {
        expected[t.name].insert(c.name);
      }
    }
    EXPECT_EQ(names_from_rendering(render_schema_text(db)), expected) << db.db_id;
  }
}

TEST(LinkValidation, UnknownColumnIsTheOnlyViolation) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  LinkedSchema link{"concert_singer", {{"singer", {"Name", "agee"}}}, {}, ""};
  LinkCheck check = validate_linked_schema(db, link);
  ASSERT_EQ(check.errors.size(), 1u);
  EXPECT_EQ(check.errors[0].kind, LinkIssueKind::kUnknownColumn);
  EXPECT_EQ(check.errors[0].entity, "singer.agee");
}

TEST(LinkValidation, FullLinkIsValid) {
  for (const auto& db : fixture_tables()) {
    LinkCheck check = validate_linked_schema(db, full_link(db), EdgePolicy::kError);
    EXPECT_TRUE(check.ok());
    EXPECT_TRUE(check.warnings.empty());
  }
}

TEST(LinkValidation, UndeclaredJoinEdgeIsAWarningByDefault) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  LinkedSchema link{"concert_singer",
                    {{"singer", {"Singer_ID", "Name"}}, {"stadium", {"Stadium_ID"}}},
                    {ForeignKey{{"singer", "Singer_ID"}, {"stadium", "Stadium_ID"}}},
                    ""};
  LinkCheck lenient = validate_linked_schema(db, link);
  EXPECT_TRUE(lenient.ok());
  ASSERT_EQ(lenient.warnings.size(), 1u);
  EXPECT_EQ(lenient.warnings[0].kind, LinkIssueKind::kNonForeignKeyEdge);

  LinkCheck strict = validate_linked_schema(db, link, EdgePolicy::kError);
  ASSERT_EQ(strict.errors.size(), 1u);
  EXPECT_EQ(strict.errors[0].kind, LinkIssueKind::kNonForeignKeyEdge);
}

TEST(LinkValidation, ReportsEveryViolation) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  LinkedSchema link{"concert_singer",
                    {{"singers", {"Name"}}, {"singer", {"agee", "Name"}}, {"concert", {"Theme", "Yr"}}},
                    {},
                    ""};
  LinkCheck check = validate_linked_schema(db, link);
  EXPECT_EQ(check.errors.size(), 3u);
  EXPECT_FALSE(validate_linked_schema(db, LinkedSchema{"concert_singer", {}, {}, ""}).ok());
}

TEST(LinkValidation, MatchingIsCaseInsensitive) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  LinkedSchema link{"concert_singer", {{"SINGER", {"name", "AGE"}}}, {}, ""};
  EXPECT_TRUE(validate_linked_schema(db, link).ok());
  LinkedSchema repaired = repair_link(db, link);
  ASSERT_EQ(repaired.kept.size(), 1u);
  EXPECT_EQ(repaired.kept[0].first, "singer");
  EXPECT_EQ(repaired.kept[0].second, (std::vector<std::string>{"Name", "Age"}));
}

TEST(LinkValidation, RepairDropsUnknownsAndFallsBackToFullSchema) {
  const DatabaseSchema& db = find_db(fixture_tables(), "concert_singer");
  LinkedSchema link{"concert_singer", {{"singer", {"Name", "agee"}}, {"nope", {"x"}}}, {}, ""};
  LinkedSchema repaired = repair_link(db, link);
  EXPECT_TRUE(validate_linked_schema(db, repaired).ok());
  ASSERT_EQ(repaired.kept.size(), 1u);
  EXPECT_EQ(repaired.kept[0].second, std::vector<std::string>{"Name"});

  LinkedSchema hopeless{"concert_singer", {{"nope", {"x"}}}, {}, ""};
  EXPECT_EQ(repair_link(db, hopeless).kept, full_link(db).kept);
}

// Property: any crop that keeps at least one column per kept table validates.
TEST(LinkValidation, RandomCropsOfValidSchemasValidate) {
  std::mt19937 rng(20260101);
  for (const auto& db : fixture_tables()) {
    for (int trial = 0; trial < 300; ++trial) {
      LinkedSchema crop;
      crop.db_id = db.db_id;
      for (const auto& table : db.tables) {
        if (rng() % 2 == 0 && !(crop.kept.empty() && &table == &db.tables.back())) {
          continue;
        }
        std::vector<std::string> columns;
        for (const auto& c : table.columns) {
          if (rng() % 3 != 0) {
            columns.push_back(c.name);
          }
        }
        if (columns.empty()) {
          columns.push_back(table.columns[rng() % table.columns.size()].name);
        }
        crop.kept.emplace_back(table.name, std::move(columns));
      }
      auto kept = [&](const ColumnRef& ref) {
        for (const auto& [t, cols] : crop.kept) {
          if (t == ref.table && std::find(cols.begin(), cols.end(), ref.column) != cols.end()) {
            return true;
          }
        }
        return false;
      };
      for (const auto& fk : db.foreign_keys) {
        if (kept(fk.source) && kept(fk.target)) {
          crop.join_edges.push_back(fk);
        }
      }
      LinkCheck check = validate_linked_schema(db, crop, EdgePolicy::kError);
      ASSERT_TRUE(check.ok()) << db.db_id << " trial " << trial << ": " << check.errors[0].describe();
    }
  }
}

}  // namespace
}  // namespace nl2sql
