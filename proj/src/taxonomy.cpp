#include "nl2sql/taxonomy.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include "nl2sql/errors.hpp"

namespace nl2sql {
namespace {

// Codes are stable identifiers; titles and hints may be reworded freely.
// Slots beyond the failure modes named for each category (alias scoping,
// wrong join condition, wrong operator, wrong aggregate, casing mismatch,
// scalar subquery cardinality, sort direction, DISTINCT omission, select-list
// shape) are common NL2SQL failure modes chosen to complete the categories.
Taxonomy build_default() {
  std::vector<ErrorCategory> categories = {
      {"SYN", "Syntax errors"},
      {"SCH", "Schema linking errors"},
      {"JOIN", "Join-related mistakes"},
      {"FILT", "Filter condition errors"},
      {"AGG", "Aggregation logic errors"},
      {"VAL", "Value representation errors"},
      {"SUBQ", "Subquery formulation errors"},
      {"SET", "Set operation errors"},
      {"STR", "Structural oversights"},
  };
  std::vector<ErrorCode> codes = {
      {"SYN-01", "SYN", "Invalid alias", "Define every alias once and reference it exactly as declared."},
      {"SYN-02", "SYN", "Malformed SQL", "Fix keyword order, commas, parentheses and quoting."},
      {"SYN-03", "SYN", "Alias used outside its scope", "Reference select-list aliases only where SQLite allows them."},

      {"SCH-01", "SCH", "Missing column", "Use only columns that exist in the linked schema."},
      {"SCH-02", "SCH", "Ambiguous column", "Qualify shared column names with their table or alias."},
      {"SCH-03", "SCH", "Incorrect foreign key", "Join on the declared key pair, not look-alike columns."},
      {"SCH-04", "SCH", "Column taken from wrong table", "Check which table actually stores the requested attribute."},

      {"JOIN-01", "JOIN", "Missing join", "Add the join path needed to reach every referenced table."},
      {"JOIN-02", "JOIN", "Wrong join type", "Use INNER vs LEFT JOIN according to whether unmatched rows count."},
      {"JOIN-03", "JOIN", "Extra table", "Drop tables that contribute no columns or filters."},
      {"JOIN-04", "JOIN", "Wrong join condition", "Match the join condition to the key relationship."},

      {"FILT-01", "FILT", "Wrong WHERE column", "Filter on the column the question actually constrains."},
      {"FILT-02", "FILT", "Type mismatch", "Compare values with the column's stored type."},
      {"FILT-03", "FILT", "Wrong comparison operator", "Recheck inclusive vs exclusive bounds and negations."},

      {"AGG-01", "AGG", "Missing GROUP BY", "Group by every non-aggregated select column."},
      {"AGG-02", "AGG", "HAVING misuse", "Use HAVING for aggregate conditions and WHERE for row conditions."},
      {"AGG-03", "AGG", "Wrong aggregate function", "Pick COUNT, SUM, AVG, MIN or MAX to match the question."},

      {"VAL-01", "VAL", "Hard-coded value", "Derive values from the data instead of guessing constants."},
      {"VAL-02", "VAL", "Format mismatch", "Match literal formats (dates, units, codes) to stored values."},
      {"VAL-03", "VAL", "Literal casing or spelling mismatch", "Copy literal text exactly as it appears in the data."},

      {"SUBQ-01", "SUBQ", "Unused subquery", "Remove subqueries whose result is never used."},
      {"SUBQ-02", "SUBQ", "Incorrectly correlated subquery", "Correlate the inner query on the right outer column."},
      {"SUBQ-03", "SUBQ", "Scalar subquery returns many rows", "Aggregate or limit subqueries used as scalar values."},

      {"SET-01", "SET", "UNION misuse", "Use UNION only to combine compatible result sets."},
      {"SET-02", "SET", "INTERSECT misuse", "Use INTERSECT when rows must satisfy both conditions."},
      {"SET-03", "SET", "EXCEPT misuse", "Use EXCEPT to remove rows matched by the second query."},

      {"STR-01", "STR", "Missing ORDER BY", "Add ORDER BY when the question implies a ranking or order."},
      {"STR-02", "STR", "Missing LIMIT", "Add LIMIT for top-k, first or single-result questions."},
      {"STR-03", "STR", "Wrong sort direction", "Use DESC for highest/most and ASC for lowest/least."},
      {"STR-04", "STR", "Missing DISTINCT", "Add DISTINCT when the question asks for unique values."},
      {"STR-05", "STR", "Extra or missing SELECT columns", "Return exactly the columns the question asks for."},
  };
  return Taxonomy(std::move(categories), std::move(codes));
}

const std::regex& code_pattern() {
  static const std::regex pattern(R"(\b[A-Z]{2,5}-[0-9]{2}\b)");
  return pattern;
}

}  // namespace

Taxonomy::Taxonomy(std::vector<ErrorCategory> categories, std::vector<ErrorCode> codes)
    : categories_(std::move(categories)), codes_(std::move(codes)) {
  if (categories_.size() != kCategoryCount || codes_.size() != kCodeCount) {
    throw ValidationError("a taxonomy has exactly " + std::to_string(kCategoryCount) + " categories and " +
                          std::to_string(kCodeCount) + " codes");
  }
  for (const auto& code : codes_) {
    bool known_category = std::any_of(categories_.begin(), categories_.end(),
                                      [&](const ErrorCategory& c) { return c.id == code.category; });
    if (!known_category) {
      throw ValidationError("code " + code.code + " names unknown category " + code.category);
    }
    if (!std::regex_match(code.code, code_pattern())) {
      throw ValidationError("code " + code.code + " does not match the CAT-NN pattern");
    }
    if (std::count_if(codes_.begin(), codes_.end(), [&](const ErrorCode& c) { return c.code == code.code; }) != 1) {
      throw ValidationError("duplicate code " + code.code);
    }
  }
  for (const auto& category : categories_) {
    if (std::none_of(codes_.begin(), codes_.end(), [&](const ErrorCode& c) { return c.category == category.id; })) {
      throw ValidationError("category " + category.id + " has no codes");
    }
  }
}

const ErrorCode* Taxonomy::find(std::string_view code) const {
  for (const auto& c : codes_) {
    if (c.code == code) {
      return &c;
    }
  }
  return nullptr;
}

const Taxonomy& default_taxonomy() {
  static const Taxonomy taxonomy = build_default();
  return taxonomy;
}

std::string render_summary(const Taxonomy& taxonomy) {
  std::ostringstream out;
  for (const auto& category : taxonomy.categories()) {
    out << '[' << category.id << "] " << category.name << '\n';
    for (const auto& code : taxonomy.codes()) {
      if (code.category == category.id) {
        out << code.code << " \xE2\x80\x94 " << code.title << '\n';
      }
    }
  }
  return out.str();
}

std::string render_tsv(const Taxonomy& taxonomy) {
  std::ostringstream out;
  for (const auto& code : taxonomy.codes()) {
    out << code.code << '\t' << code.category << '\t' << code.title << '\t' << code.hint << '\n';
  }
  return out.str();
}

ParsedCodes parse_codes(std::string_view text, const Taxonomy& taxonomy) {
  ParsedCodes parsed;
  std::vector<std::string> seen;
  std::string owned(text);
  for (auto it = std::sregex_iterator(owned.begin(), owned.end(), code_pattern()); it != std::sregex_iterator();
       ++it) {
    std::string token = it->str();
    if (std::find(seen.begin(), seen.end(), token) != seen.end()) {
      continue;
    }
    seen.push_back(token);
    if (const ErrorCode* code = taxonomy.find(token)) {
      parsed.known.push_back(*code);
    } else {
      parsed.unknown.push_back(token);
    }
  }
  return parsed;
}

}  // namespace nl2sql
