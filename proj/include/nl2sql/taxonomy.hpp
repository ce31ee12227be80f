#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nl2sql {

struct ErrorCategory {
  std::string id;    // "JOIN"
  std::string name;  // "Join-related mistakes"

  bool operator==(const ErrorCategory&) const = default;
};

struct ErrorCode {
  std::string code;      // "JOIN-02"
  std::string category;  // "JOIN"
  std::string title;     // at most eight words
  std::string hint;      // one line of repair guidance

  bool operator==(const ErrorCode&) const = default;
};

inline constexpr std::size_t kCategoryCount = 9;
inline constexpr std::size_t kCodeCount = 31;

class Taxonomy {
 public:
  // Throws ValidationError unless the catalog has kCategoryCount categories,
  // kCodeCount unique CAT-NN codes, and every category owns a code.
  Taxonomy(std::vector<ErrorCategory> categories, std::vector<ErrorCode> codes);

  const std::vector<ErrorCategory>& categories() const { return categories_; }
  const std::vector<ErrorCode>& codes() const { return codes_; }
  const ErrorCode* find(std::string_view code) const;

  bool operator==(const Taxonomy&) const = default;

 private:
  std::vector<ErrorCategory> categories_;
  std::vector<ErrorCode> codes_;
};

// The built-in catalog: 9 categories, 31 codes.
const Taxonomy& default_taxonomy();

// One header per category, then one line per code: the code, an em dash, the title.
std::string render_summary(const Taxonomy& taxonomy);

// Tab-separated export: code, category, title, hint.
std::string render_tsv(const Taxonomy& taxonomy);

struct ParsedCodes {
  std::vector<ErrorCode> known;
  std::vector<std::string> unknown;
};

// Extracts every CAT-NN token in order of first appearance.
ParsedCodes parse_codes(std::string_view text, const Taxonomy& taxonomy);

}  // namespace nl2sql
