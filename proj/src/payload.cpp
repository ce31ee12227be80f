#include <json.hpp>
#include <optional>

#include "nl2sql/agents.hpp"
#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

// Bodies of ``` fenced blocks whose first non-space character opens an object.
std::vector<std::string> fenced_objects(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) {
      break;
    }
    auto body_start = text.find('\n', open + 3);
    if (body_start == std::string_view::npos) {
      break;
    }
    ++body_start;
    auto close = text.find("```", body_start);
    if (close == std::string_view::npos) {
      break;
    }
    std::string_view body = trim(text.substr(body_start, close - body_start));
    if (!body.empty() && body.front() == '{') {
      out.emplace_back(body);
    }
    pos = close + 3;
  }
  return out;
}

// End offset (exclusive) of the object opening at `start`, honoring JSON
// string escapes inside it.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) {
        return i + 1;
      }
    }
  }
  return std::nullopt;
}

// Balanced objects appearing outside double-quoted prose. Prose quotes do not
// span lines, so a stray inch mark cannot hide the rest of the response.
std::vector<std::string> bare_objects(std::string_view text) {
  std::vector<std::string> out;
  bool in_prose_quote = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\n') {
      in_prose_quote = false;
    } else if (c == '"') {
      in_prose_quote = !in_prose_quote;
    } else if (c == '{' && !in_prose_quote) {
      if (auto end = balanced_end(text, i)) {
        out.emplace_back(text.substr(i, *end - i));
        i = *end - 1;
      }
    }
  }
  return out;
}

}  // namespace

std::string extract_structured_payload(std::string_view response_text) {
  std::vector<std::string> candidates = fenced_objects(response_text);
  for (auto& object : bare_objects(response_text)) {
    candidates.push_back(std::move(object));
  }
  if (candidates.empty()) {
    throw ExtractionError("no structured object found in response");
  }
  for (const auto& candidate : candidates) {
    if (nlohmann::json::accept(candidate)) {
      return candidate;
    }
  }
  return candidates.front();
}

}  // namespace nl2sql
