#include "nl2sql/templates.hpp"

#include <algorithm>

#include "nl2sql/errors.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

enum class PieceKind { kLiteral, kPlaceholder };

struct Piece {
  PieceKind kind;
  std::string text;
};

std::vector<Piece> tokenize(std::string_view text, const std::string& where) {
  std::vector<Piece> pieces;
  std::string literal;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      literal.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      literal.push_back('}');
      ++i;
    } else if (c == '{') {
      auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw TemplateError(where + ": unclosed '{' at offset " + std::to_string(i));
      }
      std::string name(text.substr(i + 1, close - i - 1));
      if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
        throw TemplateError(where + ": unknown placeholder {" + name + "}");
      }
      if (!literal.empty()) {
        pieces.push_back({PieceKind::kLiteral, std::move(literal)});
        literal.clear();
      }
      pieces.push_back({PieceKind::kPlaceholder, std::move(name)});
      i = close;
    } else if (c == '}') {
      throw TemplateError(where + ": stray '}' at offset " + std::to_string(i));
    } else {
      literal.push_back(c);
    }
  }
  if (!literal.empty()) {
    pieces.push_back({PieceKind::kLiteral, std::move(literal)});
  }
  return pieces;
}

std::string render_pieces(const std::vector<Piece>& pieces, const PromptBindings& bindings, AgentRole role) {
  std::string out;
  for (const auto& piece : pieces) {
    if (piece.kind == PieceKind::kLiteral) {
      out += piece.text;
      continue;
    }
    auto it = bindings.find(piece.text);
    if (it == bindings.end()) {
      throw TemplateError(std::string(to_string(role)) + " template: placeholder {" + piece.text + "} is unbound");
    }
    out += it->second;
  }
  return out;
}

std::string strip_outer_newlines(std::string text) {
  auto first = text.find_first_not_of("\r\n");
  if (first == std::string::npos) {
    return {};
  }
  auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

}  // namespace

PromptTemplate PromptTemplate::parse(AgentRole role, std::string_view text) {
  const std::string where = std::string(to_string(role)) + " template";
  std::string system;
  std::string user;
  std::string* current = nullptr;
  bool saw_user = false;
  for (const auto& line : split_lines(text)) {
    std::string_view marker = trim(line);
    if (marker == "[system]") {
      current = &system;
      continue;
    }
    if (marker == "[user]") {
      current = &user;
      saw_user = true;
      continue;
    }
    if (current == nullptr) {
      if (!marker.empty()) {
        throw TemplateError(where + ": text before the first section marker");
      }
      continue;
    }
    *current += line;
    current->push_back('\n');
  }
  if (!saw_user) {
    throw TemplateError(where + ": missing [user] section");
  }

  PromptTemplate tpl;
  tpl.role_ = role;
  tpl.system_text_ = strip_outer_newlines(std::move(system));
  tpl.user_template_ = strip_outer_newlines(std::move(user));
  if (tpl.user_template_.empty()) {
    throw TemplateError(where + ": empty [user] section");
  }
  for (const std::string* part : {&tpl.system_text_, &tpl.user_template_}) {
    for (const auto& piece : tokenize(*part, where)) {
      if (piece.kind == PieceKind::kPlaceholder) {
        tpl.placeholders_.insert(piece.text);
      }
    }
  }
  return tpl;
}

std::vector<ChatMessage> PromptTemplate::render(const PromptBindings& bindings) const {
  const std::string where = std::string(to_string(role_)) + " template";
  std::vector<ChatMessage> messages;
  if (!system_text_.empty()) {
    messages.push_back({MessageRole::kSystem, render_pieces(tokenize(system_text_, where), bindings, role_)});
  }
  messages.push_back({MessageRole::kUser, render_pieces(tokenize(user_template_, where), bindings, role_)});
  return messages;
}

TemplateSet TemplateSet::defaults() {
  TemplateSet set;
  for (AgentRole role : kAllRoles) {
    set.templates_.emplace(role, PromptTemplate::parse(role, default_template_text(role)));
  }
  return set;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory)) {
    throw ConfigError("templates directory not found: " + directory.string());
  }
  TemplateSet set = defaults();
  for (AgentRole role : kAllRoles) {
    auto file = directory / (std::string(to_string(role)) + ".txt");
    if (std::filesystem::exists(file)) {
      set.templates_.insert_or_assign(role, PromptTemplate::parse(role, read_file(file)));
    }
  }
  return set;
}

const PromptTemplate& TemplateSet::at(AgentRole role) const { return templates_.at(role); }

}  // namespace nl2sql
