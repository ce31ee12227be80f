#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nl2sql/llm.hpp"

namespace nl2sql {

inline constexpr std::array<std::string_view, 8> kPlaceholders = {
    "question", "schema", "subproblems", "plan", "failed_sql", "exec_feedback", "taxonomy", "correction_plan"};

using PromptBindings = std::map<std::string, std::string, std::less<>>;

// A role's prompt: a system part and a user part with {name} placeholders.
// "{{" and "}}" render as literal braces.
//
// File format:
//   [system]
//   ...
//   [user]
//   ...
class PromptTemplate {
 public:
  // Throws TemplateError on a missing section, an unknown placeholder or an
  // unbalanced brace.
  static PromptTemplate parse(AgentRole role, std::string_view text);

  AgentRole role() const { return role_; }
  const std::string& system_text() const { return system_text_; }
  const std::string& user_template() const { return user_template_; }
  const std::set<std::string>& placeholders() const { return placeholders_; }

  // Every placeholder the template references must be bound.
  std::vector<ChatMessage> render(const PromptBindings& bindings) const;

 private:
  AgentRole role_ = AgentRole::kSql;
  std::string system_text_;
  std::string user_template_;
  std::set<std::string> placeholders_;
};

class TemplateSet {
 public:
  // The shipped templates.
  static TemplateSet defaults();
  // Files named <role>.txt override the defaults; absent files keep them.
  static TemplateSet load_directory(const std::filesystem::path& directory);

  const PromptTemplate& at(AgentRole role) const;

 private:
  std::map<AgentRole, PromptTemplate> templates_;
};

std::string_view default_template_text(AgentRole role);

}  // namespace nl2sql
