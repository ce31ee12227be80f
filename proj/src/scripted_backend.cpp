#include <json.hpp>

#include "nl2sql/backends.hpp"
#include "nl2sql/strings.hpp"

namespace nl2sql {
namespace {

using nlohmann::json;

ScriptedReply reply_from_json(const json& value, const std::string& where) {
  if (value.is_string()) {
    return ScriptedReply{value.get<std::string>()};
  }
  if (!value.is_object() || !value.contains("content") || !value["content"].is_string()) {
    throw FormatError(where + ": reply must be a string or an object with string \"content\"");
  }
  ScriptedReply reply{value["content"].get<std::string>()};
  reply.prompt_tokens = value.value("prompt_tokens", std::int64_t{0});
  reply.completion_tokens = value.value("completion_tokens", std::int64_t{0});
  if (reply.prompt_tokens < 0 || reply.completion_tokens < 0) {
    throw FormatError(where + ": token counts must be >= 0");
  }
  return reply;
}

AgentRole role_from_key(const std::string& key, const std::string& where) {
  auto role = parse_role(key);
  if (!role) {
    throw FormatError(where + ": unknown agent role '" + key + "'");
  }
  return *role;
}

}  // namespace

void ScriptedBackend::load_json_file(const std::filesystem::path& path) { load_json_text(read_file(path)); }

void ScriptedBackend::load_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("script is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw FormatError("script must be a JSON object");
  }
  auto ordered_block = [&](const json& block, const std::string& sample, const std::string& where) {
    if (!block.is_object()) {
      throw FormatError(where + " must be an object keyed by role");
    }
    for (const auto& [role_key, replies] : block.items()) {
      AgentRole role = role_from_key(role_key, where);
      if (!replies.is_array()) {
        throw FormatError(where + "." + role_key + " must be an array");
      }
      for (const auto& reply : replies) {
        add_ordered(sample, role, reply_from_json(reply, where + "." + role_key));
      }
    }
  };
  if (auto it = doc.find("keyed"); it != doc.end()) {
    if (!it->is_object()) {
      throw FormatError("keyed must be an object");
    }
    for (const auto& [key, reply] : it->items()) {
      add_keyed(key, reply_from_json(reply, "keyed." + key));
    }
  }
  if (auto it = doc.find("ordered"); it != doc.end()) {
    ordered_block(*it, "", "ordered");
  }
  if (auto it = doc.find("samples"); it != doc.end()) {
    if (!it->is_object()) {
      throw FormatError("samples must be an object keyed by sample id");
    }
    for (const auto& [sample, block] : it->items()) {
      ordered_block(block, sample, "samples." + sample);
    }
  }
}

void ScriptedBackend::add_keyed(std::string key, ScriptedReply reply) {
  std::lock_guard lock(mutex_);
  keyed_[std::move(key)] = std::move(reply);
}

void ScriptedBackend::add_ordered(AgentRole role, ScriptedReply reply) { add_ordered("", role, std::move(reply)); }

void ScriptedBackend::add_ordered(const std::string& sample_id, AgentRole role, ScriptedReply reply) {
  std::lock_guard lock(mutex_);
  ordered_[{sample_id, role}].push_back(std::move(reply));
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request, const CallContext& context) {
  request.validate();
  std::lock_guard lock(mutex_);
  history_.emplace_back(context, request);

  auto respond = [](const ScriptedReply& reply) {
    ChatResponse response;
    response.content = reply.content;
    response.prompt_tokens = reply.prompt_tokens;
    response.completion_tokens = reply.completion_tokens;
    response.backend_tag = BackendTag::kScripted;
    return response;
  };

  if (auto it = keyed_.find(cache_key(request)); it != keyed_.end()) {
    return respond(it->second);
  }
  for (const std::string& scope : {context.sample_id, std::string()}) {
    Scope key{scope, context.role};
    auto it = ordered_.find(key);
    if (it == ordered_.end()) {
      continue;
    }
    std::size_t& next = cursor_[key];
    if (next < it->second.size()) {
      return respond(it->second[next++]);
    }
  }
  if (strict_) {
    throw LlmError(LlmError::Kind::kScriptMiss, "no scripted reply for role " + std::string(to_string(context.role)) +
                                                    (context.sample_id.empty() ? "" : " in sample " + context.sample_id));
  }
  return respond(ScriptedReply{});
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return history_.size();
}

std::vector<std::pair<CallContext, ChatRequest>> ScriptedBackend::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

}  // namespace nl2sql
