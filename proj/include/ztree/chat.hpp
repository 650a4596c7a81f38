#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ztree {

enum class chat_role { system, assistant, user };

inline const char* to_string(chat_role r) {
  switch (r) {
    case chat_role::system: return "system";
    case chat_role::assistant: return "assistant";
    case chat_role::user: return "user";
  }
  return "user";
}

struct chat_message {
  chat_role role = chat_role::user;
  std::string content;
  bool operator==(const chat_message&) const = default;
};

struct completion_params {
  std::string model_name = "gpt-4o-mini";
  double temperature = 0.0;
  int max_tokens = 512;
  bool operator==(const completion_params&) const = default;
};

// Always three messages: system, assistant, user.
struct chat_prompt {
  std::vector<chat_message> messages;
  completion_params params;

  const std::string& system() const { return messages.at(0).content; }
  const std::string& assistant() const { return messages.at(1).content; }
  const std::string& user() const { return messages.at(2).content; }

  bool well_formed() const {
    return messages.size() == 3 && messages[0].role == chat_role::system &&
           messages[1].role == chat_role::assistant && messages[2].role == chat_role::user &&
           params.temperature >= 0.0 && params.max_tokens > 0;
  }

  bool operator==(const chat_prompt&) const = default;
};

inline nlohmann::json messages_to_json(const chat_prompt& p) {
  auto arr = nlohmann::json::array();
  for (const auto& m : p.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

inline nlohmann::json params_to_json(const completion_params& p) {
  return {{"model", p.model_name}, {"temperature", p.temperature}, {"max_tokens", p.max_tokens}};
}

struct completion_result {
  std::string text;
  bool cached = false;
  int attempts = 0;  // transport tries consumed; 0 when served from cache
};

/// Anything that turns a chat prompt into model text.
class text_completer {
public:
  virtual ~text_completer() = default;
  virtual completion_result complete(const chat_prompt& prompt) = 0;
};

}  // namespace ztree
