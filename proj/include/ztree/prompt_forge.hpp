#pragma once

// Builds the six chat prompts (three task prompts and three parser prompts)
// by placeholder substitution over template data files.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ztree/chat.hpp"
#include "ztree/detail/builtin_templates.hpp"
#include "ztree/error.hpp"
#include "ztree/schema.hpp"

namespace ztree {

enum class template_id {
  numeric_split,
  categorical_split,
  probability_estimate,
  parse_numeric,
  parse_categorical,
  parse_probability,
};

inline constexpr std::array all_template_ids = {
    template_id::numeric_split,  template_id::categorical_split, template_id::probability_estimate,
    template_id::parse_numeric,  template_id::parse_categorical, template_id::parse_probability,
};

inline const char* to_string(template_id id) {
  switch (id) {
    case template_id::numeric_split: return "numeric_split";
    case template_id::categorical_split: return "categorical_split";
    case template_id::probability_estimate: return "probability_estimate";
    case template_id::parse_numeric: return "parse_numeric";
    case template_id::parse_categorical: return "parse_categorical";
    case template_id::parse_probability: return "parse_probability";
  }
  return "";
}

struct prompt_template {
  template_id id = template_id::numeric_split;
  std::string system;
  std::string assistant;
  std::string user;
};

/// Parses the on-disk layout: three sections introduced by "=== system ===",
/// "=== assistant ===" and "=== user ===" lines. The newline that ends each
/// section belongs to the file, not to the message.
inline prompt_template parse_template_text(template_id id, std::string_view text) {
  prompt_template t;
  t.id = id;
  std::string* current = nullptr;
  std::string buffer;
  auto flush = [&] {
    if (current) {
      if (!buffer.empty() && buffer.back() == '\n') buffer.pop_back();
      *current = buffer;
    }
    buffer.clear();
  };
  int seen = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    auto line = text.substr(pos, last ? std::string_view::npos : nl - pos);
    std::string* header = nullptr;
    if (line == "=== system ===") header = &t.system;
    if (line == "=== assistant ===") header = &t.assistant;
    if (line == "=== user ===") header = &t.user;
    if (header) {
      flush();
      current = header;
      ++seen;
    } else if (current) {
      buffer.append(line);
      if (!last) buffer += '\n';
    } else if (!detail::trim(line).empty()) {
      throw format_error(std::string(to_string(id)), "text before the first section header");
    }
    if (last) break;
    pos = nl + 1;
  }
  flush();
  if (seen != 3) throw format_error(std::string(to_string(id)), "expected system, assistant and user sections");
  return t;
}

inline const prompt_template& builtin_template(template_id id) {
  static const std::array<prompt_template, 6> table = [] {
    namespace b = detail::builtin;
    return std::array<prompt_template, 6>{
        parse_template_text(template_id::numeric_split, b::numeric_split),
        parse_template_text(template_id::categorical_split, b::categorical_split),
        parse_template_text(template_id::probability_estimate, b::probability_estimate),
        parse_template_text(template_id::parse_numeric, b::parse_numeric),
        parse_template_text(template_id::parse_categorical, b::parse_categorical),
        parse_template_text(template_id::parse_probability, b::parse_probability),
    };
  }();
  return table[static_cast<std::size_t>(id)];
}

/// The active templates: built-ins, optionally overridden per id by
/// `<dir>/<id>.txt` files.
class template_set {
public:
  template_set() {
    for (auto id : all_template_ids) templates_[static_cast<std::size_t>(id)] = builtin_template(id);
  }

  static template_set from_directory(const std::filesystem::path& dir) {
    template_set s;
    if (!std::filesystem::is_directory(dir))
      throw error(error_kind::invalid_argument, "template directory '" + dir.string() + "' does not exist");
    for (auto id : all_template_ids) {
      auto file = dir / (std::string(to_string(id)) + ".txt");
      if (!std::filesystem::exists(file)) continue;
      std::ifstream in(file, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      s.templates_[static_cast<std::size_t>(id)] = parse_template_text(id, ss.str());
    }
    return s;
  }

  const prompt_template& get(template_id id) const { return templates_[static_cast<std::size_t>(id)]; }

private:
  std::array<prompt_template, 6> templates_;
};

using placeholder_values = std::map<std::string, std::string, std::less<>>;

/// Names of `{name}` tokens in text, in order of appearance.
inline std::vector<std::string> placeholders_in(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && ((text[j] >= 'a' && text[j] <= 'z') || (text[j] >= '0' && text[j] <= '9') || text[j] == '_')) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) out.emplace_back(text.substr(i + 1, j - i - 1));
  }
  return out;
}

/// Single-pass substitution; substituted values are never rescanned.
inline std::string fill_placeholders(std::string_view text, const placeholder_values& values) {
  std::string out;
  out.reserve(text.size() + 256);
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && ((text[j] >= 'a' && text[j] <= 'z') || (text[j] >= '0' && text[j] <= '9') || text[j] == '_')) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        auto name = text.substr(i + 1, j - i - 1);
        auto it = values.find(name);
        if (it == values.end())
          throw error(error_kind::missing_placeholder, "no value for placeholder {" + std::string(name) + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

inline chat_prompt fill_template(const prompt_template& t, const placeholder_values& values,
                                 const completion_params& params = {}) {
  chat_prompt p;
  p.params = params;
  p.messages = {
      {chat_role::system, fill_placeholders(t.system, values)},
      {chat_role::assistant, fill_placeholders(t.assistant, values)},
      {chat_role::user, fill_placeholders(t.user, values)},
  };
  return p;
}

namespace detail {

inline void require_value(const std::string& name, const std::string& value) {
  if (value.empty()) throw error(error_kind::missing_placeholder, "empty value for placeholder {" + name + "}");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Task prompts

class prompt_forge {
public:
  prompt_forge() = default;
  explicit prompt_forge(template_set templates, completion_params params = {})
      : templates_(std::move(templates)), params_(std::move(params)) {}

  const template_set& templates() const { return templates_; }
  const completion_params& params() const { return params_; }
  void set_params(completion_params p) { params_ = std::move(p); }

  chat_prompt numeric_split(const task_spec& task, const feature_spec& feature, const branch_context& ctx) const {
    if (!feature.is_numeric() || !is_active(ctx, feature))
      throw error(error_kind::invalid_argument, "feature '" + feature.name + "' is not an active numeric feature");
    placeholder_values v{
        {"problem", task.problem},
        {"feature", feature.name},
        {"branch_context", render_context(ctx)},
    };
    for (const auto& [k, val] : v) detail::require_value(k, val);
    return fill_template(templates_.get(template_id::numeric_split), v, params_);
  }

  /// `allowed` is rendered in declared category order.
  chat_prompt categorical_split(const task_spec& task, const feature_spec& feature, const branch_context& ctx,
                                const std::vector<std::string>& allowed) const {
    if (!feature.is_categorical())
      throw error(error_kind::invalid_argument, "feature '" + feature.name + "' is not categorical");
    if (allowed.size() < 2)
      throw error(error_kind::too_few_categories, "feature '" + feature.name + "' has fewer than two categories left");
    placeholder_values v{
        {"problem", task.problem},
        {"feature", feature.name},
        {"branch_context", render_context(ctx)},
        {"possible_values", detail::join(in_declared_order(feature, allowed), ", ")},
        {"target_labels", detail::join(task.target_labels, ", ")},
    };
    for (const auto& [k, val] : v) detail::require_value(k, val);
    return fill_template(templates_.get(template_id::categorical_split), v, params_);
  }

  chat_prompt probability_estimate(const task_spec& task, const branch_context& ctx,
                                   const probability_distribution& previous, const std::string& division_left,
                                   const std::string& division_right) const {
    placeholder_values v{
        {"problem", task.problem},
        {"instance_type", task.instance_type},
        {"target_feature", task.target_feature},
        {"classes", detail::join(task.target_labels, ", ")},
        {"previous_context", render_context(ctx)},
        {"previous_probabilities", previous.render(2)},
        {"division_1", division_left},
        {"division_2", division_right},
    };
    for (const auto& [k, val] : v) detail::require_value(k, val);
    return fill_template(templates_.get(template_id::probability_estimate), v, params_);
  }

  // -------------------------------------------------------------------------
  // Parser prompts

  enum class parse_kind { numeric, categorical, probability };

  struct parser_inputs {
    std::string response_text{};
    std::string feature{};                       // numeric, categorical
    std::vector<std::string> possible_values{};  // categorical
    std::string label{};                         // probability
    std::string new_information{};               // probability
    std::string instance_type{};                 // probability
    std::string class_1{};                       // probability
    std::string class_2{};                       // probability
  };

  chat_prompt parser(parse_kind kind, const parser_inputs& in) const {
    placeholder_values v{{"response_text", in.response_text}};
    template_id id = template_id::parse_numeric;
    switch (kind) {
      case parse_kind::numeric:
        v.emplace("feature", in.feature);
        break;
      case parse_kind::categorical:
        id = template_id::parse_categorical;
        v.emplace("feature", in.feature);
        v.emplace("possible_values", detail::join(in.possible_values, ", "));
        break;
      case parse_kind::probability:
        id = template_id::parse_probability;
        v.emplace("label", in.label);
        v.emplace("new_information", in.new_information);
        v.emplace("instance_type", in.instance_type);
        v.emplace("class_1", in.class_1);
        v.emplace("class_2", in.class_2);
        break;
    }
    for (const auto& [k, val] : v) detail::require_value(k, val);
    return fill_template(templates_.get(id), v, params_);
  }

private:
  static std::vector<std::string> in_declared_order(const feature_spec& f, const std::vector<std::string>& subset) {
    std::vector<std::string> out;
    for (const auto& c : f.categorical().categories)
      if (std::find(subset.begin(), subset.end(), c) != subset.end()) out.push_back(c);
    if (out.size() != subset.size())
      throw error(error_kind::not_a_subset, "categories outside the schema of '" + f.name + "'");
    return out;
  }

  template_set templates_;
  completion_params params_;
};

}  // namespace ztree
