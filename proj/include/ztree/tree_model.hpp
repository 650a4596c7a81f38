#pragma once

// A built tree as a value: routing rows, canonical JSON, text and DOT output.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ztree/detail/format.hpp"
#include "ztree/error.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"

namespace ztree {

using cell_value = std::variant<std::monostate, double, std::string>;
/// Normalized feature name -> value; absent key or monostate means missing.
using row = std::map<std::string, cell_value, std::less<>>;

struct build_config {
  int max_depth = 5;
  double leaf_prob_threshold = 0.9;
  int retry_limit = 3;
  int concurrency = 4;
  bool operator==(const build_config&) const = default;
};

inline void validate(const build_config& cfg, std::size_t label_count) {
  if (cfg.max_depth < 1) throw error(error_kind::invalid_argument, "max_depth must be at least 1");
  if (!(cfg.leaf_prob_threshold > 1.0 / static_cast<double>(label_count) && cfg.leaf_prob_threshold <= 1.0))
    throw error(error_kind::invalid_argument, "leaf probability threshold must lie in (1/labels, 1]");
  if (cfg.retry_limit < 1) throw error(error_kind::invalid_argument, "retry limit must be at least 1");
  if (cfg.concurrency < 1) throw error(error_kind::invalid_argument, "concurrency must be at least 1");
}

struct build_meta {
  std::string advisor;  // "oracle", "text", "cart"
  std::string model_name;
  std::optional<std::string> timestamp;
  std::uint64_t completions = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t advisor_queries = 0;
  std::uint64_t low_confidence_leaves = 0;
  bool operator==(const build_meta&) const = default;
};

enum class leaf_reason { confident, max_depth, no_active_features, no_candidates, pure, too_small, no_improvement };

inline const char* to_string(leaf_reason r) {
  switch (r) {
    case leaf_reason::confident: return "confident";
    case leaf_reason::max_depth: return "max_depth";
    case leaf_reason::no_active_features: return "no_active_features";
    case leaf_reason::no_candidates: return "no_candidates";
    case leaf_reason::pure: return "pure";
    case leaf_reason::too_small: return "too_small";
    case leaf_reason::no_improvement: return "no_improvement";
  }
  return "";
}

inline std::optional<leaf_reason> leaf_reason_from_string(std::string_view s) {
  for (auto r : {leaf_reason::confident, leaf_reason::max_depth, leaf_reason::no_active_features,
                 leaf_reason::no_candidates, leaf_reason::pure, leaf_reason::too_small, leaf_reason::no_improvement})
    if (s == to_string(r)) return r;
  return std::nullopt;
}

struct internal_node {
  std::string feature;
  split_rule rule;
  std::size_t left = 0;   // value <= threshold, or value in group1
  std::size_t right = 0;
  probability_distribution node_probs;
  double score = 0.0;
  bool operator==(const internal_node&) const = default;
};

struct leaf_node {
  std::string label;
  probability_distribution probs;
  leaf_reason reason = leaf_reason::confident;
  bool operator==(const leaf_node&) const = default;
};

using tree_node = std::variant<internal_node, leaf_node>;

/// Nodes live in a flat array; nodes[0] is the root.
struct decision_tree {
  task_spec task;
  std::vector<tree_node> nodes;
  build_config config;
  build_meta meta;

  const tree_node& root() const { return nodes.at(0); }

  bool operator==(const decision_tree&) const = default;
};

inline const probability_distribution& node_distribution(const tree_node& n) {
  if (auto* i = std::get_if<internal_node>(&n)) return i->node_probs;
  return std::get<leaf_node>(n).probs;
}

inline int depth(const decision_tree& t, std::size_t at = 0) {
  if (auto* i = std::get_if<internal_node>(&t.nodes.at(at)))
    return 1 + std::max(depth(t, i->left), depth(t, i->right));
  return 0;
}

inline std::size_t leaf_count(const decision_tree& t) {
  std::size_t n = 0;
  for (const auto& node : t.nodes) n += std::holds_alternative<leaf_node>(node) ? 1 : 0;
  return n;
}

inline std::string condition_text(const internal_node& n) {
  if (auto* t = std::get_if<threshold_split>(&n.rule)) return n.feature + " <= " + detail::format_number(t->value);
  return n.feature + " in {" + detail::join(std::get<bipartition>(n.rule).group1, ", ") + "}";
}

// ---------------------------------------------------------------------------
// Prediction

enum class missing_policy { error, majority_branch };

struct path_step {
  std::size_t node = 0;
  std::string feature;
  branch_side side = branch_side::left;
  bool operator==(const path_step&) const = default;
};

struct prediction {
  std::string label;
  probability_distribution probs;
  std::vector<path_step> path;
};

/// Routes a row from the root to a leaf. Throws error_kind::missing_value
/// (error policy) and error_kind::unknown_category.
inline prediction predict(const decision_tree& tree, const row& r, missing_policy policy = missing_policy::error) {
  prediction out;
  std::size_t at = 0;
  while (auto* n = std::get_if<internal_node>(&tree.nodes.at(at))) {
    const auto it = r.find(n->feature);
    const bool missing = it == r.end() || std::holds_alternative<std::monostate>(it->second);
    branch_side side = branch_side::left;
    if (missing) {
      if (policy == missing_policy::error)
        throw error(error_kind::missing_value, "row has no value for '" + n->feature + "'");
      const double l = node_distribution(tree.nodes.at(n->left)).max();
      const double rr = node_distribution(tree.nodes.at(n->right)).max();
      side = rr > l ? branch_side::right : branch_side::left;
    } else if (auto* t = std::get_if<threshold_split>(&n->rule)) {
      const auto* v = std::get_if<double>(&it->second);
      if (!v) throw error(error_kind::invalid_argument, "feature '" + n->feature + "' expects a number");
      side = *v <= t->value ? branch_side::left : branch_side::right;
    } else {
      const auto& b = std::get<bipartition>(n->rule);
      const auto* v = std::get_if<std::string>(&it->second);
      if (!v) throw error(error_kind::invalid_argument, "feature '" + n->feature + "' expects a category");
      if (std::find(b.group1.begin(), b.group1.end(), *v) != b.group1.end())
        side = branch_side::left;
      else if (std::find(b.group2.begin(), b.group2.end(), *v) != b.group2.end())
        side = branch_side::right;
      else
        throw error(error_kind::unknown_category, "category '" + *v + "' of '" + n->feature + "' is not routed by this tree");
    }
    out.path.push_back({at, n->feature, side});
    at = side == branch_side::left ? n->left : n->right;
  }
  const auto& leaf = std::get<leaf_node>(tree.nodes.at(at));
  out.label = leaf.label;
  out.probs = leaf.probs;
  return out;
}

/// Checks every present value against the task schema.
inline void check_row(const task_spec& task, const row& r) {
  for (const auto& [name, value] : r) {
    const auto* f = task.find_feature(name);
    if (!f) continue;
    if (auto* s = std::get_if<std::string>(&value)) {
      if (!f->is_categorical()) throw error(error_kind::invalid_argument, "feature '" + name + "' expects a number");
      if (!f->has_category(*s))
        throw error(error_kind::unknown_category, "category '" + *s + "' is not declared for '" + name + "'");
    } else if (std::holds_alternative<double>(value) && !f->is_numeric()) {
      throw error(error_kind::invalid_argument, "feature '" + name + "' expects a category");
    }
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON

inline constexpr int tree_format_version = 1;

namespace detail {

inline void canonical_dump(const nlohmann::json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {  // std::map-backed: sorted keys
        if (!first) out += ",\n";
        first = false;
        out += inner + nlohmann::json(k).dump() + ": ";
        canonical_dump(v, out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      bool scalars = true;
      for (const auto& v : j) scalars = scalars && !v.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          canonical_dump(j[i], out, indent + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        canonical_dump(j[i], out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", j.get<double>());
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

inline nlohmann::json node_to_json(const decision_tree& t, std::size_t at) {
  const auto& node = t.nodes.at(at);
  nlohmann::json j;
  if (auto* n = std::get_if<internal_node>(&node)) {
    nlohmann::json cond{{"feature", n->feature}};
    if (auto* th = std::get_if<threshold_split>(&n->rule)) {
      cond["threshold"] = th->value;
    } else {
      cond["group1"] = std::get<bipartition>(n->rule).group1;
      cond["group2"] = std::get<bipartition>(n->rule).group2;
    }
    j["split"] = std::move(cond);
    j["probs"] = std::vector<double>(n->node_probs.probabilities().begin(), n->node_probs.probabilities().end());
    j["score"] = n->score;
    j["left"] = node_to_json(t, n->left);
    j["right"] = node_to_json(t, n->right);
  } else {
    const auto& l = std::get<leaf_node>(node);
    j["label"] = l.label;
    j["probs"] = std::vector<double>(l.probs.probabilities().begin(), l.probs.probabilities().end());
    j["reason"] = to_string(l.reason);
  }
  return j;
}

}  // namespace detail

inline nlohmann::json tree_to_json(const decision_tree& t) {
  nlohmann::json j;
  j["format_version"] = tree_format_version;
  j["task"] = task_to_json(t.task);
  j["config"] = {{"max_depth", t.config.max_depth},
                 {"leaf_prob_threshold", t.config.leaf_prob_threshold},
                 {"retry_limit", t.config.retry_limit},
                 {"concurrency", t.config.concurrency}};
  j["meta"] = {{"advisor", t.meta.advisor},
               {"model_name", t.meta.model_name},
               {"timestamp", t.meta.timestamp ? nlohmann::json(*t.meta.timestamp) : nlohmann::json(nullptr)},
               {"completions", t.meta.completions},
               {"cache_hits", t.meta.cache_hits},
               {"advisor_queries", t.meta.advisor_queries},
               {"low_confidence_leaves", t.meta.low_confidence_leaves}};
  j["root"] = detail::node_to_json(t, 0);
  return j;
}

/// Sorted keys, two-space indentation, floats with 17 significant digits.
inline std::string serialize(const decision_tree& t) {
  std::string out;
  detail::canonical_dump(tree_to_json(t), out, 0);
  out += '\n';
  return out;
}

namespace detail {

class tree_reader {
public:
  explicit tree_reader(decision_tree& t) : t_(t) {}

  std::size_t read_node(const nlohmann::json& j, const std::string& where, branch_context ctx, int level) {
    if (!j.is_object()) throw format_error(where, "node must be an object");
    if (level > t_.config.max_depth) throw format_error(where, "node deeper than max_depth");
    const std::size_t index = t_.nodes.size();
    const auto probs = read_probs(j, where);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      internal_node n;
      n.feature = get<std::string>(s, "feature", where + "/split");
      const auto* spec = t_.task.find_feature(n.feature);
      if (!spec) throw format_error(where + "/split/feature", "unknown feature '" + n.feature + "'");
      if (s.contains("threshold")) {
        n.rule = threshold_split{get<double>(s, "threshold", where + "/split")};
      } else {
        n.rule = bipartition{get<std::vector<std::string>>(s, "group1", where + "/split"),
                             get<std::vector<std::string>>(s, "group2", where + "/split")};
      }
      n.node_probs = probs;
      n.score = get<double>(j, "score", where);
      branch_context left_ctx, right_ctx;
      try {
        if (spec->is_categorical()) {
          const auto* b = std::get_if<bipartition>(&n.rule);
          if (!b || !partitions(*b, allowed_categories(ctx, *spec)))
            throw format_error(where + "/split", "groups do not partition the reachable categories");
        } else if (!std::holds_alternative<threshold_split>(n.rule)) {
          throw format_error(where + "/split", "numeric feature needs a threshold");
        }
        left_ctx = apply_split(ctx, *spec, n.rule, branch_side::left);
        right_ctx = apply_split(ctx, *spec, n.rule, branch_side::right);
      } catch (const format_error&) {
        throw;
      } catch (const error& e) {
        throw format_error(where + "/split", e.what());
      }
      t_.nodes.emplace_back(std::move(n));
      const auto l = read_node(member(j, "left", where), where + "/left", std::move(left_ctx), level + 1);
      const auto r = read_node(member(j, "right", where), where + "/right", std::move(right_ctx), level + 1);
      auto& stored = std::get<internal_node>(t_.nodes[index]);
      stored.left = l;
      stored.right = r;
    } else {
      leaf_node l;
      l.label = get<std::string>(j, "label", where);
      l.probs = probs;
      const auto reason = leaf_reason_from_string(get<std::string>(j, "reason", where));
      if (!reason) throw format_error(where + "/reason", "unknown leaf reason");
      l.reason = *reason;
      if (l.label != l.probs.top_label()) throw format_error(where + "/label", "leaf label is not the most probable label");
      t_.nodes.emplace_back(std::move(l));
    }
    return index;
  }

  template <class T>
  static T get(const nlohmann::json& j, const char* key, const std::string& where) {
    try {
      return member(j, key, where).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw format_error(where + "/" + key, e.what());
    }
  }

  static const nlohmann::json& member(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw format_error(where + "/" + key, "missing");
    return j.at(key);
  }

private:
  probability_distribution read_probs(const nlohmann::json& j, const std::string& where) {
    auto p = get<std::vector<double>>(j, "probs", where);
    try {
      return probability_distribution::from_probabilities(t_.task.target_labels, std::move(p));
    } catch (const error& e) {
      throw format_error(where + "/probs", e.what());
    }
  }

  decision_tree& t_;
};

}  // namespace detail

/// Throws format_error (with a JSON-pointer-like location) or
/// error_kind::version_mismatch.
inline decision_tree tree_from_json(const nlohmann::json& j) {
  using detail::tree_reader;
  if (!j.is_object()) throw format_error("", "tree document must be an object");
  const auto version = tree_reader::get<int>(j, "format_version", "");
  if (version != tree_format_version)
    throw error(error_kind::version_mismatch, "unsupported tree format_version " + std::to_string(version));
  decision_tree t;
  try {
    t.task = task_from_json(tree_reader::member(j, "task", ""));
  } catch (const format_error& e) {
    throw format_error("/task" + e.location(), e.message());
  } catch (const error& e) {
    throw format_error("/task", e.what());
  }
  const auto& c = tree_reader::member(j, "config", "");
  t.config.max_depth = tree_reader::get<int>(c, "max_depth", "/config");
  t.config.leaf_prob_threshold = tree_reader::get<double>(c, "leaf_prob_threshold", "/config");
  t.config.retry_limit = tree_reader::get<int>(c, "retry_limit", "/config");
  t.config.concurrency = tree_reader::get<int>(c, "concurrency", "/config");
  const auto& m = tree_reader::member(j, "meta", "");
  t.meta.advisor = tree_reader::get<std::string>(m, "advisor", "/meta");
  t.meta.model_name = tree_reader::get<std::string>(m, "model_name", "/meta");
  if (m.contains("timestamp") && !m["timestamp"].is_null()) t.meta.timestamp = tree_reader::get<std::string>(m, "timestamp", "/meta");
  t.meta.completions = tree_reader::get<std::uint64_t>(m, "completions", "/meta");
  t.meta.cache_hits = tree_reader::get<std::uint64_t>(m, "cache_hits", "/meta");
  t.meta.advisor_queries = tree_reader::get<std::uint64_t>(m, "advisor_queries", "/meta");
  t.meta.low_confidence_leaves = tree_reader::get<std::uint64_t>(m, "low_confidence_leaves", "/meta");
  tree_reader reader(t);
  reader.read_node(tree_reader::member(j, "root", ""), "/root", branch_context{}, 0);
  return t;
}

inline decision_tree deserialize(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error("byte " + std::to_string(e.byte), "malformed JSON");
  }
  return tree_from_json(j);
}

inline decision_tree load_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(error_kind::invalid_argument, "cannot open tree file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const format_error& e) {
    throw format_error(path + ":" + e.location(), e.message());
  }
}

// ---------------------------------------------------------------------------
// Rendering

enum class render_style { text, dot };

namespace detail {

inline void render_text(const decision_tree& t, std::size_t at, const std::string& indent, const std::string& edge,
                        std::string& out) {
  const auto& node = t.nodes.at(at);
  out += indent + edge;
  if (auto* n = std::get_if<internal_node>(&node)) {
    out += condition_text(*n) + "\n";
    render_text(t, n->left, indent + (edge.empty() ? "" : "  "), "yes: ", out);
    render_text(t, n->right, indent + (edge.empty() ? "" : "  "), "no: ", out);
  } else {
    const auto& l = std::get<leaf_node>(node);
    out += "predict " + l.label + " (" + l.probs.render(2) + ")\n";
  }
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

inline std::string render(const decision_tree& t, render_style style) {
  std::string out;
  if (style == render_style::text) {
    detail::render_text(t, 0, "", "", out);
    return out;
  }
  out += "digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n  edge [fontname=\"Helvetica\"];\n";
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& node = t.nodes[i];
    if (auto* n = std::get_if<internal_node>(&node)) {
      std::string label;
      if (auto* th = std::get_if<threshold_split>(&n->rule))
        label = n->feature + " ≤ " + detail::format_number(th->value);
      else
        label = n->feature + " ∈ {" + detail::join(std::get<bipartition>(n->rule).group1, ", ") + "}";
      out += "  n" + std::to_string(i) + " [label=\"" + detail::dot_escape(label) + "\"];\n";
    } else {
      const auto& l = std::get<leaf_node>(node);
      out += "  n" + std::to_string(i) + " [label=\"" + detail::dot_escape(l.label) + "\\n" +
             detail::dot_escape(l.probs.render(2)) + "\", shape=ellipse];\n";
    }
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    if (auto* n = std::get_if<internal_node>(&t.nodes[i])) {
      out += "  n" + std::to_string(i) + " -> n" + std::to_string(n->left) + " [label=\"yes\"];\n";
      out += "  n" + std::to_string(i) + " -> n" + std::to_string(n->right) + " [label=\"no\"];\n";
    }
  }
  out += "}\n";
  return out;
}

}  // namespace ztree
