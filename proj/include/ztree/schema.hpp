#pragma once

// Task description, feature schema, path constraints and label distributions.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ztree/detail/format.hpp"
#include "ztree/error.hpp"

namespace ztree {

/// Lowercases, turns whitespace runs into a single underscore, drops every
/// character outside [a-z0-9_] and trims underscores from both ends.
/// Throws error_kind::empty_identifier when nothing survives.
inline std::string normalize_identifier(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += '_';
    in_space = false;
    const char lc = detail::ascii_lower(ch);
    if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9') || lc == '_') out += lc;
  }
  const auto b = out.find_first_not_of('_');
  if (b == std::string::npos) {
    throw error(error_kind::empty_identifier, "identifier '" + std::string(raw) + "' is empty after normalization");
  }
  const auto e = out.find_last_not_of('_');
  return out.substr(b, e - b + 1);
}

enum class numeric_dtype { integer, real };

struct numeric_kind {
  numeric_dtype dtype = numeric_dtype::real;
  std::optional<double> lower;
  std::optional<double> upper;

  bool operator==(const numeric_kind&) const = default;
};

struct categorical_kind {
  std::vector<std::string> categories;  // declared order

  bool operator==(const categorical_kind&) const = default;
};

struct feature_spec {
  std::string name;
  std::variant<numeric_kind, categorical_kind> kind;

  bool is_numeric() const { return std::holds_alternative<numeric_kind>(kind); }
  bool is_categorical() const { return std::holds_alternative<categorical_kind>(kind); }
  const numeric_kind& numeric() const { return std::get<numeric_kind>(kind); }
  const categorical_kind& categorical() const { return std::get<categorical_kind>(kind); }

  bool has_category(std::string_view c) const {
    if (!is_categorical()) return false;
    const auto& cats = categorical().categories;
    return std::find(cats.begin(), cats.end(), c) != cats.end();
  }

  bool operator==(const feature_spec&) const = default;
};

struct task_spec {
  std::string problem;
  std::string instance_type;
  std::string target_feature;
  std::vector<std::string> target_labels;
  std::vector<feature_spec> features;

  const feature_spec* find_feature(std::string_view name) const {
    for (const auto& f : features)
      if (f.name == name) return &f;
    return nullptr;
  }

  const feature_spec& feature(std::string_view name) const {
    if (auto* f = find_feature(name)) return *f;
    throw error(error_kind::invalid_argument, "unknown feature '" + std::string(name) + "'");
  }

  std::size_t label_index(std::string_view label) const {
    for (std::size_t i = 0; i < target_labels.size(); ++i)
      if (target_labels[i] == label) return i;
    throw error(error_kind::invalid_argument, "unknown label '" + std::string(label) + "'");
  }

  bool operator==(const task_spec&) const = default;
};

/// Throws error_kind::invalid_argument describing the first violated invariant.
inline void validate(const task_spec& task) {
  auto fail = [](const std::string& msg) { throw error(error_kind::invalid_argument, msg); };
  if (task.target_labels.size() < 2) fail("task needs at least two target labels");
  for (std::size_t i = 0; i < task.target_labels.size(); ++i) {
    if (normalize_identifier(task.target_labels[i]) != task.target_labels[i])
      fail("target label '" + task.target_labels[i] + "' is not normalized");
    for (std::size_t j = 0; j < i; ++j)
      if (task.target_labels[i] == task.target_labels[j]) fail("duplicate target label '" + task.target_labels[i] + "'");
  }
  for (std::size_t i = 0; i < task.features.size(); ++i) {
    const auto& f = task.features[i];
    if (normalize_identifier(f.name) != f.name) fail("feature name '" + f.name + "' is not normalized");
    for (std::size_t j = 0; j < i; ++j)
      if (task.features[j].name == f.name) fail("duplicate feature '" + f.name + "'");
    if (f.is_numeric()) {
      const auto& n = f.numeric();
      if ((n.lower && !std::isfinite(*n.lower)) || (n.upper && !std::isfinite(*n.upper)))
        fail("feature '" + f.name + "' has a non-finite bound");
      if (n.lower && n.upper && !(*n.lower < *n.upper)) fail("feature '" + f.name + "' needs lower < upper");
    } else {
      const auto& cats = f.categorical().categories;
      if (cats.size() < 2) fail("categorical feature '" + f.name + "' needs at least two categories");
      for (std::size_t a = 0; a < cats.size(); ++a) {
        if (normalize_identifier(cats[a]) != cats[a]) fail("category '" + cats[a] + "' is not normalized");
        for (std::size_t b = 0; b < a; ++b)
          if (cats[a] == cats[b]) fail("duplicate category '" + cats[a] + "' in '" + f.name + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Probability distributions

class probability_distribution {
public:
  probability_distribution() = default;

  /// Normalizes non-negative weights. All-zero weights are rejected.
  static probability_distribution from_weights(std::vector<std::string> labels, std::vector<double> weights) {
    if (labels.size() != weights.size() || labels.empty())
      throw error(error_kind::invalid_argument, "distribution needs one weight per label");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw error(error_kind::invalid_argument, "distribution weights must be finite and non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw error(error_kind::invalid_argument, "distribution weights are all zero");
    for (double& w : weights) w /= total;
    return probability_distribution(std::move(labels), std::move(weights));
  }

  /// Accepts probabilities that already sum to one within 1e-9.
  static probability_distribution from_probabilities(std::vector<std::string> labels, std::vector<double> probs) {
    if (labels.size() != probs.size() || labels.empty())
      throw error(error_kind::invalid_argument, "distribution needs one probability per label");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw error(error_kind::invalid_argument, "probabilities must lie in [0, 1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw error(error_kind::invalid_argument, "probabilities must sum to 1");
    return probability_distribution(std::move(labels), std::move(probs));
  }

  static probability_distribution uniform(std::vector<std::string> labels) {
    std::vector<double> w(labels.size(), 1.0);
    return from_weights(std::move(labels), std::move(w));
  }

  const std::vector<std::string>& labels() const { return labels_; }
  std::span<const double> probabilities() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  double at(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return probs_[i];
    throw error(error_kind::invalid_argument, "label '" + std::string(label) + "' not in distribution");
  }

  /// Index of the most probable label; ties go to the earlier label.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs_.size(); ++i)
      if (probs_[i] > probs_[best]) best = i;
    return best;
  }

  double max() const { return probs_.empty() ? 0.0 : probs_[argmax()]; }
  const std::string& top_label() const { return labels_[argmax()]; }

  /// "yes: 0.50, no: 0.50"
  std::string render(int decimals = 2) const {
    std::string out;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (i) out += ", ";
      out += labels_[i] + ": " + detail::format_fixed(probs_[i], decimals);
    }
    return out;
  }

  bool operator==(const probability_distribution&) const = default;

private:
  probability_distribution(std::vector<std::string> labels, std::vector<double> probs)
      : labels_(std::move(labels)), probs_(std::move(probs)) {}

  std::vector<std::string> labels_;
  std::vector<double> probs_;
};

// ---------------------------------------------------------------------------
// Constraints and branch contexts

struct numeric_upper {
  double threshold = 0.0;
  bool inclusive = true;
  bool operator==(const numeric_upper&) const = default;
};

struct numeric_lower {
  double threshold = 0.0;
  bool inclusive = false;
  bool operator==(const numeric_lower&) const = default;
};

struct categorical_subset {
  std::vector<std::string> allowed;  // declared category order
  bool operator==(const categorical_subset&) const = default;
};

struct constraint {
  std::string feature;
  std::variant<numeric_upper, numeric_lower, categorical_subset> body;
  bool operator==(const constraint&) const = default;
};

enum class branch_side { left, right };

struct branch_context {
  std::vector<constraint> constraints;
  std::optional<probability_distribution> previous_probabilities;
  int depth = 0;

  bool operator==(const branch_context&) const = default;
};

/// Admissible values of a numeric feature along a path. Declared bounds are
/// inclusive; thresholds from splits tighten them.
struct numeric_interval {
  double lower = -std::numeric_limits<double>::infinity();
  bool lower_inclusive = true;
  double upper = std::numeric_limits<double>::infinity();
  bool upper_inclusive = true;
  bool integer = false;

  bool contains(double x) const {
    if (integer && x != std::floor(x)) return false;
    const bool above = lower_inclusive ? x >= lower : x > lower;
    const bool below = upper_inclusive ? x <= upper : x < upper;
    return above && below;
  }

  // Smallest / largest admissible integer (integer dtype only).
  double first_integer() const { return lower_inclusive ? std::ceil(lower) : std::floor(lower) + 1.0; }
  double last_integer() const { return upper_inclusive ? std::floor(upper) : std::ceil(upper) - 1.0; }

  bool empty() const {
    if (integer) return first_integer() > last_integer();
    if (lower < upper) return false;
    return !(lower == upper && lower_inclusive && upper_inclusive);
  }

  /// True when both "x <= t" and "x > t" keep at least one admissible value
  /// and t lies strictly inside the bounds.
  bool splits_at(double t) const {
    if (!std::isfinite(t) || !(t > lower) || !(t < upper)) return false;
    if (!integer) return true;
    const double ft = std::floor(t);
    return ft >= first_integer() && ft + 1.0 <= last_integer();
  }

  bool splittable() const {
    if (integer) return last_integer() - first_integer() >= 1.0;
    return lower < upper;
  }

  void tighten(const numeric_upper& u) {
    if (u.threshold < upper) {
      upper = u.threshold;
      upper_inclusive = u.inclusive;
    } else if (u.threshold == upper) {
      upper_inclusive = upper_inclusive && u.inclusive;
    }
  }

  void tighten(const numeric_lower& l) {
    if (l.threshold > lower) {
      lower = l.threshold;
      lower_inclusive = l.inclusive;
    } else if (l.threshold == lower) {
      lower_inclusive = lower_inclusive && l.inclusive;
    }
  }
};

inline numeric_interval effective_interval(const branch_context& ctx, const feature_spec& feature) {
  const auto& n = feature.numeric();
  numeric_interval iv;
  iv.integer = n.dtype == numeric_dtype::integer;
  if (n.lower) iv.lower = *n.lower;
  if (n.upper) iv.upper = *n.upper;
  for (const auto& c : ctx.constraints) {
    if (c.feature != feature.name) continue;
    if (auto* u = std::get_if<numeric_upper>(&c.body)) iv.tighten(*u);
    if (auto* l = std::get_if<numeric_lower>(&c.body)) iv.tighten(*l);
  }
  return iv;
}

/// Categories of `feature` still reachable under ctx, in declared order.
inline std::vector<std::string> allowed_categories(const branch_context& ctx, const feature_spec& feature) {
  for (const auto& c : ctx.constraints) {
    if (c.feature != feature.name) continue;
    if (auto* s = std::get_if<categorical_subset>(&c.body)) return s->allowed;
  }
  return feature.categorical().categories;
}

inline branch_context narrow_numeric(const branch_context& ctx, const feature_spec& feature, double threshold,
                                     branch_side side) {
  if (!feature.is_numeric())
    throw error(error_kind::invalid_argument, "feature '" + feature.name + "' is not numeric");
  const auto iv = effective_interval(ctx, feature);
  if (!iv.splits_at(threshold))
    throw error(error_kind::threshold_out_of_range,
                "threshold " + detail::format_number(threshold) + " is outside the admissible range of '" + feature.name + "'");
  branch_context out = ctx;
  if (side == branch_side::left)
    out.constraints.push_back({feature.name, numeric_upper{threshold, true}});
  else
    out.constraints.push_back({feature.name, numeric_lower{threshold, false}});
  return out;
}

/// Replaces any existing subset constraint on `feature`. `subset` is reordered
/// to declared category order.
inline branch_context narrow_categorical(const branch_context& ctx, const feature_spec& feature,
                                         const std::vector<std::string>& subset) {
  if (!feature.is_categorical())
    throw error(error_kind::invalid_argument, "feature '" + feature.name + "' is not categorical");
  if (subset.empty()) throw error(error_kind::empty_subset, "empty category subset for '" + feature.name + "'");
  const auto current = allowed_categories(ctx, feature);
  for (const auto& s : subset) {
    if (std::find(current.begin(), current.end(), s) == current.end())
      throw error(error_kind::not_a_subset, "category '" + s + "' is not allowed for '" + feature.name + "' here");
  }
  categorical_subset narrowed;
  for (const auto& c : current)
    if (std::find(subset.begin(), subset.end(), c) != subset.end()) narrowed.allowed.push_back(c);

  branch_context out = ctx;
  auto it = std::find_if(out.constraints.begin(), out.constraints.end(), [&](const constraint& c) {
    return c.feature == feature.name && std::holds_alternative<categorical_subset>(c.body);
  });
  if (it != out.constraints.end())
    it->body = std::move(narrowed);
  else
    out.constraints.push_back({feature.name, std::move(narrowed)});
  return out;
}

inline bool is_active(const branch_context& ctx, const feature_spec& feature) {
  if (feature.is_categorical()) return allowed_categories(ctx, feature).size() >= 2;
  return effective_interval(ctx, feature).splittable();
}

/// Features that can still be split under ctx, in declared order.
inline std::vector<feature_spec> active_features(const branch_context& ctx, const task_spec& task) {
  std::vector<feature_spec> out;
  for (const auto& f : task.features)
    if (is_active(ctx, f)) out.push_back(f);
  return out;
}

/// True when every numeric interval and categorical subset under ctx is non-empty.
inline bool satisfiable(const branch_context& ctx, const task_spec& task) {
  for (const auto& f : task.features) {
    if (f.is_numeric()) {
      if (effective_interval(ctx, f).empty()) return false;
    } else if (allowed_categories(ctx, f).empty()) {
      return false;
    }
  }
  return true;
}

inline std::string render_constraint(const constraint& c) {
  return std::visit(
      [&](const auto& body) -> std::string {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, numeric_upper>)
          return c.feature + (body.inclusive ? " <= " : " < ") + detail::format_number(body.threshold);
        else if constexpr (std::is_same_v<T, numeric_lower>)
          return c.feature + (body.inclusive ? " >= " : " > ") + detail::format_number(body.threshold);
        else
          return c.feature + " in {" + detail::join(body.allowed, ", ") + "}";
      },
      c.body);
}

/// "age <= 35 AND color in {red, blue}", or "no constraints" at the root.
inline std::string render_context(const branch_context& ctx) {
  if (ctx.constraints.empty()) return "no constraints";
  std::string out;
  for (std::size_t i = 0; i < ctx.constraints.size(); ++i) {
    if (i) out += " AND ";
    out += render_constraint(ctx.constraints[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema file (JSON)

inline task_spec task_from_json(const nlohmann::json& j) {
  auto req = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) throw format_error(std::string("/") + key, "missing field");
    return obj.at(key);
  };
  task_spec t;
  try {
    t.problem = req(j, "problem").get<std::string>();
    t.instance_type = req(j, "instance_type").get<std::string>();
    t.target_feature = normalize_identifier(req(j, "target_feature").get<std::string>());
    for (const auto& l : req(j, "target_labels")) t.target_labels.push_back(normalize_identifier(l.get<std::string>()));
    for (const auto& fj : req(j, "features")) {
      feature_spec f;
      f.name = normalize_identifier(req(fj, "name").get<std::string>());
      const auto type = req(fj, "type").get<std::string>();
      if (type == "numeric") {
        numeric_kind n;
        const auto dtype = fj.value("dtype", std::string("real"));
        if (dtype == "integer" || dtype == "int")
          n.dtype = numeric_dtype::integer;
        else if (dtype == "real" || dtype == "float")
          n.dtype = numeric_dtype::real;
        else
          throw format_error("/features/" + f.name + "/dtype", "unknown dtype '" + dtype + "'");
        if (fj.contains("lower") && !fj["lower"].is_null()) n.lower = fj["lower"].get<double>();
        if (fj.contains("upper") && !fj["upper"].is_null()) n.upper = fj["upper"].get<double>();
        f.kind = n;
      } else if (type == "categorical") {
        categorical_kind c;
        for (const auto& v : req(fj, "categories")) c.categories.push_back(normalize_identifier(v.get<std::string>()));
        f.kind = std::move(c);
      } else {
        throw format_error("/features/" + f.name + "/type", "unknown feature type '" + type + "'");
      }
      t.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error("schema", e.what());
  }
  validate(t);
  return t;
}

inline nlohmann::json task_to_json(const task_spec& t) {
  nlohmann::json j;
  j["problem"] = t.problem;
  j["instance_type"] = t.instance_type;
  j["target_feature"] = t.target_feature;
  j["target_labels"] = t.target_labels;
  j["features"] = nlohmann::json::array();
  for (const auto& f : t.features) {
    nlohmann::json fj;
    fj["name"] = f.name;
    if (f.is_numeric()) {
      const auto& n = f.numeric();
      fj["type"] = "numeric";
      fj["dtype"] = n.dtype == numeric_dtype::integer ? "integer" : "real";
      if (n.lower) fj["lower"] = *n.lower;
      if (n.upper) fj["upper"] = *n.upper;
    } else {
      fj["type"] = "categorical";
      fj["categories"] = f.categorical().categories;
    }
    j["features"].push_back(std::move(fj));
  }
  return j;
}

inline task_spec load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(error_kind::invalid_argument, "cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(path + ":byte " + std::to_string(e.byte), e.what());
  }
  return task_from_json(j);
}

}  // namespace ztree
