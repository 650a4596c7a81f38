#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ztree/detail/format.hpp"
#include "ztree/schema.hpp"

namespace ztree {

// Left arm is "value <= value".
struct threshold_split {
  double value = 0.0;
  bool operator==(const threshold_split&) const = default;
};

// Left arm is group1. Both groups are kept in declared category order.
struct bipartition {
  std::vector<std::string> group1;
  std::vector<std::string> group2;
  bool operator==(const bipartition&) const = default;
};

using split_rule = std::variant<threshold_split, bipartition>;

struct split {
  std::string feature;
  split_rule rule;
  bool operator==(const split&) const = default;
};

/// ("glucose <= 140", "glucose > 140") or ("color in {red, blue}", "color in {green}").
inline std::pair<std::string, std::string> division_texts(const split& s) {
  if (auto* t = std::get_if<threshold_split>(&s.rule)) {
    const auto v = detail::format_number(t->value);
    return {s.feature + " <= " + v, s.feature + " > " + v};
  }
  const auto& b = std::get<bipartition>(s.rule);
  return {s.feature + " in {" + detail::join(b.group1, ", ") + "}",
          s.feature + " in {" + detail::join(b.group2, ", ") + "}"};
}

/// Narrows ctx to one arm of the split.
inline branch_context apply_split(const branch_context& ctx, const feature_spec& feature, const split_rule& rule,
                                  branch_side side) {
  if (auto* t = std::get_if<threshold_split>(&rule)) return narrow_numeric(ctx, feature, t->value, side);
  const auto& b = std::get<bipartition>(rule);
  return narrow_categorical(ctx, feature, side == branch_side::left ? b.group1 : b.group2);
}

/// Groups are disjoint, non-empty and cover `allowed` exactly.
inline bool partitions(const bipartition& b, const std::vector<std::string>& allowed) {
  if (b.group1.empty() || b.group2.empty()) return false;
  if (b.group1.size() + b.group2.size() != allowed.size()) return false;
  for (const auto& c : allowed) {
    const bool in1 = std::find(b.group1.begin(), b.group1.end(), c) != b.group1.end();
    const bool in2 = std::find(b.group2.begin(), b.group2.end(), c) != b.group2.end();
    if (in1 == in2) return false;
  }
  return true;
}

}  // namespace ztree
