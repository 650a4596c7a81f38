#pragma once

// Zero-shot tree construction: ask the advisor for one split per active
// feature, score each by the harmonic mean of its arms' Gini impurities, keep
// the lowest, recurse.

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "ztree/advisor.hpp"
#include "ztree/error.hpp"
#include "ztree/impurity.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"
#include "ztree/tree_model.hpp"

namespace ztree {

struct split_candidate {
  std::string feature;
  split_rule rule;
  probability_distribution left_dist;
  probability_distribution right_dist;
  double score = 0.0;
  bool operator==(const split_candidate&) const = default;
};

/// Everything the builder saw at one internal-node decision.
struct node_trace {
  std::size_t node = 0;
  int depth = 0;
  branch_context ctx;
  std::vector<split_candidate> candidates;  // sorted; the first one was chosen
  std::vector<std::string> failed_features;
};

struct build_hooks {
  std::function<void(const node_trace&)> on_split;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are kept
// per index and the lowest-index one is rethrown after all work finishes.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// One candidate per active feature that the advisor could answer for, sorted
/// by (score, feature name). Throws error_kind::no_candidates when none could.
/// Transport and authentication failures propagate.
inline std::vector<split_candidate> propose_candidates(const task_spec& task, const branch_context& ctx, advisor& adv,
                                                       const build_config& cfg,
                                                       std::vector<std::string>* failed = nullptr) {
  const auto active = active_features(ctx, task);
  if (active.empty()) throw error(error_kind::no_candidates, "no active features");
  const auto previous = ctx.previous_probabilities.value_or(probability_distribution::uniform(task.target_labels));

  std::vector<std::optional<split_candidate>> slots(active.size());
  detail::parallel_for(active.size(), cfg.concurrency, [&](std::size_t i) {
    const auto& f = active[i];
    try {
      split_rule rule;
      if (f.is_numeric()) {
        const double t = adv.propose_numeric(task, f, ctx);
        if (!effective_interval(ctx, f).splits_at(t)) throw advice_unavailable(f.name);
        rule = threshold_split{t};
      } else {
        const auto allowed = allowed_categories(ctx, f);
        auto b = adv.propose_categorical(task, f, ctx, allowed);
        if (!partitions(b, allowed)) throw advice_unavailable(f.name);
        rule = std::move(b);
      }
      auto arms = adv.estimate_branches(task, ctx, previous, split{f.name, rule});
      const double score = split_score(arms.left, arms.right);
      slots[i] = split_candidate{f.name, std::move(rule), std::move(arms.left), std::move(arms.right), score};
    } catch (const error& e) {
      if (e.kind() != error_kind::advice_unavailable && e.kind() != error_kind::probability_unavailable) throw;
    }
  });

  std::vector<split_candidate> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i])
      out.push_back(std::move(*slots[i]));
    else if (failed)
      failed->push_back(active[i].name);
  }
  if (out.empty()) throw error(error_kind::no_candidates, "every active feature failed");
  std::sort(out.begin(), out.end(), [](const split_candidate& a, const split_candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.feature < b.feature;
  });
  return out;
}

namespace detail {

class tree_growth {
public:
  tree_growth(decision_tree& tree, advisor& adv, const build_hooks& hooks) : tree_(tree), adv_(adv), hooks_(hooks) {}

  std::size_t grow(const branch_context& ctx, const probability_distribution& prev, int depth) {
    const auto& cfg = tree_.config;
    if (prev.max() >= cfg.leaf_prob_threshold) return leaf(prev, leaf_reason::confident);
    if (depth >= cfg.max_depth) return leaf(prev, leaf_reason::max_depth);
    if (active_features(ctx, tree_.task).empty()) return leaf(prev, leaf_reason::no_active_features);

    std::vector<std::string> failed;
    std::vector<split_candidate> candidates;
    try {
      candidates = propose_candidates(tree_.task, ctx, adv_, cfg, &failed);
    } catch (const error& e) {
      if (e.kind() != error_kind::no_candidates) throw;
      return leaf(prev, leaf_reason::no_candidates);
    }

    const auto index = tree_.nodes.size();
    const auto& best = candidates.front();
    const auto& spec = tree_.task.feature(best.feature);
    tree_.nodes.emplace_back(internal_node{best.feature, best.rule, 0, 0, prev, best.score});
    if (hooks_.on_split) hooks_.on_split(node_trace{index, depth, ctx, candidates, failed});

    auto child_ctx = [&](branch_side side, const probability_distribution& p) {
      auto c = apply_split(ctx, spec, best.rule, side);
      c.previous_probabilities = p;
      c.depth = depth + 1;
      return c;
    };
    const auto left = grow(child_ctx(branch_side::left, best.left_dist), best.left_dist, depth + 1);
    const auto right = grow(child_ctx(branch_side::right, best.right_dist), best.right_dist, depth + 1);
    auto& node = std::get<internal_node>(tree_.nodes[index]);
    node.left = left;
    node.right = right;
    return index;
  }

private:
  std::size_t leaf(const probability_distribution& p, leaf_reason reason) {
    if (p.max() < tree_.config.leaf_prob_threshold) ++tree_.meta.low_confidence_leaves;
    tree_.nodes.emplace_back(leaf_node{p.top_label(), p, reason});
    return tree_.nodes.size() - 1;
  }

  decision_tree& tree_;
  advisor& adv_;
  const build_hooks& hooks_;
};

}  // namespace detail

/// The root prior comes from the advisor and falls back to uniform when it
/// cannot be estimated. Usage counters from the completion layer (model name,
/// completions, cache hits, timestamp) are left for the caller to fill in.
inline decision_tree build_tree(const task_spec& task, advisor& adv, const build_config& cfg,
                                const build_hooks& hooks = {}) {
  validate(task);
  validate(cfg, task.target_labels.size());
  decision_tree tree;
  tree.task = task;
  tree.config = cfg;

  probability_distribution prior = probability_distribution::uniform(task.target_labels);
  try {
    auto p = adv.estimate_prior(task);
    if (p.labels() == task.target_labels) prior = std::move(p);
  } catch (const error& e) {
    if (e.kind() != error_kind::probability_unavailable && e.kind() != error_kind::advice_unavailable) throw;
  }

  branch_context root;
  root.previous_probabilities = prior;
  detail::tree_growth(tree, adv, hooks).grow(root, prior, 0);
  const auto s = adv.stats();
  tree.meta.advisor = s.kind;
  tree.meta.advisor_queries = s.queries;
  return tree;
}

}  // namespace ztree
