#pragma once

// The structured question/answer contract between the tree builder and a
// knowledge source: propose a split for one feature, estimate the label
// distributions of the two arms of a split, and estimate the base rates.

#include <atomic>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ztree/chat.hpp"
#include "ztree/error.hpp"
#include "ztree/prompt_forge.hpp"
#include "ztree/response_parse.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"

namespace ztree {

struct branch_distributions {
  probability_distribution left;
  probability_distribution right;
  bool operator==(const branch_distributions&) const = default;
};

struct advisor_stats {
  std::string kind;
  std::uint64_t queries = 0;
};

/// Implementations must be safe to call concurrently.
class advisor {
public:
  virtual ~advisor() = default;

  /// Threshold strictly inside the feature's effective interval under ctx.
  /// Throws advice_unavailable.
  virtual double propose_numeric(const task_spec& task, const feature_spec& feature, const branch_context& ctx) = 0;

  /// Bipartition of `allowed`. Throws advice_unavailable.
  virtual bipartition propose_categorical(const task_spec& task, const feature_spec& feature,
                                          const branch_context& ctx, const std::vector<std::string>& allowed) = 0;

  /// Label distributions of the two arms. Throws probability_unavailable.
  virtual branch_distributions estimate_branches(const task_spec& task, const branch_context& ctx,
                                                 const probability_distribution& previous, const split& s) = 0;

  /// Label base rates with no constraints. Throws probability_unavailable.
  virtual probability_distribution estimate_prior(const task_spec& task) = 0;

  virtual advisor_stats stats() const = 0;
};

// ---------------------------------------------------------------------------
// Variant form of the contract

struct propose_numeric_split {
  const task_spec* task = nullptr;
  feature_spec feature;
  branch_context ctx;
};

struct propose_categorical_split {
  const task_spec* task = nullptr;
  feature_spec feature;
  branch_context ctx;
  std::vector<std::string> allowed;
};

struct estimate_probabilities {
  const task_spec* task = nullptr;
  branch_context ctx;
  probability_distribution previous;
  split division;
};

using advisor_query = std::variant<propose_numeric_split, propose_categorical_split, estimate_probabilities>;
using advisor_answer = std::variant<threshold_split, bipartition, branch_distributions>;

inline advisor_answer advise(advisor& a, const advisor_query& q) {
  return std::visit(
      [&](const auto& query) -> advisor_answer {
        using T = std::decay_t<decltype(query)>;
        if constexpr (std::is_same_v<T, propose_numeric_split>)
          return threshold_split{a.propose_numeric(*query.task, query.feature, query.ctx)};
        else if constexpr (std::is_same_v<T, propose_categorical_split>)
          return a.propose_categorical(*query.task, query.feature, query.ctx, query.allowed);
        else
          return a.estimate_branches(*query.task, query.ctx, query.previous, query.division);
      },
      q);
}

// ---------------------------------------------------------------------------
// Text advisor: task prompt -> completion -> parse -> validate, retried with a
// corrective note appended to the user message.

inline constexpr const char* prior_division_text = "all instances";

class text_advisor : public advisor {
public:
  text_advisor(text_completer& llm, prompt_forge forge, int retry_limit = 3)
      : llm_(llm), forge_(std::move(forge)), retry_limit_(retry_limit) {
    if (retry_limit_ < 1) throw error(error_kind::invalid_argument, "retry limit must be at least 1");
  }

  double propose_numeric(const task_spec& task, const feature_spec& feature, const branch_context& ctx) override {
    queries_.fetch_add(1);
    const auto iv = effective_interval(ctx, feature);
    const auto base = forge_.numeric_split(task, feature, ctx);
    const auto dtype = feature.numeric().dtype;
    std::string note;
    for (int attempt = 0; attempt < retry_limit_; ++attempt) {
      const auto reply = llm_.complete(with_note(base, note));
      auto parsed = parse_with_fallback(
          prompt_forge::parse_kind::numeric, reply.text, {.feature = feature.name},
          [&](const std::string& t) { return extract_numeric(t, dtype); }, forge_, llm_);
      if (parsed.value && iv.splits_at(*parsed.value)) return *parsed.value;
      note = parsed.value ? "Your previous answer (" + detail::format_number(*parsed.value) +
                                ") did not meet the constraints: " + render_context(ctx) +
                                ". The value must leave instances on both sides of the division."
                          : std::string("Your previous answer did not contain a usable ") +
                                (dtype == numeric_dtype::integer ? "integer" : "numeric") + " value.";
    }
    throw advice_unavailable(feature.name);
  }

  bipartition propose_categorical(const task_spec& task, const feature_spec& feature, const branch_context& ctx,
                                  const std::vector<std::string>& allowed) override {
    queries_.fetch_add(1);
    const auto base = forge_.categorical_split(task, feature, ctx, allowed);
    std::string note;
    for (int attempt = 0; attempt < retry_limit_; ++attempt) {
      const auto reply = llm_.complete(with_note(base, note));
      auto parsed = parse_with_fallback(
          prompt_forge::parse_kind::categorical, reply.text,
          {.feature = feature.name, .possible_values = allowed},
          [&](const std::string& t) { return extract_bipartition(t, allowed); }, forge_, llm_);
      if (parsed.value && partitions(*parsed.value, allowed)) return *parsed.value;
      note = "Your previous answer was not valid. The two groups must both be non-empty, must not share any "
             "category, and together must contain exactly these categories: " +
             detail::join(allowed, ", ") + ".";
    }
    throw advice_unavailable(feature.name);
  }

  branch_distributions estimate_branches(const task_spec& task, const branch_context& ctx,
                                         const probability_distribution& previous, const split& s) override {
    queries_.fetch_add(1);
    const auto [left_text, right_text] = division_texts(s);
    auto dists = estimate(task, ctx, previous, left_text, right_text, {left_text, right_text});
    return {std::move(dists[0]), std::move(dists[1])};
  }

  probability_distribution estimate_prior(const task_spec& task) override {
    queries_.fetch_add(1);
    auto dists = estimate(task, branch_context{}, probability_distribution::uniform(task.target_labels),
                          prior_division_text, prior_division_text, {prior_division_text});
    return std::move(dists[0]);
  }

  advisor_stats stats() const override { return {"text", queries_.load()}; }

private:
  static chat_prompt with_note(const chat_prompt& base, const std::string& note) {
    if (note.empty()) return base;
    chat_prompt p = base;
    p.messages[2].content += "\n" + note;
    return p;
  }

  // One estimation completion; one extraction per (division, label), each
  // division renormalized.
  std::vector<probability_distribution> estimate(const task_spec& task, const branch_context& ctx,
                                                 const probability_distribution& previous,
                                                 const std::string& division_left, const std::string& division_right,
                                                 const std::vector<std::string>& selectors) {
    const auto base = forge_.probability_estimate(task, ctx, previous, division_left, division_right);
    const auto& labels = task.target_labels;
    std::string note;
    for (int attempt = 0; attempt < retry_limit_; ++attempt) {
      const auto reply = llm_.complete(with_note(base, note));
      std::vector<probability_distribution> out;
      bool ok = true;
      for (const auto& division : selectors) {
        std::vector<double> weights;
        for (const auto& label : labels) {
          auto parsed = parse_with_fallback(prompt_forge::parse_kind::probability, reply.text,
                                            {.label = label,
                                             .new_information = division,
                                             .instance_type = task.instance_type,
                                             .class_1 = labels[0],
                                             .class_2 = labels[1]},
                                            [](const std::string& t) { return extract_probability(t); }, forge_, llm_);
          if (!parsed.value) {
            ok = false;
            break;
          }
          weights.push_back(*parsed.value);
        }
        double total = 0.0;
        for (double w : weights) total += w;
        if (!ok || !(total > 0.0)) {
          ok = false;
          break;
        }
        out.push_back(probability_distribution::from_weights(labels, std::move(weights)));
      }
      if (ok) return out;
      note = "Your previous answer did not give a probability between 0 and 1 for every label (" +
             detail::join(labels, ", ") + ") in each division.";
    }
    throw probability_unavailable("no usable probability estimate for " + division_left);
  }

  text_completer& llm_;
  prompt_forge forge_;
  int retry_limit_;
  std::atomic<std::uint64_t> queries_{0};
};

}  // namespace ztree
