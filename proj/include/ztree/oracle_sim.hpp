#pragma once

// Synthetic ground truth. A knowledge_model is a naive-Bayes generative model
// (label prior, per-feature class-conditional tables, features independent
// given the label) over grid-discretized numerics. Because every conditional is
// available in closed form, the oracle answers advisor queries exactly and can
// draw datasets from the same distribution it advises about.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ztree/advisor.hpp"
#include "ztree/error.hpp"
#include "ztree/impurity.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"
#include "ztree/tree_model.hpp"

namespace ztree {

inline constexpr int default_grid_cells = 64;

struct feature_model {
  // Numeric: cell j is (boundaries[j], boundaries[j+1]]. Integer features use
  // one cell per integer k, i.e. (k-1, k]. Empty for categorical features.
  std::vector<double> boundaries;
  // likelihood[label][cell or category]; each row sums to 1.
  std::vector<std::vector<double>> likelihood;
};

struct knowledge_model {
  task_spec task;
  probability_distribution prior;
  std::vector<feature_model> features;  // aligned with task.features

  std::size_t cells(std::size_t f) const { return features[f].likelihood.front().size(); }
};

/// Grid for a numeric feature: `cells` equal-width cells over [lower, upper],
/// or one cell per integer for integer features.
inline std::vector<double> make_grid(const feature_spec& f, int cells = default_grid_cells) {
  const auto& n = f.numeric();
  if (!n.lower || !n.upper)
    throw error(error_kind::invalid_argument, "oracle feature '" + f.name + "' needs lower and upper bounds");
  std::vector<double> b;
  if (n.dtype == numeric_dtype::integer) {
    const double lo = std::ceil(*n.lower), hi = std::floor(*n.upper);
    for (double k = lo - 1.0; k <= hi; k += 1.0) b.push_back(k);
  } else {
    if (cells < 1) throw error(error_kind::invalid_argument, "grid needs at least one cell");
    for (int j = 0; j <= cells; ++j) b.push_back(*n.lower + (*n.upper - *n.lower) * j / cells);
    b.back() = *n.upper;
  }
  return b;
}

/// Throws error_kind::invalid_argument on inconsistent tables.
inline void validate(const knowledge_model& m) {
  validate(m.task);
  auto fail = [](const std::string& msg) { throw error(error_kind::invalid_argument, msg); };
  if (m.prior.labels() != m.task.target_labels) fail("prior labels differ from the task labels");
  if (m.features.size() != m.task.features.size()) fail("one conditional table per feature required");
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    const auto& spec = m.task.features[f];
    const auto& fm = m.features[f];
    std::size_t width = 0;
    if (spec.is_numeric()) {
      if (fm.boundaries.size() < 2) fail("feature '" + spec.name + "' needs a grid");
      for (std::size_t j = 1; j < fm.boundaries.size(); ++j)
        if (!(fm.boundaries[j] > fm.boundaries[j - 1])) fail("grid of '" + spec.name + "' must increase");
      width = fm.boundaries.size() - 1;
    } else {
      width = spec.categorical().categories.size();
    }
    if (fm.likelihood.size() != m.task.target_labels.size()) fail("one likelihood row per label for '" + spec.name + "'");
    for (const auto& row : fm.likelihood) {
      if (row.size() != width) fail("likelihood row of '" + spec.name + "' has the wrong width");
      double s = 0.0;
      for (double v : row) {
        if (!(v >= 0.0)) fail("negative likelihood in '" + spec.name + "'");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) fail("likelihood row of '" + spec.name + "' does not sum to 1");
    }
  }
}

namespace detail {

// Fraction of each cell admitted by the path constraints on a numeric feature.
inline std::vector<double> cell_weights(const feature_spec& spec, const feature_model& fm, const numeric_interval& iv) {
  const std::size_t n = fm.boundaries.size() - 1;
  std::vector<double> w(n, 0.0);
  const bool integer = spec.numeric().dtype == numeric_dtype::integer;
  for (std::size_t j = 0; j < n; ++j) {
    const double a = fm.boundaries[j], b = fm.boundaries[j + 1];
    if (integer) {
      w[j] = iv.contains(b) ? 1.0 : 0.0;
    } else {
      const double lo = std::max(a, iv.lower), hi = std::min(b, iv.upper);
      w[j] = hi > lo ? (hi - lo) / (b - a) : 0.0;
    }
  }
  return w;
}

// Per-label probability that the feature satisfies ctx, P(x_f in A_f | y).
inline std::vector<double> feature_mass(const knowledge_model& m, std::size_t f, const branch_context& ctx) {
  const auto& spec = m.task.features[f];
  const auto& fm = m.features[f];
  const std::size_t labels = m.task.target_labels.size();
  std::vector<double> mass(labels, 0.0);
  if (spec.is_numeric()) {
    const auto w = cell_weights(spec, fm, effective_interval(ctx, spec));
    for (std::size_t y = 0; y < labels; ++y)
      for (std::size_t j = 0; j < w.size(); ++j) mass[y] += w[j] * fm.likelihood[y][j];
  } else {
    const auto allowed = allowed_categories(ctx, spec);
    const auto& cats = spec.categorical().categories;
    for (std::size_t c = 0; c < cats.size(); ++c) {
      if (std::find(allowed.begin(), allowed.end(), cats[c]) == allowed.end()) continue;
      for (std::size_t y = 0; y < labels; ++y) mass[y] += fm.likelihood[y][c];
    }
  }
  return mass;
}

// prior[y] * prod over features other than `skip` of P(x_f in A_f | y).
inline std::vector<double> joint_excluding(const knowledge_model& m, const branch_context& ctx, std::size_t skip) {
  std::vector<double> joint(m.prior.probabilities().begin(), m.prior.probabilities().end());
  for (std::size_t f = 0; f < m.task.features.size(); ++f) {
    if (f == skip) continue;
    const auto mass = feature_mass(m, f, ctx);
    for (std::size_t y = 0; y < joint.size(); ++y) joint[y] *= mass[y];
  }
  return joint;
}

inline std::optional<probability_distribution> normalized(const std::vector<std::string>& labels,
                                                          std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return std::nullopt;
  return probability_distribution::from_weights(labels, std::move(weights));
}

}  // namespace detail

/// Exact P(label | ctx) under the naive-Bayes factorization.
inline probability_distribution posterior(const knowledge_model& m, const branch_context& ctx) {
  auto joint = detail::joint_excluding(m, ctx, m.task.features.size());
  auto d = detail::normalized(m.task.target_labels, std::move(joint));
  if (!d) throw error(error_kind::unsatisfiable_context, "context '" + render_context(ctx) + "' has zero probability");
  return *d;
}

struct oracle_numeric_answer {
  double threshold = 0.0;
  probability_distribution left, right;
  double score = 0.0;
};

/// Grid boundary strictly inside the effective interval minimizing split_score
/// of the exact child posteriors; ties go to the smaller threshold.
inline std::optional<oracle_numeric_answer> best_threshold(const knowledge_model& m, std::size_t f,
                                                           const branch_context& ctx) {
  const auto& spec = m.task.features[f];
  const auto& fm = m.features[f];
  const auto iv = effective_interval(ctx, spec);
  const auto base = detail::joint_excluding(m, ctx, f);
  const auto w = detail::cell_weights(spec, fm, iv);
  const std::size_t labels = base.size();

  std::vector<double> total(labels, 0.0);
  for (std::size_t y = 0; y < labels; ++y)
    for (std::size_t j = 0; j < w.size(); ++j) total[y] += w[j] * fm.likelihood[y][j];

  std::optional<oracle_numeric_answer> best;
  std::vector<double> left_mass(labels, 0.0);
  for (std::size_t j = 0; j + 1 < fm.boundaries.size(); ++j) {
    for (std::size_t y = 0; y < labels; ++y) left_mass[y] += w[j] * fm.likelihood[y][j];
    const double t = fm.boundaries[j + 1];
    if (!iv.splits_at(t)) continue;
    std::vector<double> lw(labels), rw(labels);
    for (std::size_t y = 0; y < labels; ++y) {
      lw[y] = base[y] * left_mass[y];
      rw[y] = base[y] * std::max(0.0, total[y] - left_mass[y]);
    }
    auto l = detail::normalized(m.task.target_labels, lw);
    auto r = detail::normalized(m.task.target_labels, rw);
    if (!l || !r) continue;
    const double score = split_score(*l, *r);
    if (!best || score < best->score) best = oracle_numeric_answer{t, *l, *r, score};
  }
  return best;
}

struct oracle_categorical_answer {
  bipartition groups;
  probability_distribution left, right;
  double score = 0.0;
};

/// Exhaustive over bipartitions for up to 12 allowed categories (group1 always
/// holds the first allowed category), otherwise contiguous cuts of the
/// categories sorted by posterior of the first label. Ties go to the
/// lexicographically smaller group1.
inline std::optional<oracle_categorical_answer> best_bipartition(const knowledge_model& m, std::size_t f,
                                                                 const branch_context& ctx,
                                                                 const std::vector<std::string>& allowed) {
  const auto& spec = m.task.features[f];
  const auto& fm = m.features[f];
  const auto& cats = spec.categorical().categories;
  const auto base = detail::joint_excluding(m, ctx, f);
  const std::size_t labels = base.size();
  const std::size_t k = allowed.size();
  if (k < 2) return std::nullopt;

  // Joint weight of each allowed category per label.
  std::vector<std::vector<double>> cw(k, std::vector<double>(labels));
  for (std::size_t i = 0; i < k; ++i) {
    const auto c = static_cast<std::size_t>(std::find(cats.begin(), cats.end(), allowed[i]) - cats.begin());
    for (std::size_t y = 0; y < labels; ++y) cw[i][y] = base[y] * fm.likelihood[y][c];
  }

  std::optional<oracle_categorical_answer> best;
  auto consider = [&](const std::vector<bool>& in_left) {
    std::vector<double> lw(labels, 0.0), rw(labels, 0.0);
    bipartition b;
    for (std::size_t i = 0; i < k; ++i) {
      auto& target = in_left[i] ? lw : rw;
      for (std::size_t y = 0; y < labels; ++y) target[y] += cw[i][y];
      (in_left[i] ? b.group1 : b.group2).push_back(allowed[i]);
    }
    if (b.group1.empty() || b.group2.empty()) return;
    if (std::find(b.group1.begin(), b.group1.end(), allowed[0]) == b.group1.end()) std::swap(b.group1, b.group2), std::swap(lw, rw);
    auto l = detail::normalized(m.task.target_labels, lw);
    auto r = detail::normalized(m.task.target_labels, rw);
    if (!l || !r) return;
    const double score = split_score(*l, *r);
    if (!best || score < best->score || (score == best->score && b.group1 < best->groups.group1))
      best = oracle_categorical_answer{std::move(b), *l, *r, score};
  };

  if (k <= 12) {
    const std::uint32_t combos = 1u << (k - 1);
    for (std::uint32_t mask = 0; mask < combos; ++mask) {
      std::vector<bool> in_left(k, false);
      in_left[0] = true;
      for (std::size_t i = 1; i < k; ++i) in_left[i] = (mask >> (i - 1)) & 1u;
      consider(in_left);
    }
  } else {
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    auto rate = [&](std::size_t i) {
      double s = 0.0;
      for (double v : cw[i]) s += v;
      return s > 0.0 ? cw[i][0] / s : 0.0;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rate(a) > rate(b); });
    for (std::size_t cut = 1; cut < k; ++cut) {
      std::vector<bool> in_left(k, false);
      for (std::size_t i = 0; i < cut; ++i) in_left[order[i]] = true;
      consider(in_left);
    }
  }
  return best;
}

/// Exact arm posteriors of a split.
inline branch_distributions oracle_branches(const knowledge_model& m, const branch_context& ctx, const split& s) {
  const auto& spec = m.task.feature(s.feature);
  auto left = detail::normalized(m.task.target_labels,
                                 detail::joint_excluding(m, apply_split(ctx, spec, s.rule, branch_side::left), m.task.features.size()));
  auto right = detail::normalized(m.task.target_labels,
                                  detail::joint_excluding(m, apply_split(ctx, spec, s.rule, branch_side::right), m.task.features.size()));
  if (!left || !right) throw probability_unavailable("an arm of '" + division_texts(s).first + "' has zero probability");
  return {*left, *right};
}

/// Advisor answering every query exactly from a knowledge_model.
class oracle_advisor : public advisor {
public:
  explicit oracle_advisor(knowledge_model model) : model_(std::move(model)) { validate(model_); }

  const knowledge_model& model() const { return model_; }

  double propose_numeric(const task_spec&, const feature_spec& feature, const branch_context& ctx) override {
    queries_.fetch_add(1);
    auto best = best_threshold(model_, index_of(feature), ctx);
    if (!best) throw advice_unavailable(feature.name);
    return best->threshold;
  }

  bipartition propose_categorical(const task_spec&, const feature_spec& feature, const branch_context& ctx,
                                  const std::vector<std::string>& allowed) override {
    queries_.fetch_add(1);
    auto best = best_bipartition(model_, index_of(feature), ctx, allowed);
    if (!best) throw advice_unavailable(feature.name);
    return best->groups;
  }

  branch_distributions estimate_branches(const task_spec&, const branch_context& ctx, const probability_distribution&,
                                         const split& s) override {
    queries_.fetch_add(1);
    return oracle_branches(model_, ctx, s);
  }

  probability_distribution estimate_prior(const task_spec&) override {
    queries_.fetch_add(1);
    return model_.prior;
  }

  advisor_stats stats() const override { return {"oracle", queries_.load()}; }

private:
  std::size_t index_of(const feature_spec& f) const {
    for (std::size_t i = 0; i < model_.task.features.size(); ++i)
      if (model_.task.features[i].name == f.name) return i;
    throw error(error_kind::invalid_argument, "feature '" + f.name + "' is not part of the oracle model");
  }

  knowledge_model model_;
  std::atomic<std::uint64_t> queries_{0};
};

// ---------------------------------------------------------------------------
// Sampling

struct labeled_rows {
  std::vector<row> rows;
  std::vector<std::string> labels;
};

inline labeled_rows sample_rows(const knowledge_model& m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& p = m.prior.probabilities();
  std::discrete_distribution<std::size_t> label_dist(p.begin(), p.end());
  std::vector<std::vector<std::discrete_distribution<std::size_t>>> cell_dist(m.features.size());
  for (std::size_t f = 0; f < m.features.size(); ++f)
    for (const auto& lik : m.features[f].likelihood) cell_dist[f].emplace_back(lik.begin(), lik.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  labeled_rows out;
  out.rows.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = label_dist(rng);
    row r;
    for (std::size_t f = 0; f < m.features.size(); ++f) {
      const auto& spec = m.task.features[f];
      const auto cell = cell_dist[f][y](rng);
      if (spec.is_categorical()) {
        r[spec.name] = spec.categorical().categories[cell];
      } else {
        const double a = m.features[f].boundaries[cell], b = m.features[f].boundaries[cell + 1];
        if (spec.numeric().dtype == numeric_dtype::integer)
          r[spec.name] = b;
        else
          r[spec.name] = b - unit(rng) * (b - a);  // (a, b]
      }
    }
    out.rows.push_back(std::move(r));
    out.labels.push_back(m.task.target_labels[y]);
  }
  return out;
}

/// Exact posterior for a fully observed row.
inline probability_distribution row_posterior(const knowledge_model& m, const row& r) {
  std::vector<double> w(m.prior.probabilities().begin(), m.prior.probabilities().end());
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    const auto& spec = m.task.features[f];
    const auto& fm = m.features[f];
    const auto it = r.find(spec.name);
    if (it == r.end() || std::holds_alternative<std::monostate>(it->second))
      throw error(error_kind::missing_value, "row lacks '" + spec.name + "'");
    std::size_t cell = 0;
    if (spec.is_categorical()) {
      const auto& cats = spec.categorical().categories;
      cell = static_cast<std::size_t>(std::find(cats.begin(), cats.end(), std::get<std::string>(it->second)) - cats.begin());
    } else {
      const double x = std::get<double>(it->second);
      const auto ub = std::lower_bound(fm.boundaries.begin() + 1, fm.boundaries.end(), x);
      cell = std::min<std::size_t>(static_cast<std::size_t>(ub - fm.boundaries.begin()) - 1, fm.boundaries.size() - 2);
    }
    for (std::size_t y = 0; y < w.size(); ++y) w[y] *= fm.likelihood[y][cell];
  }
  return probability_distribution::from_weights(m.task.target_labels, std::move(w));
}

/// Accuracy of the exact posterior-argmax classifier on a fresh sample.
inline double bayes_accuracy(const knowledge_model& m, std::size_t n, std::uint64_t seed) {
  const auto sample = sample_rows(m, n, seed);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < sample.rows.size(); ++i)
    if (row_posterior(m, sample.rows[i]).top_label() == sample.labels[i]) ++correct;
  return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Random models

struct model_generator_options {
  int min_features = 3;
  int max_features = 6;
  int labels = 2;
  int grid_cells = default_grid_cells;
  int max_categories = 6;
};

/// Seeded random model with a mix of real, integer and categorical features.
/// Numeric class conditionals are Gaussian bumps over the grid; categorical
/// ones are Dirichlet(1) draws.
inline knowledge_model generate_model(std::uint64_t seed, const model_generator_options& opt = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma1(1.0, 1.0);

  knowledge_model m;
  m.task.problem = "synthetic benchmark " + std::to_string(seed);
  m.task.instance_type = "instance";
  m.task.target_feature = "target";
  for (int y = 0; y < opt.labels; ++y) m.task.target_labels.push_back("class_" + std::to_string(y));

  std::vector<double> prior;
  for (int y = 0; y < opt.labels; ++y) prior.push_back(0.5 + unit(rng));
  m.prior = probability_distribution::from_weights(m.task.target_labels, prior);

  const int nf = opt.min_features + static_cast<int>(unit(rng) * (opt.max_features - opt.min_features + 1));
  for (int f = 0; f < std::min(nf, opt.max_features); ++f) {
    feature_spec spec;
    spec.name = "f" + std::to_string(f);
    feature_model fm;
    const double kind = unit(rng);
    if (kind < 0.4 || f == 0) {
      spec.kind = numeric_kind{numeric_dtype::real, 0.0, 100.0};
      fm.boundaries = make_grid(spec, opt.grid_cells);
    } else if (kind < 0.6) {
      spec.kind = numeric_kind{numeric_dtype::integer, 0.0, 40.0};
      fm.boundaries = make_grid(spec);
    } else {
      categorical_kind c;
      const int k = 2 + static_cast<int>(unit(rng) * (opt.max_categories - 1));
      for (int i = 0; i < std::min(k, opt.max_categories); ++i) c.categories.push_back("c" + std::to_string(i));
      spec.kind = std::move(c);
    }
    const std::size_t width = spec.is_numeric() ? fm.boundaries.size() - 1 : spec.categorical().categories.size();
    for (int y = 0; y < opt.labels; ++y) {
      std::vector<double> row(width);
      if (spec.is_numeric()) {
        const double mu = unit(rng), sigma = 0.08 + 0.25 * unit(rng);
        for (std::size_t j = 0; j < width; ++j) {
          const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(width);
          row[j] = std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)) + 1e-3;
        }
      } else {
        for (auto& v : row) v = gamma1(rng) + 1e-3;
      }
      const double s = std::accumulate(row.begin(), row.end(), 0.0);
      for (auto& v : row) v /= s;
      fm.likelihood.push_back(std::move(row));
    }
    m.task.features.push_back(std::move(spec));
    m.features.push_back(std::move(fm));
  }
  validate(m);
  return m;
}

// ---------------------------------------------------------------------------
// Model files
//
// {"task": <schema>, "prior": {"label": p, ...},
//  "conditionals": {"feature": {"cells": G?, "likelihoods": {"label": [...] | {"mean": m, "sd": s} | {"category": p}}}}}
//
// A {"mean", "sd"} entry is expanded into a discretized normal density.

namespace detail {

inline std::vector<double> gaussian_cells(const feature_spec& spec, const std::vector<double>& boundaries, double mean,
                                          double sd) {
  if (!(sd > 0.0)) throw error(error_kind::invalid_argument, "standard deviation must be positive for '" + spec.name + "'");
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); };
  const bool integer = spec.numeric().dtype == numeric_dtype::integer;
  std::vector<double> out;
  for (std::size_t j = 0; j + 1 < boundaries.size(); ++j) {
    const double lo = integer ? boundaries[j + 1] - 0.5 : boundaries[j];
    const double hi = integer ? boundaries[j + 1] + 0.5 : boundaries[j + 1];
    out.push_back(cdf(hi) - cdf(lo) + 1e-6);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json model_to_json(const knowledge_model& m) {
  nlohmann::json j;
  j["task"] = task_to_json(m.task);
  for (std::size_t y = 0; y < m.task.target_labels.size(); ++y) j["prior"][m.task.target_labels[y]] = m.prior[y];
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    const auto& spec = m.task.features[f];
    nlohmann::json c;
    if (spec.is_numeric()) c["cells"] = m.features[f].boundaries.size() - 1;
    for (std::size_t y = 0; y < m.task.target_labels.size(); ++y) {
      const auto& lik = m.features[f].likelihood[y];
      if (spec.is_numeric()) {
        c["likelihoods"][m.task.target_labels[y]] = lik;
      } else {
        for (std::size_t i = 0; i < lik.size(); ++i)
          c["likelihoods"][m.task.target_labels[y]][spec.categorical().categories[i]] = lik[i];
      }
    }
    j["conditionals"][spec.name] = std::move(c);
  }
  return j;
}

inline knowledge_model model_from_json(const nlohmann::json& j) {
  knowledge_model m;
  try {
    m.task = task_from_json(j.at("task"));
    std::vector<double> prior;
    for (const auto& l : m.task.target_labels) prior.push_back(j.at("prior").at(l).get<double>());
    m.prior = probability_distribution::from_weights(m.task.target_labels, prior);
    for (const auto& spec : m.task.features) {
      const auto& c = j.at("conditionals").at(spec.name);
      feature_model fm;
      if (spec.is_numeric()) fm.boundaries = make_grid(spec, c.value("cells", default_grid_cells));
      for (const auto& l : m.task.target_labels) {
        const auto& lj = c.at("likelihoods").at(l);
        std::vector<double> row;
        if (spec.is_numeric() && lj.is_object()) {
          row = detail::gaussian_cells(spec, fm.boundaries, lj.at("mean").get<double>(), lj.at("sd").get<double>());
        } else if (spec.is_numeric()) {
          row = lj.get<std::vector<double>>();
        } else {
          for (const auto& cat : spec.categorical().categories) row.push_back(lj.at(cat).get<double>());
        }
        // authored tables are weights; store them row-normalized
        double total = 0.0;
        for (double v : row) total += v;
        if (total > 0.0)
          for (double& v : row) v /= total;
        fm.likelihood.push_back(std::move(row));
      }
      m.features.push_back(std::move(fm));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error("model", e.what());
  }
  validate(m);
  return m;
}

inline knowledge_model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(error_kind::invalid_argument, "cannot open model file '" + path + "'");
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(path + ":byte " + std::to_string(e.byte), e.what());
  }
}

}  // namespace ztree
