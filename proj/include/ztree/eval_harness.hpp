#pragma once

// Datasets from CSV, accuracy and macro F1, few-shot subsampling, and a
// data-driven CART baseline that produces the same decision_tree type.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ztree/detail/format.hpp"
#include "ztree/error.hpp"
#include "ztree/impurity.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"
#include "ztree/tree_model.hpp"

namespace ztree {

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

/// Records of fields. Accepts LF or CRLF line ends and a UTF-8 BOM; a
/// trailing newline does not add an empty record.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) throw format_error("line " + std::to_string(line), "quote inside an unquoted field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        field += c;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw format_error("line " + std::to_string(line), "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

// ---------------------------------------------------------------------------
// Datasets

struct dataset {
  task_spec task;
  std::vector<row> rows;
  std::vector<std::string> labels;
};

struct row_issue {
  std::size_t line = 0;  // 1-based line of the CSV record
  std::string message;
};

struct csv_load {
  dataset data;
  std::vector<row_issue> issues;             // rows that were dropped
  std::vector<std::string> ignored_columns;  // normalized names
};

inline const std::set<std::string, std::less<>>& default_missing_tokens() {
  static const std::set<std::string, std::less<>> tokens{"", "na", "nan", "null"};
  return tokens;
}

class header_mismatch : public error {
public:
  header_mismatch(std::vector<std::string> missing, std::vector<std::string> extra)
      : error(error_kind::header_mismatch, describe(missing, extra)), missing_(std::move(missing)), extra_(std::move(extra)) {}
  const std::vector<std::string>& missing() const { return missing_; }
  const std::vector<std::string>& extra() const { return extra_; }

private:
  static std::string describe(const std::vector<std::string>& missing, const std::vector<std::string>& extra) {
    std::string s = "CSV header does not match the schema; missing: [" + detail::join(missing, ", ") + "]";
    if (!extra.empty()) s += ", extra: [" + detail::join(extra, ", ") + "]";
    return s;
  }
  std::vector<std::string> missing_, extra_;
};

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// A CSV whose columns have been matched to a task by normalized header.
struct bound_csv {
  std::vector<std::string> header;  // normalized; empty when not an identifier
  std::vector<std::vector<std::string>> records;  // data records, header excluded
  std::vector<std::size_t> feature_columns;       // parallel to task.features
  std::optional<std::size_t> target_column;
  std::vector<std::string> ignored_columns;
};

/// Throws header_mismatch when a feature (or a required target) has no column.
inline bound_csv bind_csv(std::string_view text, const task_spec& task, bool require_target = true) {
  auto records = parse_csv(text);
  if (records.empty()) throw header_mismatch({task.target_feature}, {});
  bound_csv out;
  for (const auto& h : records[0]) {
    try {
      out.header.push_back(normalize_identifier(h));
    } catch (const error&) {
      out.header.emplace_back();
    }
  }
  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < out.header.size(); ++i)
      if (out.header[i] == name) return i;
    return std::nullopt;
  };
  std::vector<std::string> missing;
  for (const auto& f : task.features) {
    if (auto c = column_of(f.name))
      out.feature_columns.push_back(*c);
    else
      missing.push_back(f.name);
  }
  out.target_column = column_of(task.target_feature);
  if (!out.target_column && require_target) missing.push_back(task.target_feature);
  for (const auto& h : out.header)
    if (h != task.target_feature && !task.find_feature(h)) out.ignored_columns.push_back(h);
  if (!missing.empty()) throw header_mismatch(std::move(missing), out.ignored_columns);
  records.erase(records.begin());
  out.records = std::move(records);
  return out;
}

/// Feature values of one record, or a description of why it cannot be used.
inline std::variant<row, std::string> parse_record(const bound_csv& csv, const task_spec& task,
                                                   const std::vector<std::string>& rec,
                                                   const std::set<std::string, std::less<>>& missing_tokens) {
  if (rec.size() != csv.header.size())
    return "expected " + std::to_string(csv.header.size()) + " fields, found " + std::to_string(rec.size());
  row values;
  for (std::size_t f = 0; f < task.features.size(); ++f) {
    const auto& spec = task.features[f];
    const auto cell = std::string(detail::trim(rec[csv.feature_columns[f]]));
    if (missing_tokens.contains(detail::to_lower(cell))) continue;
    if (spec.is_numeric()) {
      const auto v = detail::parse_double(cell);
      if (!v) return "'" + cell + "' is not a number for '" + spec.name + "'";
      if (spec.numeric().dtype == numeric_dtype::integer && *v != std::floor(*v))
        return "'" + cell + "' is not an integer for '" + spec.name + "'";
      values.emplace(spec.name, *v);
    } else {
      std::string c;
      try {
        c = normalize_identifier(cell);
      } catch (const error&) {
      }
      if (!spec.has_category(c)) return "category '" + cell + "' is not declared for '" + spec.name + "'";
      values.emplace(spec.name, std::move(c));
    }
  }
  return values;
}

/// Normalized label of a record. Throws error_kind::label_out_of_vocabulary.
inline std::string parse_label(const bound_csv& csv, const task_spec& task, const std::vector<std::string>& rec,
                               std::size_t line) {
  const auto raw = rec.size() > *csv.target_column ? std::string(detail::trim(rec[*csv.target_column])) : std::string();
  std::string label;
  try {
    label = normalize_identifier(raw);
  } catch (const error&) {
  }
  if (std::find(task.target_labels.begin(), task.target_labels.end(), label) == task.target_labels.end())
    throw error(error_kind::label_out_of_vocabulary,
                "line " + std::to_string(line) + ": label '" + raw + "' is not one of " + detail::join(task.target_labels, ", "));
  return label;
}

/// Headers and categorical cells are normalized like schema identifiers.
/// Unparseable or undeclared cell values drop the row and are reported.
/// Throws header_mismatch and error_kind::label_out_of_vocabulary.
inline csv_load load_csv_text(std::string_view text, const task_spec& task,
                              const std::set<std::string, std::less<>>& missing_tokens = default_missing_tokens()) {
  const auto csv = bind_csv(text, task, true);
  csv_load out;
  out.data.task = task;
  out.ignored_columns = csv.ignored_columns;
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    const auto& rec = csv.records[r];
    const auto line = r + 2;
    auto parsed = parse_record(csv, task, rec, missing_tokens);
    if (auto* problem = std::get_if<std::string>(&parsed)) {
      out.issues.push_back({line, *problem});
      continue;
    }
    out.data.labels.push_back(parse_label(csv, task, rec, line));
    out.data.rows.push_back(std::move(std::get<row>(parsed)));
  }
  return out;
}

inline csv_load load_csv(const std::string& path, const task_spec& task,
                         const std::set<std::string, std::less<>>& missing_tokens = default_missing_tokens()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(error_kind::invalid_argument, "cannot open CSV file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_csv_text(ss.str(), task, missing_tokens);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

inline std::string cell_text(const cell_value& v) {
  if (auto* d = std::get_if<double>(&v)) return detail::format_number(*d);
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  return "";
}

/// Features in schema order, then the target column.
inline std::string to_csv(const dataset& d) {
  std::vector<std::string> header;
  for (const auto& f : d.task.features) header.push_back(f.name);
  header.push_back(d.task.target_feature);
  std::string out = csv_line(header);
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    std::vector<std::string> fields;
    for (const auto& f : d.task.features) {
      const auto it = d.rows[i].find(f.name);
      fields.push_back(it == d.rows[i].end() ? std::string() : cell_text(it->second));
    }
    fields.push_back(d.labels.at(i));
    out += csv_line(fields);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct label_metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct eval_report {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]
  std::vector<label_metrics> per_label;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t n = 0;
  std::size_t skipped = 0;
};

/// Fills the derived fields from labels and confusion. 0/0 counts as 0.
inline void finalize(eval_report& r) {
  const auto k = r.labels.size();
  r.per_label.assign(k, {});
  std::size_t correct = 0, routed = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t tp = r.confusion[i][i], predicted = 0, actual = 0;
    for (std::size_t j = 0; j < k; ++j) {
      predicted += r.confusion[j][i];
      actual += r.confusion[i][j];
    }
    auto& m = r.per_label[i];
    m.support = actual;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    correct += tp;
    routed += actual;
  }
  r.accuracy = routed ? static_cast<double>(correct) / static_cast<double>(routed) : 0.0;
  double sum = 0.0;
  for (const auto& m : r.per_label) sum += m.f1;
  r.macro_f1 = k ? sum / static_cast<double>(k) : 0.0;
}

inline eval_report report_from_predictions(const std::vector<std::string>& labels, const std::vector<std::string>& actual,
                                           const std::vector<std::string>& predicted) {
  if (actual.size() != predicted.size()) throw error(error_kind::invalid_argument, "actual and predicted differ in length");
  eval_report r;
  r.labels = labels;
  r.confusion.assign(labels.size(), std::vector<std::size_t>(labels.size(), 0));
  auto index = [&](const std::string& l) {
    const auto it = std::find(labels.begin(), labels.end(), l);
    if (it == labels.end()) throw error(error_kind::label_out_of_vocabulary, "label '" + l + "' is not in the report");
    return static_cast<std::size_t>(it - labels.begin());
  };
  for (std::size_t i = 0; i < actual.size(); ++i) ++r.confusion[index(actual[i])][index(predicted[i])];
  r.n = actual.size();
  finalize(r);
  return r;
}

inline void check_compatible(const task_spec& tree_task, const task_spec& data_task) {
  if (tree_task.target_labels != data_task.target_labels)
    throw error(error_kind::task_mismatch, "tree and dataset have different target labels");
  for (const auto& f : tree_task.features) {
    const auto* d = data_task.find_feature(f.name);
    if (!d || d->is_numeric() != f.is_numeric())
      throw error(error_kind::task_mismatch, "dataset has no compatible feature '" + f.name + "'");
  }
}

/// Rows that cannot be routed because of a missing value (error policy) are
/// counted as skipped. Throws error_kind::task_mismatch.
inline eval_report evaluate(const decision_tree& tree, const dataset& data, missing_policy policy = missing_policy::error) {
  check_compatible(tree.task, data.task);
  if (data.rows.size() != data.labels.size()) throw error(error_kind::invalid_argument, "rows and labels differ in length");
  const auto& labels = tree.task.target_labels;
  eval_report r;
  r.labels = labels;
  r.confusion.assign(labels.size(), std::vector<std::size_t>(labels.size(), 0));
  r.n = data.rows.size();
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    std::string predicted;
    try {
      predicted = predict(tree, data.rows[i], policy).label;
    } catch (const error& e) {
      if (e.kind() != error_kind::missing_value) throw;
      ++r.skipped;
      continue;
    }
    ++r.confusion[tree.task.label_index(data.labels[i])][tree.task.label_index(predicted)];
  }
  finalize(r);
  return r;
}

inline nlohmann::json report_to_json(const eval_report& r) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i)
    per[r.labels[i]] = {{"precision", r.per_label[i].precision},
                        {"recall", r.per_label[i].recall},
                        {"f1", r.per_label[i].f1},
                        {"support", r.per_label[i].support}};
  return {{"labels", r.labels}, {"confusion", r.confusion}, {"per_label", per}, {"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1}, {"n", r.n},           {"skipped", r.skipped}};
}

inline std::string report_to_table(const eval_report& r) {
  std::size_t w = 5;
  for (const auto& l : r.labels) w = std::max(w, l.size());
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
  };
  std::string out;
  out += "n=" + std::to_string(r.n) + "  skipped=" + std::to_string(r.skipped) +
         "  accuracy=" + detail::format_fixed(r.accuracy, 4) + "  macro_f1=" + detail::format_fixed(r.macro_f1, 4) + "\n\n";
  out += pad("label", w) + "  precision     recall         f1    support\n";
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    const auto& m = r.per_label[i];
    out += pad(r.labels[i], w) + pad(detail::format_fixed(m.precision, 4), 11) + pad(detail::format_fixed(m.recall, 4), 11) +
           pad(detail::format_fixed(m.f1, 4), 11) + pad(std::to_string(m.support), 11) + "\n";
  }
  out += "\nconfusion (rows actual, columns predicted)\n" + pad("", w);
  for (const auto& l : r.labels) out += "  " + pad(l, w);
  out += "\n";
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    out += pad(r.labels[i], w);
    for (std::size_t j = 0; j < r.labels.size(); ++j) out += "  " + pad(std::to_string(r.confusion[i][j]), w);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

inline dataset subset(const dataset& d, const std::vector<std::size_t>& idx) {
  dataset out{d.task, {}, {}};
  for (auto i : idx) {
    out.rows.push_back(d.rows.at(i));
    out.labels.push_back(d.labels.at(i));
  }
  return out;
}

/// k rows without replacement, drawn round-robin over the labels (in schema
/// order) from independently shuffled per-label pools; a label whose pool
/// runs dry is skipped. Throws error_kind::k_too_large.
inline dataset few_shot_sample(const dataset& d, std::size_t k, std::uint64_t seed) {
  if (k > d.rows.size())
    throw error(error_kind::k_too_large, "k=" + std::to_string(k) + " exceeds " + std::to_string(d.rows.size()) + " rows");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> pools(d.task.target_labels.size());
  for (std::size_t i = 0; i < d.labels.size(); ++i) pools.at(d.task.label_index(d.labels[i])).push_back(i);
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);
  std::vector<std::size_t> picked;
  std::vector<std::size_t> cursor(pools.size(), 0);
  while (picked.size() < k) {
    for (std::size_t l = 0; l < pools.size() && picked.size() < k; ++l)
      if (cursor[l] < pools[l].size()) picked.push_back(pools[l][cursor[l]++]);
  }
  std::shuffle(picked.begin(), picked.end(), rng);
  return subset(d, picked);
}

struct train_test {
  dataset train;
  dataset test;
};

/// Seeded shuffle, then the first round(n * test_fraction) rows become the test set.
inline train_test split_train_test(const dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw error(error_kind::invalid_argument, "test fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(d.rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
  return {subset(d, {idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end()}),
          subset(d, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test)})};
}

// ---------------------------------------------------------------------------
// CART

inline constexpr int unlimited_depth = 1 << 20;

namespace detail {

struct cart_split {
  split_rule rule;
  std::string feature;
  double weighted = 0.0;
};

class cart_growth {
public:
  cart_growth(const dataset& d, decision_tree& t) : d_(d), t_(t) {
    for (const auto& l : d.labels) y_.push_back(d.task.label_index(l));
  }

  std::size_t grow(const std::vector<std::size_t>& idx, const branch_context& ctx, int depth) {
    const auto counts = label_counts(idx);
    const auto probs = probability_distribution::from_weights(d_.task.target_labels, counts);
    const double parent = gini(probs);
    if (parent == 0.0) return leaf(probs, leaf_reason::pure);
    if (depth >= t_.config.max_depth) return leaf(probs, leaf_reason::max_depth);
    if (idx.size() < 2) return leaf(probs, leaf_reason::too_small);

    std::optional<cart_split> best;
    for (const auto& f : d_.task.features) {
      auto s = f.is_numeric() ? best_numeric(idx, ctx, f) : best_categorical(idx, ctx, f);
      if (s && (!best || s->weighted < best->weighted)) best = std::move(s);
    }
    if (!best || !(best->weighted < parent - 1e-12)) return leaf(probs, leaf_reason::no_improvement);

    const auto& spec = d_.task.feature(best->feature);
    std::vector<std::size_t> left, right;
    const bool missing_left = missing_go_left(idx, *best);
    for (auto i : idx) {
      const auto* v = value(i, best->feature);
      (v ? present_left(*v, *best) : missing_left) ? left.push_back(i) : right.push_back(i);
    }
    const auto index = t_.nodes.size();
    t_.nodes.emplace_back(internal_node{best->feature, best->rule, 0, 0, probs, best->weighted});
    const auto l = grow(left, apply_split(ctx, spec, best->rule, branch_side::left), depth + 1);
    const auto r = grow(right, apply_split(ctx, spec, best->rule, branch_side::right), depth + 1);
    auto& node = std::get<internal_node>(t_.nodes[index]);
    node.left = l;
    node.right = r;
    return index;
  }

private:
  std::vector<double> label_counts(const std::vector<std::size_t>& idx) const {
    std::vector<double> c(d_.task.target_labels.size(), 0.0);
    for (auto i : idx) c[y_[i]] += 1.0;
    return c;
  }

  std::size_t leaf(const probability_distribution& p, leaf_reason reason) {
    t_.nodes.emplace_back(leaf_node{p.top_label(), p, reason});
    return t_.nodes.size() - 1;
  }

  const cell_value* value(std::size_t i, const std::string& feature) const {
    const auto& r = d_.rows[i];
    const auto it = r.find(feature);
    if (it == r.end() || std::holds_alternative<std::monostate>(it->second)) return nullptr;
    return &it->second;
  }

  static double weighted_gini(const std::vector<double>& l, const std::vector<double>& r) {
    const double nl = std::accumulate(l.begin(), l.end(), 0.0), nr = std::accumulate(r.begin(), r.end(), 0.0);
    auto g = [](const std::vector<double>& c, double n) {
      double s = 0.0;
      for (double x : c) s += (x / n) * (x / n);
      return 1.0 - s;
    };
    return weighted_combine(g(l, nl), nl, g(r, nr), nr);
  }

  // Rows without a value follow the child that has more rows with one.
  bool missing_go_left(const std::vector<std::size_t>& idx, const cart_split& s) const {
    std::size_t l = 0, r = 0;
    for (auto i : idx) {
      const auto* v = value(i, s.feature);
      if (!v) continue;
      (present_left(*v, s) ? l : r) += 1;
    }
    return l >= r;
  }

  static bool present_left(const cell_value& v, const cart_split& s) {
    if (auto* t = std::get_if<threshold_split>(&s.rule)) return std::get<double>(v) <= t->value;
    const auto& g1 = std::get<bipartition>(s.rule).group1;
    return std::find(g1.begin(), g1.end(), std::get<std::string>(v)) != g1.end();
  }

  std::optional<cart_split> best_numeric(const std::vector<std::size_t>& idx, const branch_context& ctx,
                                         const feature_spec& f) const {
    const auto k = d_.task.target_labels.size();
    std::vector<std::pair<double, std::size_t>> present;
    std::vector<double> missing(k, 0.0);
    for (auto i : idx) {
      if (const auto* v = value(i, f.name))
        present.emplace_back(std::get<double>(*v), y_[i]);
      else
        missing[y_[i]] += 1.0;
    }
    if (present.size() < 2) return std::nullopt;
    std::sort(present.begin(), present.end());
    const auto iv = effective_interval(ctx, f);
    std::vector<double> left(k, 0.0), right(k, 0.0);
    for (const auto& [v, y] : present) right[y] += 1.0;
    std::optional<cart_split> best;
    std::size_t n_left = 0;
    for (std::size_t j = 0; j + 1 < present.size(); ++j) {
      left[present[j].second] += 1.0;
      right[present[j].second] -= 1.0;
      ++n_left;
      const double a = present[j].first, b = present[j + 1].first;
      if (a == b) continue;
      const double t = a + (b - a) / 2.0;
      if (!iv.splits_at(t)) continue;
      auto l = left, r = right;
      auto& side = n_left >= present.size() - n_left ? l : r;
      for (std::size_t c = 0; c < k; ++c) side[c] += missing[c];
      const double w = weighted_gini(l, r);
      if (!best || w < best->weighted) best = cart_split{threshold_split{t}, f.name, w};
    }
    return best;
  }

  std::optional<cart_split> best_categorical(const std::vector<std::size_t>& idx, const branch_context& ctx,
                                             const feature_spec& f) const {
    const auto k = d_.task.target_labels.size();
    const auto allowed = allowed_categories(ctx, f);
    std::vector<std::vector<double>> per_cat(allowed.size(), std::vector<double>(k, 0.0));
    std::vector<double> missing(k, 0.0);
    for (auto i : idx) {
      if (const auto* v = value(i, f.name)) {
        const auto it = std::find(allowed.begin(), allowed.end(), std::get<std::string>(*v));
        if (it == allowed.end()) throw error(error_kind::unknown_category, "category outside the reachable set");
        per_cat[static_cast<std::size_t>(it - allowed.begin())][y_[i]] += 1.0;
      } else {
        missing[y_[i]] += 1.0;
      }
    }
    std::vector<std::size_t> seen;  // indices into allowed with rows at this node
    for (std::size_t c = 0; c < allowed.size(); ++c)
      if (std::accumulate(per_cat[c].begin(), per_cat[c].end(), 0.0) > 0.0) seen.push_back(c);
    const auto m = seen.size();
    if (m < 2) return std::nullopt;

    std::optional<cart_split> best;
    // group1 holds allowed[0]; categories without rows here and rows without a
    // value join group1 unless group2 has strictly more rows.
    auto consider = [&](const std::vector<bool>& seen_left) {
      std::vector<double> l(k, 0.0), r(k, 0.0);
      double nl = 0.0, nr = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        auto& side = seen_left[s] ? l : r;
        for (std::size_t c = 0; c < k; ++c) side[c] += per_cat[seen[s]][c];
        (seen_left[s] ? nl : nr) += std::accumulate(per_cat[seen[s]].begin(), per_cat[seen[s]].end(), 0.0);
      }
      const bool left_is_g1 = seen[0] == 0 ? static_cast<bool>(seen_left[0]) : nl >= nr;
      auto g1 = left_is_g1 ? l : r, g2 = left_is_g1 ? r : l;
      const double n1 = left_is_g1 ? nl : nr, n2 = left_is_g1 ? nr : nl;
      const bool extra_g1 = n1 >= n2;
      auto& extra = extra_g1 ? g1 : g2;
      for (std::size_t c = 0; c < k; ++c) extra[c] += missing[c];
      bipartition b;
      std::size_t s = 0;
      for (std::size_t c = 0; c < allowed.size(); ++c) {
        bool in_g1 = extra_g1;
        if (s < m && seen[s] == c) in_g1 = static_cast<bool>(seen_left[s++]) == left_is_g1;
        (in_g1 ? b.group1 : b.group2).push_back(allowed[c]);
      }
      const double w = weighted_gini(g1, g2);
      if (!best || w < best->weighted) best = cart_split{std::move(b), f.name, w};
    };

    if (m <= 12) {
      for (std::uint32_t mask = 0; mask + 1 < (1u << (m - 1)); ++mask) {
        std::vector<bool> seen_left(m, false);
        seen_left[0] = true;
        for (std::size_t s = 1; s < m; ++s) seen_left[s] = (mask >> (s - 1)) & 1u;
        consider(seen_left);
      }
    } else {
      for (std::size_t s = 0; s < m; ++s) {
        std::vector<bool> one(m, false);
        one[s] = true;
        consider(one);
      }
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto rate = [&](std::size_t s) {
        const auto& c = per_cat[seen[s]];
        return c[0] / std::accumulate(c.begin(), c.end(), 0.0);
      };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rate(a) < rate(b); });
      for (std::size_t cut = 1; cut < m; ++cut) {
        std::vector<bool> prefix(m, false);
        for (std::size_t q = 0; q < cut; ++q) prefix[order[q]] = true;
        consider(prefix);
      }
    }
    return best;
  }

  const dataset& d_;
  decision_tree& t_;
  std::vector<std::size_t> y_;
};

}  // namespace detail

/// Greedy CART on weighted child Gini. Ties keep the earliest feature in
/// schema order, then the smallest threshold or first enumerated grouping.
/// Throws error_kind::empty_dataset.
inline decision_tree cart_fit(const dataset& d, int max_depth) {
  if (d.rows.empty()) throw error(error_kind::empty_dataset, "cannot fit a tree on an empty dataset");
  if (max_depth < 1) throw error(error_kind::invalid_argument, "max_depth must be at least 1");
  if (d.rows.size() != d.labels.size()) throw error(error_kind::invalid_argument, "rows and labels differ in length");
  decision_tree t;
  t.task = d.task;
  t.config.max_depth = max_depth;
  t.config.leaf_prob_threshold = 1.0;
  t.config.concurrency = 1;
  t.meta.advisor = "cart";
  std::vector<std::size_t> idx(d.rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  detail::cart_growth(d, t).grow(idx, branch_context{}, 0);
  return t;
}

}  // namespace ztree
