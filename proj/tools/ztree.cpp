// ztree: build, apply, evaluate and draw zero-shot decision trees.
//
// Exit codes: 0 ok, 2 configuration, 3 transport or authentication,
// 4 build, format or schema mismatch.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ztree/httplib_transport.hpp"
#include "ztree/ztree.hpp"

namespace fs = std::filesystem;
using namespace ztree;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_transport = 3;
constexpr int exit_build = 4;

// Raised for problems with flags, environment or input configuration files.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(const error& e) {
  switch (e.kind()) {
    case error_kind::transport:
    case error_kind::auth:
    case error_kind::replay_miss:
      return exit_transport;
    case error_kind::invalid_argument:
    case error_kind::empty_identifier:
    case error_kind::missing_placeholder:
      return exit_config;
    default:
      return exit_build;
  }
}

template <class F>
auto configuring(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw config_error(what + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes next to the destination first so a failure never leaves a partial file.
void write_output(const std::optional<std::string>& path, const std::string& content) {
  if (!path || *path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  const fs::path target(*path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw config_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw config_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, target);
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::optional<std::string> build_timestamp(const std::optional<std::string>& flag) {
  if (flag) return flag;
  const auto epoch = env("SOURCE_DATE_EPOCH");
  if (!epoch) return std::nullopt;
  std::time_t t{};
  try {
    t = static_cast<std::time_t>(std::stoll(*epoch));
  } catch (const std::exception&) {
    throw config_error("SOURCE_DATE_EPOCH is not an integer");
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

missing_policy parse_policy(const std::string& s) {
  if (s == "error") return missing_policy::error;
  if (s == "majority") return missing_policy::majority_branch;
  throw config_error("unknown missing-value policy '" + s + "'");
}

decision_tree read_tree(const std::string& path) {
  if (!fs::exists(path)) throw config_error("tree file '" + path + "' does not exist");
  return load_tree(path);
}

// ---------------------------------------------------------------------------
// build

struct build_options {
  std::string schema;
  std::string backend = "oracle";
  std::optional<std::string> oracle_model;
  std::optional<std::string> record_dir;
  std::optional<std::string> cache_dir;
  std::optional<std::string> templates_dir;
  std::optional<std::string> base_url;
  std::optional<std::string> timestamp;
  std::optional<std::string> out;
  std::string model_name = completion_params{}.model_name;
  double temperature = 0.0;
  int max_tokens = 512;
  int max_depth = 5;
  double prob_threshold = 0.9;
  int retries = 3;
  int http_attempts = 3;
  int concurrency = 4;
  std::uint64_t seed = 0;
  bool verbose = false;
};

int run_build(const build_options& o) {
  const auto task = configuring("schema", [&] { return load_task(o.schema); });
  build_config cfg{o.max_depth, o.prob_threshold, o.retries, o.concurrency};
  configuring("build settings", [&] {
    validate(cfg, task.target_labels.size());
    return 0;
  });

  decision_tree tree;
  if (o.backend == "oracle") {
    if (!o.oracle_model) throw config_error("--backend oracle needs --oracle-model");
    auto model = configuring("oracle model", [&] { return load_model(*o.oracle_model); });
    if (model.task.features != task.features || model.task.target_labels != task.target_labels)
      throw config_error("oracle model does not describe the schema's features and labels");
    oracle_advisor adv(std::move(model));
    tree = build_tree(task, adv, cfg);
    tree.meta.model_name = "oracle";
  } else if (o.backend == "http" || o.backend == "replay") {
    completion_params params{o.model_name, o.temperature, o.max_tokens};
    auto templates = configuring("templates", [&] {
      return o.templates_dir ? template_set::from_directory(*o.templates_dir) : template_set{};
    });
    gateway_options gopts;
    gopts.max_attempts = o.http_attempts;
    gopts.max_inflight = std::max(1, o.concurrency);
    if (o.cache_dir) gopts.cache_dir = fs::path(*o.cache_dir);

    std::unique_ptr<completion_backend> backend;
    if (o.backend == "http") {
      const auto key = env("ZTREE_API_KEY");
      if (!key) throw config_error("--backend http needs ZTREE_API_KEY in the environment");
      const auto url = o.base_url ? *o.base_url : env("ZTREE_BASE_URL").value_or("https://api.openai.com/v1");
      if (o.record_dir) gopts.record_dir = fs::path(*o.record_dir);
      backend = std::make_unique<http_backend>(std::make_shared<httplib_transport>(), url, *key);
    } else {
      if (!o.record_dir) throw config_error("--backend replay needs --record-dir");
      backend = configuring("replay", [&] { return std::make_unique<replay_backend>(fs::path(*o.record_dir)); });
      gopts.initial_backoff = std::chrono::milliseconds(0);
    }
    llm_gateway gateway(std::move(backend), gopts);
    text_advisor adv(gateway, prompt_forge(std::move(templates), params), cfg.retry_limit);
    tree = build_tree(task, adv, cfg);
    tree.meta.model_name = params.model_name;
    tree.meta.completions = gateway.stats().requests;
    tree.meta.cache_hits = gateway.stats().cache_hits;
  } else {
    throw config_error("unknown backend '" + o.backend + "' (oracle, http, replay)");
  }
  tree.meta.timestamp = build_timestamp(o.timestamp);

  write_output(o.out, serialize(tree));
  if (o.verbose)
    std::cerr << "built tree: depth " << depth(tree) << ", " << leaf_count(tree) << " leaves, "
              << tree.meta.advisor_queries << " advisor queries, " << tree.meta.completions << " completions ("
              << tree.meta.cache_hits << " cached)\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// predict

struct predict_options {
  std::string tree;
  std::string data;
  std::optional<std::string> out;
  std::string missing = "error";
  bool explain = false;
  bool allow_skips = false;
};

std::string path_text(const decision_tree& tree, const std::vector<path_step>& path) {
  std::vector<std::string> steps;
  for (const auto& s : path) {
    const auto& n = std::get<internal_node>(tree.nodes.at(s.node));
    const auto [l, r] = division_texts(split{n.feature, n.rule});
    steps.push_back(s.side == branch_side::left ? l : r);
  }
  return detail::join(steps, " AND ");
}

int run_predict(const predict_options& o) {
  const auto policy = parse_policy(o.missing);
  const auto tree = read_tree(o.tree);
  const auto text = read_file(o.data);
  const auto csv = bind_csv(text, tree.task, false);

  std::vector<std::string> raw_header = parse_csv(text).front();
  raw_header.push_back("predicted");
  for (const auto& l : tree.task.target_labels) raw_header.push_back("p_" + l);
  if (o.explain) raw_header.push_back("path");
  std::string out = csv_line(raw_header);

  std::vector<std::string> skips;
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    auto fields = csv.records[r];
    fields.resize(csv.header.size());
    auto parsed = parse_record(csv, tree.task, csv.records[r], default_missing_tokens());
    std::optional<prediction> p;
    if (auto* problem = std::get_if<std::string>(&parsed)) {
      skips.push_back("line " + std::to_string(r + 2) + ": " + *problem);
    } else {
      try {
        p = predict(tree, std::get<row>(parsed), policy);
      } catch (const error& e) {
        if (e.kind() != error_kind::missing_value && e.kind() != error_kind::unknown_category) throw;
        skips.push_back("line " + std::to_string(r + 2) + ": " + e.what());
      }
    }
    fields.push_back(p ? p->label : "");
    for (std::size_t i = 0; i < tree.task.target_labels.size(); ++i)
      fields.push_back(p ? detail::format_number(p->probs[i]) : "");
    if (o.explain) fields.push_back(p ? path_text(tree, p->path) : "");
    out += csv_line(fields);
  }

  if (!skips.empty()) {
    std::cerr << "skipped " << skips.size() << " of " << csv.records.size() << " rows:\n";
    for (const auto& s : skips) std::cerr << "  " << s << "\n";
    if (!o.allow_skips) {
      std::cerr << "no output written; pass --allow-skips to write predictions with blank skipped rows\n";
      return exit_build;
    }
  }
  write_output(o.out, out);
  return exit_ok;
}

// ---------------------------------------------------------------------------
// eval

struct eval_options {
  std::string tree;
  std::string data;
  std::optional<std::string> train;
  std::optional<double> test_fraction;
  std::optional<std::string> baseline;
  std::optional<int> shots;
  int max_depth = 5;
  std::uint64_t seed = 0;
  std::string missing = "error";
  std::string format = "table";
  std::optional<std::string> json_out;
  std::optional<std::string> out;
};

void report_issues(const std::string& what, const csv_load& l) {
  if (l.issues.empty()) return;
  std::cerr << what << ": dropped " << l.issues.size() << " rows\n";
  for (const auto& i : l.issues) std::cerr << "  line " << i.line << ": " << i.message << "\n";
}

int run_eval(const eval_options& o) {
  const auto policy = parse_policy(o.missing);
  if (o.format != "table" && o.format != "json") throw config_error("--format must be table or json");
  if (o.baseline && *o.baseline != "cart") throw config_error("unknown baseline '" + *o.baseline + "' (cart)");
  if (o.baseline && !o.train && !o.test_fraction)
    throw config_error("--baseline needs training rows: pass --train or --test-fraction");
  if (o.train && o.test_fraction) throw config_error("--train and --test-fraction are mutually exclusive");

  const auto tree = read_tree(o.tree);
  auto loaded = load_csv(o.data, tree.task);
  report_issues(o.data, loaded);

  dataset test = loaded.data;
  std::optional<dataset> train;
  if (o.test_fraction) {
    auto parts = split_train_test(loaded.data, *o.test_fraction, o.seed);
    test = std::move(parts.test);
    train = std::move(parts.train);
  } else if (o.train) {
    auto t = load_csv(*o.train, tree.task);
    report_issues(*o.train, t);
    train = std::move(t.data);
  }

  const auto zero_shot = evaluate(tree, test, policy);
  nlohmann::json doc{{"zero_shot", report_to_json(zero_shot)}};
  std::string table = "zero-shot tree (" + tree.meta.advisor + ", depth " + std::to_string(depth(tree)) + ")\n" +
                      report_to_table(zero_shot);

  if (o.baseline) {
    dataset fit_on = *train;
    if (o.shots) fit_on = few_shot_sample(*train, static_cast<std::size_t>(*o.shots), o.seed);
    const auto cart = cart_fit(fit_on, o.max_depth);
    const auto cart_report = evaluate(cart, test, missing_policy::majority_branch);
    doc["cart"] = report_to_json(cart_report);
    doc["protocol"] = {{"train_rows", fit_on.rows.size()},
                       {"test_rows", test.rows.size()},
                       {"shots", o.shots ? nlohmann::json(*o.shots) : nlohmann::json(nullptr)},
                       {"max_depth", o.max_depth},
                       {"seed", o.seed}};
    table += "\nCART baseline (" + std::to_string(fit_on.rows.size()) + " training rows, max depth " +
             std::to_string(o.max_depth) + ")\n" + report_to_table(cart_report);
    table += "\n" + std::string("model          accuracy   macro_f1\n") +
             "zero-shot      " + detail::format_fixed(zero_shot.accuracy, 4) + "     " +
             detail::format_fixed(zero_shot.macro_f1, 4) + "\n" + "cart           " +
             detail::format_fixed(cart_report.accuracy, 4) + "     " + detail::format_fixed(cart_report.macro_f1, 4) + "\n";
  }

  if (o.json_out) write_output(o.json_out, doc.dump(2) + "\n");
  write_output(o.out, o.format == "json" ? doc.dump(2) + "\n" : table);
  return exit_ok;
}

// ---------------------------------------------------------------------------
// render

int run_render(const std::string& tree_path, const std::string& style, const std::optional<std::string>& out) {
  if (style != "text" && style != "dot") throw config_error("--style must be text or dot");
  const auto tree = read_tree(tree_path);
  write_output(out, render(tree, style == "dot" ? render_style::dot : render_style::text));
  return exit_ok;
}

// ---------------------------------------------------------------------------
// demo-oracle

struct demo_options {
  std::optional<std::string> model;
  std::uint64_t seed = 1;
  int max_depth = 7;
  std::size_t samples = 10000;
  int shots = 32;
  std::optional<std::string> out_dir;
};

int run_demo(const demo_options& o) {
  const auto model = o.model ? configuring("oracle model", [&] { return load_model(*o.model); }) : generate_model(o.seed);
  oracle_advisor adv(model);
  build_config cfg;
  cfg.max_depth = o.max_depth;
  auto tree = build_tree(model.task, adv, cfg);
  tree.meta.model_name = "oracle";

  const auto fresh = sample_rows(model, o.samples, o.seed + 1);
  const dataset test{model.task, fresh.rows, fresh.labels};
  const auto pool = sample_rows(model, std::max<std::size_t>(1000, static_cast<std::size_t>(o.shots)), o.seed + 2);
  const auto train = few_shot_sample(dataset{model.task, pool.rows, pool.labels}, static_cast<std::size_t>(o.shots), o.seed);
  const auto cart = cart_fit(train, o.max_depth);
  const auto zs = evaluate(tree, test);
  const auto cr = evaluate(cart, test);
  const double bayes = bayes_accuracy(model, o.samples, o.seed + 3);

  std::cout << "task: " << model.task.problem << "\n"
            << "features: " << model.task.features.size() << ", test rows: " << test.rows.size()
            << ", CART training rows: " << train.rows.size() << "\n\n"
            << render(tree, render_style::text) << "\n"
            << "model                accuracy   macro_f1\n"
            << "bayes (reference)    " << detail::format_fixed(bayes, 4) << "\n"
            << "zero-shot oracle     " << detail::format_fixed(zs.accuracy, 4) << "     " << detail::format_fixed(zs.macro_f1, 4) << "\n"
            << "cart " << std::to_string(o.shots) << "-shot" << std::string(o.shots < 10 ? 10 : 9, ' ')
            << detail::format_fixed(cr.accuracy, 4) << "     " << detail::format_fixed(cr.macro_f1, 4) << "\n";

  if (o.out_dir) {
    const fs::path dir(*o.out_dir);
    write_output((dir / "model.json").string(), model_to_json(model).dump(2) + "\n");
    write_output((dir / "schema.json").string(), task_to_json(model.task).dump(2) + "\n");
    write_output((dir / "tree.json").string(), serialize(tree));
    write_output((dir / "test.csv").string(), to_csv(test));
    write_output((dir / "train.csv").string(), to_csv(train));
    nlohmann::json doc{{"bayes_accuracy", bayes}, {"zero_shot", report_to_json(zs)}, {"cart", report_to_json(cr)}};
    write_output((dir / "report.json").string(), doc.dump(2) + "\n");
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot decision trees from a language model or a synthetic knowledge oracle"};
  app.require_subcommand(1);

  build_options b;
  auto* build = app.add_subcommand("build", "Build a tree from a schema");
  build->add_option("--schema", b.schema, "Task schema JSON")->required();
  build->add_option("--backend", b.backend, "oracle, http or replay")->capture_default_str();
  build->add_option("--oracle-model", b.oracle_model, "Knowledge model JSON (oracle backend)");
  build->add_option("--record-dir", b.record_dir, "Recording directory: written by http, read by replay");
  build->add_option("--cache-dir", b.cache_dir, "Completion cache directory");
  build->add_option("--templates", b.templates_dir, "Directory overriding prompt templates (<id>.txt)");
  build->add_option("--base-url", b.base_url, "Endpoint base URL (default $ZTREE_BASE_URL or OpenAI)");
  build->add_option("--model", b.model_name, "Model name sent to the endpoint")->capture_default_str();
  build->add_option("--temperature", b.temperature)->capture_default_str();
  build->add_option("--max-tokens", b.max_tokens)->capture_default_str();
  build->add_option("--max-depth", b.max_depth)->capture_default_str();
  build->add_option("--prob-threshold", b.prob_threshold, "Leaf confidence threshold")->capture_default_str();
  build->add_option("--retries", b.retries, "Attempts per advisor question")->capture_default_str();
  build->add_option("--http-attempts", b.http_attempts, "Attempts per HTTP request")->capture_default_str();
  build->add_option("--concurrency", b.concurrency, "Parallel advisor queries per node")->capture_default_str();
  build->add_option("--seed", b.seed, "Seed (builds are deterministic; recorded for provenance)");
  build->add_option("--timestamp", b.timestamp, "Timestamp stored in the tree (default $SOURCE_DATE_EPOCH or none)");
  build->add_option("--out", b.out, "Output tree JSON (default stdout)");
  build->add_flag("-v,--verbose", b.verbose);

  predict_options p;
  auto* pred = app.add_subcommand("predict", "Append predictions to a CSV");
  pred->add_option("--tree", p.tree)->required();
  pred->add_option("--data", p.data, "Input CSV")->required();
  pred->add_option("--out", p.out, "Output CSV (default stdout)");
  pred->add_option("--missing", p.missing, "error or majority")->capture_default_str();
  pred->add_flag("--explain", p.explain, "Add a path column");
  pred->add_flag("--allow-skips", p.allow_skips, "Write output even when rows were skipped");

  eval_options e;
  auto* ev = app.add_subcommand("eval", "Evaluate a tree on a labelled CSV");
  ev->add_option("--tree", e.tree)->required();
  ev->add_option("--data", e.data, "Labelled CSV")->required();
  ev->add_option("--train", e.train, "Training CSV for the baseline");
  ev->add_option("--test-fraction", e.test_fraction, "Hold out this fraction of --data as the test set");
  ev->add_option("--baseline", e.baseline, "cart");
  ev->add_option("--shots", e.shots, "Few-shot training sample size for the baseline");
  ev->add_option("--max-depth", e.max_depth, "Baseline depth")->capture_default_str();
  ev->add_option("--seed", e.seed)->capture_default_str();
  ev->add_option("--missing", e.missing, "error or majority")->capture_default_str();
  ev->add_option("--format", e.format, "table or json")->capture_default_str();
  ev->add_option("--json", e.json_out, "Also write the JSON report here");
  ev->add_option("--out", e.out, "Report destination (default stdout)");

  std::string render_tree, style = "text";
  std::optional<std::string> render_out;
  auto* rend = app.add_subcommand("render", "Draw a tree as text or DOT");
  rend->add_option("--tree", render_tree)->required();
  rend->add_option("--style", style, "text or dot")->capture_default_str();
  rend->add_option("--out", render_out);

  demo_options d;
  auto* demo = app.add_subcommand("demo-oracle", "Oracle build versus few-shot CART on a synthetic task");
  demo->add_option("--model", d.model, "Knowledge model JSON (default: generated from --seed)");
  demo->add_option("--seed", d.seed)->capture_default_str();
  demo->add_option("--max-depth", d.max_depth)->capture_default_str();
  demo->add_option("--samples", d.samples, "Test rows")->capture_default_str();
  demo->add_option("--shots", d.shots, "CART training rows")->capture_default_str();
  demo->add_option("--out-dir", d.out_dir, "Write model, tree, data and report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? exit_ok : exit_config;
  }

  try {
    if (*build) return run_build(b);
    if (*pred) return run_predict(p);
    if (*ev) return run_eval(e);
    if (*rend) return run_render(render_tree, style, render_out);
    if (*demo) return run_demo(d);
  } catch (const config_error& err) {
    std::cerr << "ztree: " << err.what() << "\n";
    return exit_config;
  } catch (const format_error& err) {
    std::cerr << "ztree: format error at " << err.what() << "\n";
    return exit_build;
  } catch (const error& err) {
    std::cerr << "ztree: " << err.what() << "\n";
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "ztree: " << err.what() << "\n";
    return exit_build;
  }
  return exit_config;
}
