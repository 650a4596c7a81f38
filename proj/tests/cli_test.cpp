#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

#include "support.hpp"

using namespace ztree;
using namespace ztree::testing;

namespace {

struct run_result {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell, capturing stdout only.
run_result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(ZTREE_CLI) + "' " + args + " 2>/dev/null";
  run_result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::string fixtures = ZTREE_FIXTURES;
const std::string schema = fixtures + "/diabetes_schema.json";
const std::string model = fixtures + "/diabetes_model.json";

std::string oracle_build(const std::string& extra = "") {
  return "build --schema '" + schema + "' --backend oracle --oracle-model '" + model + "' --max-depth 3 " + extra;
}

// Tree plus a labelled CSV sampled from the fixture model.
struct workspace {
  temp_dir dir;
  std::string tree = (dir / "tree.json").string();
  std::string data = (dir / "data.csv").string();

  workspace() {
    EXPECT_EQ(run(oracle_build("--out '" + tree + "'")).code, 0);
    const auto m = load_model(model);
    const auto s = sample_rows(m, 200, 5);
    std::ofstream(data) << to_csv(dataset{m.task, s.rows, s.labels});
  }
};

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("build --backend oracle").code, 2);  // --schema is required
}

TEST(Cli, OracleBuildIsByteIdentical) {
  auto a = run(oracle_build());
  auto b = run(oracle_build("--concurrency 8"));
  ASSERT_EQ(a.code, 0);
  EXPECT_FALSE(a.out.empty());
  auto t1 = deserialize(a.out);
  auto t2 = deserialize(b.out);
  t2.config.concurrency = t1.config.concurrency;
  EXPECT_EQ(serialize(t1), serialize(t2));
  EXPECT_EQ(run(oracle_build()).out, a.out);
  EXPECT_EQ(t1.meta.advisor, "oracle");
  EXPECT_FALSE(t1.meta.timestamp);
}

TEST(Cli, TimestampFromEnvironment) {
  auto r = run(oracle_build(), "SOURCE_DATE_EPOCH=86400");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(deserialize(r.out).meta.timestamp, std::optional<std::string>("1970-01-02T00:00:00Z"));
  auto flag = run(oracle_build("--timestamp 2024-05-01T00:00:00Z"));
  EXPECT_EQ(deserialize(flag.out).meta.timestamp, std::optional<std::string>("2024-05-01T00:00:00Z"));
}

TEST(Cli, ConfigErrors) {
  EXPECT_EQ(run("build --schema '" + schema + "' --backend http --model x", "env -u ZTREE_API_KEY").code, 2);
  EXPECT_EQ(run("build --schema '" + schema + "' --backend oracle").code, 2);  // no model
  EXPECT_EQ(run("build --schema /nonexistent.json --backend oracle --oracle-model '" + model + "'").code, 2);
  EXPECT_EQ(run(oracle_build("--prob-threshold 0.3")).code, 2);
  EXPECT_EQ(run("build --schema '" + schema + "' --backend carrier-pigeon").code, 2);
}

TEST(Cli, ReplayMissIsTransportFailure) {
  temp_dir dir;
  auto r = run("build --schema '" + schema + "' --backend replay --record-dir '" + dir.path().string() + "'");
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, UnreachableServerIsExitThree) {
  // nothing listens on port 9; connection failures are transport errors
  auto r = run("build --schema '" + schema + "' --backend http --base-url http://127.0.0.1:9/v1 --http-attempts 1",
               "ZTREE_API_KEY=sk-test");
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, InvalidTreeIsExitFour) {
  temp_dir dir;
  std::ofstream(dir / "bad.json") << "{\"format_version\": 1, \"root\": ";
  EXPECT_EQ(run("render --tree '" + (dir / "bad.json").string() + "'").code, 4);
  std::ofstream(dir / "v2.json") << "{\"format_version\": 2}";
  EXPECT_EQ(run("render --tree '" + (dir / "v2.json").string() + "'").code, 4);
}

TEST(Cli, RenderTextAndDot) {
  workspace w;
  auto dot = run("render --style dot --tree '" + w.tree + "'");
  ASSERT_EQ(dot.code, 0);
  EXPECT_EQ(dot.out.rfind("digraph", 0), 0u);
  auto text = run("render --tree '" + w.tree + "'");
  EXPECT_EQ(text.out, render(load_tree(w.tree), render_style::text));
}

TEST(Cli, PredictAppendsColumns) {
  workspace w;
  auto r = run("predict --tree '" + w.tree + "' --data '" + w.data + "' --explain");
  ASSERT_EQ(r.code, 0);
  auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 201u);
  const auto& header = rows[0];
  const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), "predicted") - header.begin());
  ASSERT_LT(col, header.size());
  EXPECT_EQ(header.back(), "path");
  const auto tree = load_tree(w.tree);
  EXPECT_EQ(header.size(), col + tree.task.target_labels.size() + 2);
  const auto load = load_csv(w.data, tree.task);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(rows[i + 1][col], predict(tree, load.data.rows[i]).label);
  EXPECT_NE(rows[1].back().find(" <= "), std::string::npos);
}

TEST(Cli, PredictSkips) {
  workspace w;
  const auto tree = load_tree(w.tree);
  const auto& root = std::get<internal_node>(tree.nodes[0]);
  // blank out the root feature in one row
  auto csv = parse_csv(slurp(w.data));
  std::size_t col = 0;
  while (normalize_identifier(csv[0][col]) != root.feature) ++col;
  csv[3][col] = "";
  std::string text;
  for (const auto& rec : csv) text += csv_line(rec);
  const auto path = (w.dir / "holes.csv").string();
  std::ofstream(path) << text;
  const auto out = (w.dir / "pred.csv").string();

  EXPECT_EQ(run("predict --tree '" + w.tree + "' --data '" + path + "' --out '" + out + "'").code, 4);
  EXPECT_FALSE(std::filesystem::exists(out));
  EXPECT_EQ(run("predict --tree '" + w.tree + "' --data '" + path + "' --out '" + out + "' --allow-skips").code, 0);
  auto written = parse_csv(slurp(out));
  ASSERT_EQ(written.size(), 201u);
  EXPECT_EQ(written[3].back(), "");  // skipped rows stay, blank
  EXPECT_EQ(run("predict --tree '" + w.tree + "' --data '" + path + "' --out '" + out + "' --missing majority").code, 0);
  EXPECT_EQ(parse_csv(slurp(out)).size(), 201u);
}

TEST(Cli, EvalWithCartBaseline) {
  workspace w;
  const std::string args = "eval --tree '" + w.tree + "' --data '" + w.data +
                           "' --test-fraction 0.5 --baseline cart --shots 16 --seed 3 --format json";
  auto a = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(run(args).out, a.out);
  auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["zero_shot"]["n"], 100);
  EXPECT_EQ(j["cart"]["n"], 100);
  EXPECT_NE(run(args + " --seed 4").out, a.out);
  auto table = run("eval --tree '" + w.tree + "' --data '" + w.data + "'");
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("accuracy="), std::string::npos);
}

TEST(Cli, EvalRejectsIncompatibleData) {
  workspace w;
  const auto path = (w.dir / "other.csv").string();
  std::ofstream(path) << "a,b\n1,2\n";
  EXPECT_EQ(run("eval --tree '" + w.tree + "' --data '" + path + "'").code, 4);
}

TEST(Cli, DemoOracleWritesArtifacts) {
  temp_dir dir;
  auto r = run("demo-oracle --seed 2 --max-depth 3 --samples 500 --shots 16 --out-dir '" + dir.path().string() + "'");
  ASSERT_EQ(r.code, 0);
  for (auto f : {"model.json", "schema.json", "tree.json", "train.csv", "test.csv", "report.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_NE(r.out.find("bayes"), std::string::npos);
  EXPECT_NO_THROW(load_tree((dir / "tree.json").string()));
}
