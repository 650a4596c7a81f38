#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace ztree;
using namespace ztree::testing;

namespace {

const std::vector<std::string> colors{"red", "green", "blue"};

}  // namespace

TEST(ExtractNumeric, OutputLine) {
  auto r = extract_numeric("I would split at the midpoint.\nOutput: 15.5");
  ASSERT_TRUE(r.has_value());
  EXPECT_DOUBLE_EQ(*r.value, 15.5);
  EXPECT_EQ(r.method, parse_method::deterministic);
}

TEST(ExtractNumeric, LastOutputWins) {
  auto r = extract_numeric("Output: 3\nActually, on reflection.\nOutput: 4");
  ASSERT_TRUE(r.has_value());
  EXPECT_DOUBLE_EQ(*r.value, 4.0);
}

TEST(ExtractNumeric, Variants) {
  EXPECT_DOUBLE_EQ(*extract_numeric("output: -2.25").value, -2.25);
  EXPECT_DOUBLE_EQ(*extract_numeric("**Output:** 120").value, 120.0);
  EXPECT_DOUBLE_EQ(*extract_numeric("Output:\n\n  42\n").value, 42.0);
  EXPECT_DOUBLE_EQ(*extract_numeric("7").value, 7.0);
  EXPECT_DOUBLE_EQ(*extract_numeric("A threshold of 126 mg/dL is standard.").value, 126.0);
}

TEST(ExtractNumeric, Rejects) {
  EXPECT_FALSE(extract_numeric("Nothing").has_value());
  EXPECT_FALSE(extract_numeric("Output: Nothing.").has_value());
  EXPECT_FALSE(extract_numeric("Output: between 3 and 4").has_value());
  EXPECT_FALSE(extract_numeric("Output: x2").has_value());
  EXPECT_FALSE(extract_numeric("no number here").has_value());
  EXPECT_FALSE(extract_numeric("between 10 and 20").has_value());
  EXPECT_FALSE(extract_numeric("").has_value());
}

TEST(ExtractNumeric, IntegerDtype) {
  EXPECT_DOUBLE_EQ(*extract_numeric("Output: 30", numeric_dtype::integer).value, 30.0);
  EXPECT_DOUBLE_EQ(*extract_numeric("Output: 30.0", numeric_dtype::integer).value, 30.0);
  EXPECT_FALSE(extract_numeric("Output: 30.5", numeric_dtype::integer).has_value());
}

TEST(ExtractProbability, Values) {
  EXPECT_DOUBLE_EQ(*extract_probability("Output: 0.8").value, 0.8);
  EXPECT_DOUBLE_EQ(*extract_probability("Output: 80%").value, 0.8);
  EXPECT_DOUBLE_EQ(*extract_probability("Output: 0").value, 0.0);
  EXPECT_DOUBLE_EQ(*extract_probability("Output: 1").value, 1.0);
  EXPECT_FALSE(extract_probability("Output: 1.2").has_value());
  EXPECT_FALSE(extract_probability("Output: -0.1").has_value());
  EXPECT_FALSE(extract_probability("Nothing").has_value());
}

TEST(ExtractBipartition, WorkedExample) {
  auto r = extract_bipartition("Output: red, green;;blue", colors);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r.value->group1, (std::vector<std::string>{"red", "green"}));
  EXPECT_EQ(r.value->group2, (std::vector<std::string>{"blue"}));
}

TEST(ExtractBipartition, OrderFollowsAllowed) {
  auto r = extract_bipartition("Output: blue ;; green, red", colors);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r.value->group1, (std::vector<std::string>{"blue"}));
  EXPECT_EQ(r.value->group2, (std::vector<std::string>{"red", "green"}));
}

TEST(ExtractBipartition, TolerantSpelling) {
  auto r = extract_bipartition("Output: [Red, 'Green'];;[BLUE]", colors);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r.value->group2, (std::vector<std::string>{"blue"}));
}

TEST(ExtractBipartition, Rejects) {
  EXPECT_FALSE(extract_bipartition("Output: red;;green", colors).has_value());              // blue missing
  EXPECT_FALSE(extract_bipartition("Output: red, green;;green, blue", colors).has_value());  // overlap
  EXPECT_FALSE(extract_bipartition("Output: red, green, blue;;", colors).has_value());       // empty group
  EXPECT_FALSE(extract_bipartition("Output: red;;green;;blue", colors).has_value());
  EXPECT_FALSE(extract_bipartition("Output: red, purple;;green, blue", colors).has_value());
  EXPECT_FALSE(extract_bipartition("Output: red, green, blue", colors).has_value());
  EXPECT_FALSE(extract_bipartition("Nothing", colors).has_value());
  EXPECT_FALSE(extract_bipartition("red, green or blue", colors).has_value());
}

TEST(ExtractBipartition, FuzzNeverInvalid) {
  const std::vector<std::string> pieces{"red", "green", "blue", "Red", "purple", ",", ", ", ";;", ";", " ",
                                        "\n", "Output:", "output: ", "Nothing", "[", "]", "'", "\"", "*", "red_2",
                                        "", "9", ".", ";;;", "GREEN", " blue "};
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(0, 14), pick(0, pieces.size() - 1);
  int accepted = 0;
  for (int i = 0; i < 100000; ++i) {
    std::string s;
    if (i % 3 == 0) s = "Output: ";
    for (std::size_t k = len(rng); k > 0; --k) s += pieces[pick(rng)];
    auto r = extract_bipartition(s, colors);
    if (!r.has_value()) continue;
    ++accepted;
    ASSERT_TRUE(partitions(*r.value, colors)) << s;
  }
  EXPECT_GT(accepted, 0);
}

TEST(ParseWithFallback, DeterministicFirst) {
  scripted_completer llm([](const chat_prompt&) { return std::string("Output: 99"); });
  prompt_forge forge;
  auto r = parse_with_fallback(prompt_forge::parse_kind::numeric, "Output: 12", {.feature = "age"},
                               [](const std::string& t) { return extract_numeric(t); }, forge, llm);
  EXPECT_DOUBLE_EQ(*r.value, 12.0);
  EXPECT_EQ(r.method, parse_method::deterministic);
  EXPECT_TRUE(llm.prompts.empty());
}

TEST(ParseWithFallback, AsksParser) {
  scripted_completer llm([](const chat_prompt&) { return std::string("Output: 50"); });
  prompt_forge forge;
  const std::string reply = "Somewhere around fifty years seems right.";
  auto r = parse_with_fallback(prompt_forge::parse_kind::numeric, reply, {.feature = "age"},
                               [](const std::string& t) { return extract_numeric(t); }, forge, llm);
  ASSERT_TRUE(r.has_value());
  EXPECT_DOUBLE_EQ(*r.value, 50.0);
  EXPECT_EQ(r.method, parse_method::llm_assisted);
  ASSERT_EQ(llm.prompts.size(), 1u);
  EXPECT_NE(llm.prompts[0].user().find(reply), std::string::npos);
  EXPECT_NE(llm.prompts[0].user().find("age"), std::string::npos);
}

TEST(ParseWithFallback, ParserSaysNothing) {
  scripted_completer llm([](const chat_prompt&) { return std::string("Nothing"); });
  prompt_forge forge;
  auto r = parse_with_fallback(
      prompt_forge::parse_kind::categorical, "I cannot decide.", {.feature = "color", .possible_values = colors},
      [](const std::string& t) { return extract_bipartition(t, colors); }, forge, llm);
  EXPECT_FALSE(r.has_value());
  EXPECT_EQ(r.method, parse_method::llm_assisted);
}

TEST(ParseWithFallback, TransportErrorsPropagate) {
  scripted_completer llm([](const chat_prompt&) -> std::string { throw transport_error("down"); });
  prompt_forge forge;
  EXPECT_EQ(kind_of([&] {
              parse_with_fallback(prompt_forge::parse_kind::numeric, "fifty", {.feature = "age"},
                                  [](const std::string& t) { return extract_numeric(t); }, forge, llm);
            }),
            error_kind::transport);
}
