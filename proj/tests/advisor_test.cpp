#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace ztree;
using namespace ztree::testing;

namespace {

bool has(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

bool is_parser(const chat_prompt& p) { return has(p.system(), "extracting information"); }

// Which template produced the prompt.
std::string prompt_kind(const chat_prompt& p) {
  if (is_parser(p)) {
    if (has(p.system(), "label probability")) return "parse_probability";
    if (has(p.user(), "categorical feature")) return "parse_categorical";
    return "parse_numeric";
  }
  if (has(p.system(), "estimating the labels probabilities")) return "probability";
  if (has(p.user(), "categorical")) return "categorical";
  return "numeric";
}

}  // namespace

TEST(TextAdvisor, NumericFirstTry) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt&) { return std::string("Output: 45"); });
  text_advisor adv(llm, prompt_forge{});
  EXPECT_DOUBLE_EQ(adv.propose_numeric(task, task.feature("age"), {}), 45.0);
  EXPECT_EQ(llm.prompts.size(), 1u);
  EXPECT_EQ(adv.stats().kind, "text");
  EXPECT_EQ(adv.stats().queries, 1u);
}

TEST(TextAdvisor, NumericRetriesWithNote) {
  const auto task = toy_task();
  auto ctx = narrow_numeric({}, task.feature("age"), 40, branch_side::left);
  int calls = 0;
  scripted_completer llm([&](const chat_prompt& p) {
    if (is_parser(p)) return std::string("Nothing");
    return std::string(++calls == 1 ? "Output: 60" : "Output: 30");
  });
  text_advisor adv(llm, prompt_forge{});
  EXPECT_DOUBLE_EQ(adv.propose_numeric(task, task.feature("age"), ctx), 30.0);
  ASSERT_EQ(llm.prompts.size(), 2u);
  EXPECT_TRUE(has(llm.prompts[1].user(), "did not meet the constraints"));
  EXPECT_TRUE(has(llm.prompts[1].user(), "age <= 40"));
}

TEST(TextAdvisor, NumericGivesUp) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) {
    return std::string(is_parser(p) ? "Nothing" : "It depends on many factors.");
  });
  text_advisor adv(llm, prompt_forge{}, 2);
  EXPECT_EQ(kind_of([&] { adv.propose_numeric(task, task.feature("age"), {}); }), error_kind::advice_unavailable);
  // two task attempts, each followed by one parser attempt
  EXPECT_EQ(llm.prompts.size(), 4u);
}

TEST(TextAdvisor, NumericUsesParserFallback) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) {
    return std::string(is_parser(p) ? "Output: 52" : "I'd go with fifty-two.");
  });
  text_advisor adv(llm, prompt_forge{});
  EXPECT_DOUBLE_EQ(adv.propose_numeric(task, task.feature("age"), {}), 52.0);
  ASSERT_EQ(llm.prompts.size(), 2u);
  EXPECT_EQ(prompt_kind(llm.prompts[1]), "parse_numeric");
}

TEST(TextAdvisor, Categorical) {
  const auto task = toy_task();
  const auto& color = task.feature("color");
  const std::vector<std::string> allowed{"red", "blue", "green", "yellow"};
  int calls = 0;
  scripted_completer llm([&](const chat_prompt& p) {
    if (is_parser(p)) return std::string("Nothing");
    return std::string(++calls == 1 ? "Output: red;;blue" : "Output: yellow, red;;green, blue");
  });
  text_advisor adv(llm, prompt_forge{});
  auto b = adv.propose_categorical(task, color, {}, allowed);
  EXPECT_EQ(b.group1, (std::vector<std::string>{"red", "yellow"}));
  EXPECT_EQ(b.group2, (std::vector<std::string>{"blue", "green"}));
  EXPECT_TRUE(has(llm.prompts.back().user(), "together must contain exactly these categories"));
}

TEST(TextAdvisor, BranchesRenormalize) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) {
    return std::string(is_parser(p) ? "Nothing" : "Output: 0.8");
  });
  text_advisor adv(llm, prompt_forge{});
  const auto prev = probability_distribution::uniform(task.target_labels);
  auto arms = adv.estimate_branches(task, {}, prev, split{"age", threshold_split{40}});
  EXPECT_DOUBLE_EQ(arms.left.at("yes"), 0.5);
  EXPECT_DOUBLE_EQ(arms.left.at("no"), 0.5);
  EXPECT_DOUBLE_EQ(arms.right.at("yes"), 0.5);
  ASSERT_EQ(llm.prompts.size(), 1u);
  EXPECT_TRUE(has(llm.prompts[0].user(), "age <= 40 or age > 40"));
  EXPECT_TRUE(has(llm.prompts[0].user(), "yes: 0.50, no: 0.50"));
}

TEST(TextAdvisor, BranchesPerPairExtraction) {
  const auto task = toy_task();
  const std::map<std::pair<std::string, std::string>, std::string> answers{
      {{"age <= 40", "yes"}, "Output: 0.2"},
      {{"age <= 40", "no"}, "The probability is 0.85"},
      {{"age > 40", "yes"}, "Output: 60%"},
      {{"age > 40", "no"}, "Output: 0.4"},
  };
  scripted_completer llm([&](const chat_prompt& p) {
    if (prompt_kind(p) != "parse_probability") return std::string("Younger patients are at lower risk; older higher.");
    for (const auto& [key, text] : answers)
      if (has(p.user(), "label " + key.second + " and") && has(p.user(), "information " + key.first + ","))
        return text;
    return std::string("Nothing");
  });
  text_advisor adv(llm, prompt_forge{});
  auto arms = adv.estimate_branches(task, {}, probability_distribution::uniform(task.target_labels),
                                    split{"age", threshold_split{40}});
  EXPECT_NEAR(arms.left.at("yes"), 0.2 / 1.05, 1e-12);
  EXPECT_NEAR(arms.left.at("no"), 0.85 / 1.05, 1e-12);
  EXPECT_NEAR(arms.right.at("yes"), 0.6, 1e-12);
  EXPECT_NEAR(arms.right.at("no"), 0.4, 1e-12);
  EXPECT_EQ(llm.prompts.size(), 5u);
}

TEST(TextAdvisor, BranchesAllZeroIsRetriedThenUnavailable) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) { return std::string(is_parser(p) ? "Nothing" : "Output: 0"); });
  text_advisor adv(llm, prompt_forge{}, 3);
  EXPECT_EQ(kind_of([&] {
              adv.estimate_branches(task, {}, probability_distribution::uniform(task.target_labels),
                                    split{"age", threshold_split{40}});
            }),
            error_kind::probability_unavailable);
  EXPECT_EQ(llm.prompts.size(), 3u);
}

TEST(TextAdvisor, Prior) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) {
    if (prompt_kind(p) != "parse_probability") return std::string("About one in ten.");
    return std::string(has(p.user(), "label yes") ? "Output: 0.1" : "Output: 0.9");
  });
  text_advisor adv(llm, prompt_forge{});
  auto prior = adv.estimate_prior(task);
  EXPECT_NEAR(prior.at("yes"), 0.1, 1e-12);
  EXPECT_TRUE(has(llm.prompts[0].user(), "all instances"));
}

TEST(TextAdvisor, TransportErrorsPropagate) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt&) -> std::string { throw auth_error("denied"); });
  text_advisor adv(llm, prompt_forge{});
  EXPECT_EQ(kind_of([&] { adv.propose_numeric(task, task.feature("age"), {}); }), error_kind::auth);
}

TEST(TextAdvisor, RetryLimitValidated) {
  scripted_completer llm([](const chat_prompt&) { return std::string(); });
  EXPECT_EQ(kind_of([&] { text_advisor(llm, prompt_forge{}, 0); }), error_kind::invalid_argument);
}

TEST(Advise, VariantDispatch) {
  const auto task = toy_task();
  scripted_completer llm([](const chat_prompt& p) {
    auto k = prompt_kind(p);
    if (k == "numeric") return std::string("Output: 50");
    if (k == "categorical") return std::string("Output: red, blue;;green, yellow");
    return std::string("Output: 0.5");
  });
  text_advisor adv(llm, prompt_forge{});
  auto a = advise(adv, propose_numeric_split{&task, task.feature("age"), {}});
  EXPECT_DOUBLE_EQ(std::get<threshold_split>(a).value, 50.0);
  auto b = advise(adv, propose_categorical_split{&task, task.feature("color"), {}, {"red", "blue", "green", "yellow"}});
  EXPECT_EQ(std::get<bipartition>(b).group2, (std::vector<std::string>{"green", "yellow"}));
  auto c = advise(adv, estimate_probabilities{&task, {}, probability_distribution::uniform(task.target_labels),
                                              split{"age", threshold_split{50}}});
  EXPECT_DOUBLE_EQ(std::get<branch_distributions>(c).left.at("no"), 0.5);
}
