#pragma once

// Shared fixtures for the test binaries.

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>

#include "ztree/ztree.hpp"

namespace ztree::testing {

inline feature_spec numeric(std::string name, std::optional<double> lo = std::nullopt,
                            std::optional<double> hi = std::nullopt, numeric_dtype dtype = numeric_dtype::real) {
  return {std::move(name), numeric_kind{dtype, lo, hi}};
}

inline feature_spec integer(std::string name, double lo, double hi) {
  return numeric(std::move(name), lo, hi, numeric_dtype::integer);
}

inline feature_spec categorical(std::string name, std::vector<std::string> cats) {
  return {std::move(name), categorical_kind{std::move(cats)}};
}

inline task_spec diabetes_task() {
  return load_task(std::string(ZTREE_FIXTURES) + "/diabetes_schema.json");
}

inline task_spec toy_task() {
  task_spec t;
  t.problem = "Predict whether a patient has diabetes.";
  t.instance_type = "patient";
  t.target_feature = "diabetes";
  t.target_labels = {"yes", "no"};
  t.features = {numeric("age", 0, 100), categorical("color", {"red", "blue", "green", "yellow"})};
  return t;
}

inline probability_distribution dist(const std::vector<std::string>& labels, std::vector<double> p) {
  return probability_distribution::from_probabilities(labels, std::move(p));
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class temp_dir {
public:
  temp_dir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ztree_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~temp_dir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  temp_dir(const temp_dir&) = delete;
  temp_dir& operator=(const temp_dir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Completer driven by a callback; remembers every prompt it was given.
class scripted_completer : public text_completer {
public:
  using script = std::function<std::string(const chat_prompt&)>;
  explicit scripted_completer(script s) : script_(std::move(s)) {}

  completion_result complete(const chat_prompt& prompt) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    return {script_(prompt), false, 1};
  }

  std::vector<chat_prompt> prompts;

private:
  script script_;
  std::mutex mutex_;
};

template <class F>
error_kind kind_of(F&& f) {
  try {
    f();
  } catch (const error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a ztree::error");
}

}  // namespace ztree::testing
