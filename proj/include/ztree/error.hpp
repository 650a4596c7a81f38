#pragma once

#include <stdexcept>
#include <string>

namespace ztree {

// Every failure the library raises derives from ztree::error. The kind tag lets
// callers (the CLI in particular) map failures onto exit codes without
// catching each subtype.
enum class error_kind {
  invalid_argument,
  empty_identifier,
  threshold_out_of_range,
  not_a_subset,
  empty_subset,
  missing_placeholder,
  too_few_categories,
  transport,
  auth,
  replay_miss,
  advice_unavailable,
  probability_unavailable,
  no_candidates,
  prior_unavailable,
  missing_value,
  unknown_category,
  format,
  version_mismatch,
  header_mismatch,
  label_out_of_vocabulary,
  task_mismatch,
  k_too_large,
  empty_dataset,
  zero_total_count,
  unsatisfiable_context,
};

class error : public std::runtime_error {
public:
  error(error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  error_kind kind() const noexcept { return kind_; }

private:
  error_kind kind_;
};

class transport_error : public error {
public:
  explicit transport_error(const std::string& what) : error(error_kind::transport, what) {}
};

class auth_error : public error {
public:
  explicit auth_error(const std::string& what) : error(error_kind::auth, what) {}
};

class replay_miss : public error {
public:
  explicit replay_miss(const std::string& key)
      : error(error_kind::replay_miss, "no recording for prompt " + key), key_(key) {}

  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

class advice_unavailable : public error {
public:
  explicit advice_unavailable(const std::string& feature)
      : error(error_kind::advice_unavailable, "no valid split advice for feature '" + feature + "'"),
        feature_(feature) {}

  const std::string& feature() const noexcept { return feature_; }

private:
  std::string feature_;
};

class probability_unavailable : public error {
public:
  explicit probability_unavailable(const std::string& what)
      : error(error_kind::probability_unavailable, what) {}
};

class format_error : public error {
public:
  format_error(const std::string& location, const std::string& what)
      : error(error_kind::format, location + ": " + what), location_(location), message_(what) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& message() const noexcept { return message_; }

private:
  std::string location_;
  std::string message_;
};

inline bool is_transport_failure(const error& e) {
  return e.kind() == error_kind::transport || e.kind() == error_kind::auth ||
         e.kind() == error_kind::replay_miss;
}

}  // namespace ztree
