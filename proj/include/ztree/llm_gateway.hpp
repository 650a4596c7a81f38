#pragma once

// Completion backends (OpenAI-compatible HTTP, replay) behind a gateway that
// adds caching, recording, bounded concurrency and retry with backoff.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "ztree/chat.hpp"
#include "ztree/detail/format.hpp"
#include "ztree/error.hpp"

namespace ztree {

/// Stable content hash of a prompt (messages and sampling parameters).
inline std::string prompt_key(const chat_prompt& p) {
  nlohmann::json j{{"messages", messages_to_json(p)}, {"params", params_to_json(p.params)}};
  return detail::fnv1a_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Recording files: <dir>/<key>.json = {prompt, params, text}. Used by the disk
// cache, record mode and the replay backend alike.

class recording_store {
public:
  explicit recording_store(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& directory() const { return dir_; }

  std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

  std::optional<std::string> load(const std::string& key) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(in);
      return j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw format_error(path_for(key).string(), e.what());
    }
  }

  void save(const std::string& key, const chat_prompt& prompt, const std::string& text) const {
    std::filesystem::create_directories(dir_);
    nlohmann::json j{{"prompt", messages_to_json(prompt)}, {"params", params_to_json(prompt.params)}, {"text", text}};
    const auto final_path = path_for(key);
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
  }

private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Backends

class completion_backend {
public:
  virtual ~completion_backend() = default;
  /// Throws transport_error (retryable), auth_error or replay_miss.
  virtual std::string send(const chat_prompt& prompt) = 0;
  virtual std::string name() const = 0;
};

struct http_response {
  int status = 0;
  std::string body;
};

/// Minimal POST transport so the HTTP backend can be exercised without a network.
class http_transport {
public:
  virtual ~http_transport() = default;
  /// Throws transport_error when no response was received.
  virtual http_response post_json(const std::string& url, const std::string& bearer_token, const std::string& body) = 0;
};

/// OpenAI-compatible chat completions: POST {base_url}/chat/completions.
class http_backend : public completion_backend {
public:
  http_backend(std::shared_ptr<http_transport> transport, std::string base_url, std::string api_key)
      : transport_(std::move(transport)), base_url_(std::move(base_url)), api_key_(std::move(api_key)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  }

  static nlohmann::json request_body(const chat_prompt& p) {
    return {{"model", p.params.model_name},
            {"temperature", p.params.temperature},
            {"max_tokens", p.params.max_tokens},
            {"messages", messages_to_json(p)}};
  }

  std::string send(const chat_prompt& prompt) override {
    const auto res = transport_->post_json(base_url_ + "/chat/completions", api_key_, request_body(prompt).dump());
    if (res.status == 401 || res.status == 403)
      throw auth_error("endpoint rejected credentials (HTTP " + std::to_string(res.status) + ")");
    if (res.status != 200)
      throw transport_error("HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200));
    try {
      auto j = nlohmann::json::parse(res.body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw transport_error(std::string("malformed completion response: ") + e.what());
    }
  }

  std::string name() const override { return "http"; }

private:
  std::shared_ptr<http_transport> transport_;
  std::string base_url_;
  std::string api_key_;
};

/// Serves completions from a recording directory; unknown prompts are a ReplayMiss.
class replay_backend : public completion_backend {
public:
  explicit replay_backend(std::filesystem::path dir) : store_(std::move(dir)) {
    if (!std::filesystem::is_directory(store_.directory()))
      throw error(error_kind::invalid_argument, "recording directory '" + store_.directory().string() + "' does not exist");
  }

  std::string send(const chat_prompt& prompt) override {
    const auto key = prompt_key(prompt);
    if (auto text = store_.load(key)) return *text;
    throw replay_miss(key);
  }

  std::string name() const override { return "replay"; }

private:
  recording_store store_;
};

// ---------------------------------------------------------------------------
// Gateway

struct gateway_options {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  int max_inflight = 4;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> record_dir;
};

struct gateway_stats {
  std::uint64_t requests = 0;       // complete() calls
  std::uint64_t cache_hits = 0;
  std::uint64_t backend_calls = 0;  // including retries
};

/// Thread-safe. Cache lookups happen before the backend is touched; successful
/// completions are cached in memory, in cache_dir and in record_dir if set.
class llm_gateway : public text_completer {
public:
  explicit llm_gateway(std::unique_ptr<completion_backend> backend, gateway_options opts = {})
      : backend_(std::move(backend)), opts_(std::move(opts)), inflight_(std::max(1, opts_.max_inflight)) {
    if (opts_.max_attempts < 1) throw error(error_kind::invalid_argument, "max_attempts must be at least 1");
    if (opts_.max_inflight < 1 || opts_.max_inflight > 1024)
      throw error(error_kind::invalid_argument, "max_inflight must be in [1, 1024]");
  }

  completion_result complete(const chat_prompt& prompt) override {
    if (!prompt.well_formed()) throw error(error_kind::invalid_argument, "prompt must be system, assistant, user");
    requests_.fetch_add(1);
    const auto key = prompt_key(prompt);

    // Single flight per key: concurrent identical prompts wait for the first.
    std::promise<std::string> promise;
    {
      std::unique_lock lock(mutex_);
      if (auto it = memory_.find(key); it != memory_.end()) {
        auto pending = it->second;
        lock.unlock();
        auto text = pending.get();
        cache_hits_.fetch_add(1);
        return {std::move(text), true, 0};
      }
      memory_.emplace(key, promise.get_future().share());
    }

    try {
      if (opts_.cache_dir) {
        if (auto text = recording_store(*opts_.cache_dir).load(key)) {
          promise.set_value(*text);
          cache_hits_.fetch_add(1);
          return {*text, true, 0};
        }
      }
      auto [text, attempts] = send_with_retry(prompt);
      if (opts_.cache_dir) recording_store(*opts_.cache_dir).save(key, prompt, text);
      if (opts_.record_dir) recording_store(*opts_.record_dir).save(key, prompt, text);
      promise.set_value(text);
      return {std::move(text), false, attempts};
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(mutex_);
      memory_.erase(key);
      throw;
    }
  }

  gateway_stats stats() const { return {requests_.load(), cache_hits_.load(), backend_calls_.load()}; }
  const completion_backend& backend() const { return *backend_; }

private:
  std::pair<std::string, int> send_with_retry(const chat_prompt& prompt) {
    auto delay = opts_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        inflight_.acquire();
        struct release {
          std::counting_semaphore<1024>& s;
          ~release() { s.release(); }
        } guard{inflight_};
        backend_calls_.fetch_add(1);
        return {backend_->send(prompt), attempt};
      } catch (const transport_error& e) {
        if (attempt >= opts_.max_attempts)
          throw transport_error(std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
      }
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }

  std::unique_ptr<completion_backend> backend_;
  gateway_options opts_;
  std::counting_semaphore<1024> inflight_;
  std::mutex mutex_;
  std::map<std::string, std::shared_future<std::string>> memory_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
};

}  // namespace ztree
