#include <gtest/gtest.h>

#include <deque>
#include <thread>

#include "support.hpp"
#include "ztree/httplib_transport.hpp"

using namespace ztree;
using namespace ztree::testing;

namespace {

chat_prompt sample_prompt(const std::string& feature = "age") {
  const auto task = toy_task();
  return prompt_forge().numeric_split(task, task.feature(feature), branch_context{});
}

std::string completion_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Pops one scripted response (or failure) per request.
class stub_transport : public http_transport {
public:
  struct step {
    int status = 200;
    std::string body;
    bool drop = false;
  };

  explicit stub_transport(std::deque<step> steps) : steps_(std::move(steps)) {}

  http_response post_json(const std::string& url, const std::string& token, const std::string& body) override {
    std::lock_guard lock(mutex_);
    urls.push_back(url);
    tokens.push_back(token);
    bodies.push_back(body);
    if (steps_.empty()) throw transport_error("script exhausted");
    auto s = steps_.front();
    steps_.pop_front();
    if (s.drop) throw transport_error("connection reset");
    return {s.status, s.body};
  }

  std::vector<std::string> urls, tokens, bodies;

private:
  std::deque<step> steps_;
  std::mutex mutex_;
};

// Counts sends; optionally slow, to let concurrent callers pile up.
class counting_backend : public completion_backend {
public:
  explicit counting_backend(std::chrono::milliseconds delay = {}) : delay_(delay) {}
  std::string send(const chat_prompt& p) override {
    ++calls;
    if (delay_.count()) std::this_thread::sleep_for(delay_);
    return "echo " + p.user().substr(0, 10);
  }
  std::string name() const override { return "counting"; }
  std::atomic<int> calls{0};

private:
  std::chrono::milliseconds delay_;
};

gateway_options fast(int attempts = 3) {
  gateway_options o;
  o.max_attempts = attempts;
  o.initial_backoff = std::chrono::milliseconds(0);
  return o;
}

}  // namespace

TEST(PromptKey, StableAndSensitive) {
  const auto a = sample_prompt();
  EXPECT_EQ(prompt_key(a), prompt_key(sample_prompt()));
  EXPECT_EQ(prompt_key(a).size(), 16u);
  auto b = a;
  b.params.temperature = 0.5;
  EXPECT_NE(prompt_key(a), prompt_key(b));
  auto c = a;
  c.messages[2].content += " ";
  EXPECT_NE(prompt_key(a), prompt_key(c));
}

TEST(HttpBackend, RequestShape) {
  auto t = std::make_shared<stub_transport>(std::deque<stub_transport::step>{{200, completion_body("Output: 30")}});
  http_backend backend(t, "https://example.test/v1/", "sk-test");
  EXPECT_EQ(backend.send(sample_prompt()), "Output: 30");
  ASSERT_EQ(t->urls.size(), 1u);
  EXPECT_EQ(t->urls[0], "https://example.test/v1/chat/completions");
  EXPECT_EQ(t->tokens[0], "sk-test");
  auto body = nlohmann::json::parse(t->bodies[0]);
  EXPECT_EQ(body["model"], "gpt-4o-mini");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 512);
  ASSERT_EQ(body["messages"].size(), 3u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["role"], "assistant");
  EXPECT_EQ(body["messages"][2]["role"], "user");
}

TEST(HttpBackend, StatusMapping) {
  for (int status : {401, 403}) {
    auto t = std::make_shared<stub_transport>(std::deque<stub_transport::step>{{status, "{}"}});
    http_backend b(t, "http://x", "k");
    EXPECT_EQ(kind_of([&] { b.send(sample_prompt()); }), error_kind::auth);
  }
  for (auto body : {std::string("not json"), std::string("{\"choices\": []}")}) {
    auto t = std::make_shared<stub_transport>(std::deque<stub_transport::step>{{200, body}});
    http_backend b(t, "http://x", "k");
    EXPECT_EQ(kind_of([&] { b.send(sample_prompt()); }), error_kind::transport);
  }
  auto t = std::make_shared<stub_transport>(std::deque<stub_transport::step>{{500, "oops"}});
  http_backend b(t, "http://x", "k");
  EXPECT_EQ(kind_of([&] { b.send(sample_prompt()); }), error_kind::transport);
}

TEST(Gateway, RetriesTransportErrors) {
  auto t = std::make_shared<stub_transport>(std::deque<stub_transport::step>{
      {0, "", true}, {503, "busy"}, {200, completion_body("Output: 41")}});
  llm_gateway gw(std::make_unique<http_backend>(t, "http://x", "k"), fast(3));
  auto r = gw.complete(sample_prompt());
  EXPECT_EQ(r.text, "Output: 41");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_FALSE(r.cached);
  EXPECT_EQ(gw.stats().backend_calls, 3u);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
  auto t = std::make_shared<stub_transport>(
      std::deque<stub_transport::step>{{0, "", true}, {0, "", true}, {200, completion_body("late")}});
  llm_gateway gw(std::make_unique<http_backend>(t, "http://x", "k"), fast(2));
  EXPECT_EQ(kind_of([&] { gw.complete(sample_prompt()); }), error_kind::transport);
  EXPECT_EQ(t->urls.size(), 2u);
}

TEST(Gateway, AuthIsNotRetried) {
  auto t = std::make_shared<stub_transport>(
      std::deque<stub_transport::step>{{401, "{}"}, {200, completion_body("never")}});
  llm_gateway gw(std::make_unique<http_backend>(t, "http://x", "k"), fast(5));
  EXPECT_EQ(kind_of([&] { gw.complete(sample_prompt()); }), error_kind::auth);
  EXPECT_EQ(t->urls.size(), 1u);
}

TEST(Gateway, MemoryCache) {
  auto backend = std::make_unique<counting_backend>();
  auto* raw = backend.get();
  llm_gateway gw(std::move(backend), fast());
  auto a = gw.complete(sample_prompt());
  auto b = gw.complete(sample_prompt());
  EXPECT_EQ(a.text, b.text);
  EXPECT_FALSE(a.cached);
  EXPECT_TRUE(b.cached);
  EXPECT_EQ(raw->calls.load(), 1);
  EXPECT_EQ(gw.stats().requests, 2u);
  EXPECT_EQ(gw.stats().cache_hits, 1u);
}

TEST(Gateway, FailuresAreNotCached) {
  auto t = std::make_shared<stub_transport>(
      std::deque<stub_transport::step>{{401, "{}"}, {200, completion_body("Output: 5")}});
  llm_gateway gw(std::make_unique<http_backend>(t, "http://x", "k"), fast(1));
  EXPECT_THROW(gw.complete(sample_prompt()), auth_error);
  EXPECT_EQ(gw.complete(sample_prompt()).text, "Output: 5");
}

TEST(Gateway, SingleFlight) {
  auto backend = std::make_unique<counting_backend>(std::chrono::milliseconds(50));
  auto* raw = backend.get();
  gateway_options o = fast();
  o.max_inflight = 8;
  llm_gateway gw(std::move(backend), o);
  std::vector<std::string> texts(8);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { texts[i] = gw.complete(sample_prompt()).text; });
  }
  EXPECT_EQ(raw->calls.load(), 1);
  for (const auto& t : texts) EXPECT_EQ(t, texts[0]);
  EXPECT_EQ(gw.stats().cache_hits, 7u);
}

TEST(Gateway, RejectsMalformedPrompt) {
  llm_gateway gw(std::make_unique<counting_backend>(), fast());
  chat_prompt p;
  p.messages = {{chat_role::user, "hi"}};
  EXPECT_EQ(kind_of([&] { gw.complete(p); }), error_kind::invalid_argument);
}

TEST(Gateway, RecordThenReplay) {
  temp_dir dir;
  const auto p = sample_prompt();
  std::string original;
  {
    gateway_options o = fast();
    o.record_dir = dir.path();
    llm_gateway gw(std::make_unique<counting_backend>(), o);
    original = gw.complete(p).text;
  }
  const auto file = dir / (prompt_key(p) + ".json");
  ASSERT_TRUE(std::filesystem::exists(file));
  auto j = nlohmann::json::parse(slurp(file));
  EXPECT_EQ(j["text"], original);
  EXPECT_EQ(j["prompt"].size(), 3u);
  EXPECT_EQ(j["params"]["model"], "gpt-4o-mini");

  llm_gateway replay(std::make_unique<replay_backend>(dir.path()), fast());
  EXPECT_EQ(replay.complete(p).text, original);
  auto other = p;
  other.params.max_tokens = 64;
  EXPECT_EQ(kind_of([&] { replay.complete(other); }), error_kind::replay_miss);
}

TEST(Gateway, ReplayMissIsImmediate) {
  temp_dir dir;
  llm_gateway gw(std::make_unique<replay_backend>(dir.path()), fast(5));
  try {
    gw.complete(sample_prompt());
    FAIL() << "expected a replay miss";
  } catch (const replay_miss& e) {
    EXPECT_EQ(e.key(), prompt_key(sample_prompt()));
  }
  EXPECT_EQ(gw.stats().backend_calls, 1u);
}

TEST(Gateway, ReplayDirectoryMustExist) {
  EXPECT_EQ(kind_of([] { replay_backend b("/nonexistent/ztree/recordings"); }), error_kind::invalid_argument);
}

TEST(Gateway, DiskCacheSurvivesRestart) {
  temp_dir dir;
  gateway_options o = fast();
  o.cache_dir = dir.path();
  {
    llm_gateway gw(std::make_unique<counting_backend>(), o);
    gw.complete(sample_prompt());
  }
  auto backend = std::make_unique<counting_backend>();
  auto* raw = backend.get();
  llm_gateway gw(std::move(backend), o);
  auto r = gw.complete(sample_prompt());
  EXPECT_TRUE(r.cached);
  EXPECT_EQ(raw->calls.load(), 0);
  EXPECT_EQ(gw.stats().cache_hits, 1u);
}

TEST(Gateway, CorruptRecordingIsFormatError) {
  temp_dir dir;
  const auto p = sample_prompt();
  std::ofstream(dir / (prompt_key(p) + ".json")) << "{ truncated";
  llm_gateway gw(std::make_unique<replay_backend>(dir.path()), fast());
  EXPECT_EQ(kind_of([&] { gw.complete(p); }), error_kind::format);
}

TEST(HttplibTransport, TalksToLocalServer) {
  httplib::Server server;
  std::string seen_auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(completion_body("Output: 17"), "application/json");
  });
  server.Post("/denied/chat/completions",
              [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto base = "http://127.0.0.1:" + std::to_string(port);
  llm_gateway gw(std::make_unique<http_backend>(std::make_shared<httplib_transport>(), base + "/v1", "sk-local"),
                 fast(1));
  EXPECT_EQ(gw.complete(sample_prompt()).text, "Output: 17");
  EXPECT_EQ(seen_auth, "Bearer sk-local");
  EXPECT_EQ(nlohmann::json::parse(seen_body)["messages"].size(), 3u);

  llm_gateway denied(
      std::make_unique<http_backend>(std::make_shared<httplib_transport>(), base + "/denied", "bad"), fast(3));
  EXPECT_EQ(kind_of([&] { denied.complete(sample_prompt()); }), error_kind::auth);

  server.stop();
  thread.join();

  llm_gateway offline(std::make_unique<http_backend>(std::make_shared<httplib_transport>(std::chrono::seconds(1)),
                                                     base + "/v1", "k"),
                      fast(2));
  EXPECT_EQ(kind_of([&] { offline.complete(sample_prompt()); }), error_kind::transport);
}
