#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "metastd/http.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <thread>

#include "metastd/agent.hpp"
#include "metastd/errors.hpp"
#include "metastd/template.hpp"
#include "metastd/terminology.hpp"

namespace metastd {
namespace {

using namespace std::chrono_literals;

class FakeTransport : public HttpTransport {
 public:
  explicit FakeTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse send(const HttpRequest& request) override {
    sent.push_back(request);
    if (script_.empty()) return {200, "{}"};
    HttpResponse r = script_.front();
    script_.pop_front();
    return r;
  }
  std::vector<HttpRequest> sent;

 private:
  std::deque<HttpResponse> script_;
};

struct SleepLog {
  std::vector<std::chrono::milliseconds> delays;
  RetryPolicy policy() {
    RetryPolicy p;
    p.sleep = [this](std::chrono::milliseconds d) { delays.push_back(d); };
    return p;
  }
};

HttpRequest get(const std::string& url) {
  HttpRequest r;
  r.url = url;
  return r;
}

TEST(Retry, ServerErrorsRetriedWithBackoff) {
  FakeTransport t({{503, ""}, {502, ""}, {200, "ok"}});
  SleepLog log;
  auto r = send_with_retry(t, get("http://x/y"), log.policy());
  EXPECT_EQ(r.body, "ok");
  EXPECT_EQ(t.sent.size(), 3u);
  EXPECT_EQ(log.delays, (std::vector<std::chrono::milliseconds>{250ms, 500ms}));
}

TEST(Retry, TimeoutsExhaustAttempts) {
  HttpResponse timeout;
  timeout.failure = TransportFailure::kTimeout;
  FakeTransport t({timeout, timeout, timeout, {200, "late"}});
  SleepLog log;
  EXPECT_THROW(send_with_retry(t, get("http://x/y"), log.policy()), TimeoutError);
  EXPECT_EQ(t.sent.size(), 3u);
  EXPECT_EQ(log.delays.size(), 2u);
}

TEST(Retry, ConnectionFailureBecomesUpstreamError) {
  HttpResponse down;
  down.failure = TransportFailure::kConnection;
  FakeTransport t({down, down, down});
  SleepLog log;
  EXPECT_THROW(send_with_retry(t, get("http://x/y"), log.policy()), UpstreamError);
}

TEST(Retry, ClientErrorsAreNotRetried) {
  for (int status : {400, 401, 403, 404, 429}) {
    FakeTransport t({{status, ""}, {200, "ok"}});
    SleepLog log;
    auto call = [&] { send_with_retry(t, get("http://x/y"), log.policy()); };
    if (status == 401 || status == 403) {
      EXPECT_THROW(call(), AuthError);
    } else if (status == 404) {
      EXPECT_THROW(call(), NotFoundError);
    } else {
      try {
        call();
        ADD_FAILURE() << status;
      } catch (const UpstreamError& e) {
        EXPECT_EQ(e.status(), status);
      }
    }
    EXPECT_EQ(t.sent.size(), 1u) << status;
    EXPECT_TRUE(log.delays.empty());
  }
}

TEST(Retry, PersistentServerErrorCarriesStatus) {
  FakeTransport t({{500, ""}, {500, ""}, {500, ""}});
  SleepLog log;
  try {
    send_with_retry(t, get("http://x/y"), log.policy());
    ADD_FAILURE();
  } catch (const UpstreamError& e) {
    EXPECT_EQ(e.status(), 500);
  }
}

TEST(Url, SplitAndJoin) {
  EXPECT_EQ(split_url("https://h:8/a/b?q=1"),
            (std::pair<std::string, std::string>{"https://h:8", "/a/b?q=1"}));
  EXPECT_EQ(split_url("http://h").second, "/");
  EXPECT_THROW(split_url("h/a"), ConfigError);
  EXPECT_EQ(join_url("http://h/v1/", "/chat"), "http://h/v1/chat");
  EXPECT_EQ(join_url("http://h/v1", "chat"), "http://h/v1/chat");
}

// Live clients against a local server standing in for the real services.
class LocalServer : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(LocalServer, BioPortalSearch) {
  std::string auth, q, subtree;
  server_.Get("/search", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    q = req.get_param_value("q");
    subtree = req.get_param_value("subtree_root_id");
    res.set_content(R"({"collection": [{"prefLabel": "single nucleus", "@id": "urn:sn",
        "links": {"ontology": "https://data.bioontology.org/ontologies/HRAVS"}}]})",
                    "application/json");
  });
  HttplibTransport transport;
  BioPortalBackend backend({base(), "KEY"}, transport);
  ResponseCache cache;
  TerminologyClient client(backend, cache);
  auto r = client.search_branch("HRAVS", "urn:branch/1", "single nucleus");
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.candidates[0].preferred_label, "single nucleus");
  EXPECT_EQ(auth, "apikey token=KEY");
  EXPECT_EQ(q, "single nucleus");
  EXPECT_EQ(subtree, "urn:branch/1");
}

TEST_F(LocalServer, CedarTemplateFetchAndErrors) {
  std::string auth, path;
  server_.Get(R"(/templates/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    path = req.matches[1];
    if (path.find("missing") != std::string::npos) {
      res.status = 404;
      return;
    }
    res.set_content(R"({"template_id": "x", "fields": []})", "application/json");
  });
  HttplibTransport transport;
  CedarClient cedar({base(), "SECRET"}, transport);
  EXPECT_EQ(cedar.fetch("abc-123"), R"({"template_id": "x", "fields": []})");
  EXPECT_EQ(auth, "apiKey SECRET");
  EXPECT_NE(path.find("repo.metadatacenter.org"), std::string::npos) << path;
  EXPECT_NE(path.find("abc-123"), std::string::npos) << path;
  EXPECT_THROW(cedar.fetch("missing"), NotFoundError);
}

TEST_F(LocalServer, AuthFailureIsNotRetried) {
  int hits = 0;
  server_.Get("/search", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
  });
  HttplibTransport transport;
  BioPortalBackend backend({base(), "BAD"}, transport);
  EXPECT_THROW(backend.fetch_search({"HRAVS", std::nullopt, "x"}), AuthError);
  EXPECT_EQ(hits, 1);
}

TEST_F(LocalServer, ServerErrorRetriedThenSucceeds) {
  int hits = 0;
  server_.Get("/search", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"collection": []})", "application/json");
  });
  HttplibTransport transport;
  RetryPolicy fast;
  fast.sleep = [](std::chrono::milliseconds) {};
  BioPortalBackend backend({base(), "K"}, transport, fast);
  EXPECT_EQ(backend.fetch_search({"HRAVS", std::nullopt, "x"}), R"({"collection": []})");
  EXPECT_EQ(hits, 3);
}

TEST_F(LocalServer, UnreachableHostIsUpstreamError) {
  HttplibTransport transport;
  RetryPolicy fast;
  fast.sleep = [](std::chrono::milliseconds) {};
  // Port 1 on loopback refuses connections.
  BioPortalBackend backend({"http://127.0.0.1:1", "K", 1000ms}, transport, fast);
  EXPECT_THROW(backend.fetch_search({"HRAVS", std::nullopt, "x"}), UpstreamError);
}

TEST_F(LocalServer, ChatCompletionsRoundTrip) {
  nlohmann::json seen;
  std::string auth;
  server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": null,
        "tool_calls": [{"id": "c1", "type": "function", "function": {
          "name": "get_cedar_template", "arguments": "{\"template_id\": \"rnaseq\"}"}}]}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}})",
                    "application/json");
  });
  HttplibTransport transport;
  ChatBackendConfig cfg;
  cfg.endpoint = base() + "/v1";
  cfg.model = "test-model";
  HttpChatBackend chat(cfg, "sk-test", transport);
  ChatReply reply = chat.complete({{ChatRole::kSystem, "sys"}, {ChatRole::kUser, "hi"}},
                                  tool_descriptors());
  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_EQ(seen["tools"].size(), 3u);
  ASSERT_EQ(reply.tool_calls.size(), 1u);
  EXPECT_EQ(reply.tool_calls[0].name, "get_cedar_template");
  EXPECT_EQ(reply.tool_calls[0].arguments["template_id"], "rnaseq");
  ASSERT_TRUE(reply.usage);
  EXPECT_EQ(reply.usage->prompt_tokens, 11);
}

TEST(ChatBackend, OmittedTemperatureAndBadResponses) {
  FakeTransport t({});
  ChatBackendConfig cfg;
  cfg.temperature.reset();
  HttpChatBackend chat(cfg, "k", t);
  auto body = chat.build_request({{ChatRole::kUser, "x"}}, {});
  EXPECT_FALSE(body.contains("temperature"));
  EXPECT_FALSE(body.contains("tools"));
  EXPECT_THROW(HttpChatBackend::parse_response("nope"), MalformedPayloadError);
  EXPECT_THROW(HttpChatBackend::parse_response(R"({"choices": []})"), MalformedPayloadError);
}

}  // namespace
}  // namespace metastd
