#include <doctest.h>

#include <thread>

#include "../support/mocks.hpp"
#include "legalrag/llm_gateway.hpp"

using namespace legalrag;

namespace {

ChatRequest simple_request(const std::string& user_text, double temperature = 0.0) {
    ChatRequest req;
    req.model_id = "test-model";
    req.temperature = temperature;
    req.max_tokens = 128;
    req.messages = {{ChatRole::System, "You are a helpful assistant."},
                    {ChatRole::User, user_text}};
    return req;
}

}  // namespace

TEST_CASE("mock backend rule matching") {
    MockChatBackend backend({{"行政处罚", "Yes"}, {"民事", "No"}}, "default");

    SUBCASE("first matching pattern wins") {
        CHECK(backend.complete(simple_request("涉及行政处罚与民事责任")) == "Yes");
    }
    SUBCASE("non-matching prompt falls through to the default") {
        CHECK(backend.complete(simple_request("完全无关")) == "default");
    }
    SUBCASE("empty rules always answer the default") {
        MockChatBackend empty({}, "d");
        CHECK(empty.complete(simple_request("anything")) == "d");
    }
    SUBCASE("pattern may match the system message too") {
        CHECK(backend.complete(simple_request("plain")) == "default");
        ChatRequest req = simple_request("plain");
        req.messages[0].content = "说明：行政处罚";
        CHECK(backend.complete(req) == "Yes");
    }
}

TEST_CASE("chat request validation") {
    ChatRequest req;
    req.model_id = "m";
    CHECK_THROWS_AS(req.validate(), std::invalid_argument);  // no messages
    req.messages = {{ChatRole::User, "hi"}};
    CHECK_THROWS_AS(req.validate(), std::invalid_argument);  // first not system
    req.messages = {{ChatRole::System, "s"}, {ChatRole::User, "hi"}};
    CHECK_NOTHROW(req.validate());
    req.max_tokens = 0;
    CHECK_THROWS_AS(req.validate(), std::invalid_argument);
}

TEST_CASE("canonical hashing") {
    const ChatRequest a = simple_request("question", 0.0);
    const ChatRequest b = simple_request("question", 0.0);
    const ChatRequest hotter = simple_request("question", 0.7);

    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != hotter.hash());  // temperature participates in the key

    ChatRequest other_model = simple_request("question");
    other_model.model_id = "another";
    CHECK(a.hash() != other_model.hash());

    ChatRequest reordered = a;
    std::swap(reordered.messages[0], reordered.messages[1]);
    CHECK(a.hash() != reordered.hash());  // message order matters
}

TEST_CASE("complete_cached semantics") {
    legalrag::testing::TempDir dir("gateway");
    auto counting = std::make_shared<legalrag::testing::CountingChatBackend>(
        std::make_shared<MockChatBackend>(std::vector<MockChatBackend::Rule>{}, "answer"));
    auto cache = std::make_shared<KvCache>(dir.path());
    LlmGateway gateway(counting, cache, RetryPolicy{3, 1}, 2);

    SUBCASE("second identical request is served from cache") {
        CHECK(gateway.complete(simple_request("q")) == "answer");
        CHECK(gateway.complete(simple_request("q")) == "answer");
        CHECK(counting->calls() == 1);
        CHECK(gateway.stats().cache_hits == 1);
    }
    SUBCASE("different temperature misses the cache") {
        gateway.complete(simple_request("q", 0.0));
        gateway.complete(simple_request("q", 0.5));
        CHECK(counting->calls() == 2);
    }
}

TEST_CASE("retries recover from transient failures and report the hash at exhaustion") {
    legalrag::testing::TempDir dir("retry");
    auto mock = std::make_shared<MockChatBackend>(std::vector<MockChatBackend::Rule>{}, "ok");
    auto cache = std::make_shared<KvCache>(dir.path());

    SUBCASE("two failures then success within three attempts") {
        LlmGateway gateway(mock, cache, RetryPolicy{3, 1}, 1);
        mock->fail_next(2);
        CHECK(gateway.complete(simple_request("q")) == "ok");
    }
    SUBCASE("exhausted retries raise BackendError carrying the request hash") {
        LlmGateway gateway(mock, cache, RetryPolicy{2, 1}, 1);
        mock->fail_next(10);
        const ChatRequest req = simple_request("q2");
        try {
            gateway.complete(req);
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.request_hash() == req.hash());
        }
    }
}

TEST_CASE("concurrent cache writers do not corrupt entries") {
    legalrag::testing::TempDir dir("conc");
    auto mock = std::make_shared<MockChatBackend>(std::vector<MockChatBackend::Rule>{}, "same");
    auto cache = std::make_shared<KvCache>(dir.path());
    LlmGateway gateway(mock, cache, RetryPolicy{1, 0}, 4);

    std::vector<std::thread> threads;
    std::atomic<bool> mismatch{false};
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 25; ++i) {
                if (gateway.complete(simple_request("shared-question")) != "same") {
                    mismatch = true;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(!mismatch.load());
    CHECK(cache->get(simple_request("shared-question").hash()).value() == "same");
}
