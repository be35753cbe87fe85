#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <thread>

#include "legalrag/backends.hpp"

using namespace legalrag;
using json = nlohmann::json;

namespace {

/// In-process HTTP server speaking the three backend wire contracts.
class TestServer {
public:
    TestServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            last_chat_body = json::parse(req.body);
            last_auth = req.get_header_value("Authorization");
            const json reply{
                {"choices",
                 json::array({json{{"message", json{{"content", "pong"}, {"role", "assistant"}}}}})}};
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
            last_embed_body = json::parse(req.body);
            json vectors = json::array();
            for (std::size_t i = 0; i < last_embed_body["texts"].size(); ++i) {
                vectors.push_back(json::array({1.0, 0.0, 0.0}));
            }
            res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
        });
        server_.Post("/rerank", [this](const httplib::Request& req, httplib::Response& res) {
            last_rerank_body = json::parse(req.body);
            json scores = json::array();
            for (std::size_t i = 0; i < last_rerank_body["documents"].size(); ++i) {
                scores.push_back(static_cast<double>(i) * 0.5);
            }
            res.set_content(json{{"scores", scores}}.dump(), "application/json");
        });
        server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~TestServer() {
        server_.stop();
        thread_.join();
    }

    HttpEndpoint endpoint(const std::string& path, const std::string& key_env = "") const {
        HttpEndpoint e;
        e.base_url = "http://127.0.0.1:" + std::to_string(port_);
        e.path = path;
        e.api_key_env = key_env;
        return e;
    }

    json last_chat_body;
    json last_embed_body;
    json last_rerank_body;
    std::string last_auth;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

ChatRequest ping_request() {
    ChatRequest req;
    req.model_id = "chat-model";
    req.max_tokens = 64;
    req.messages = {{ChatRole::System, "sys"}, {ChatRole::User, "ping"}};
    return req;
}

}  // namespace

TEST_CASE("http chat backend speaks the chat-completions contract") {
    TestServer server;
    setenv("LEGALRAG_TEST_KEY", "sekrit", 1);
    HttpChatBackend backend(server.endpoint("/v1/chat/completions", "LEGALRAG_TEST_KEY"));

    CHECK(backend.complete(ping_request()) == "pong");
    CHECK(server.last_chat_body["model"] == "chat-model");
    CHECK(server.last_chat_body["temperature"] == 0.0);
    CHECK(server.last_chat_body["max_tokens"] == 64);
    REQUIRE(server.last_chat_body["messages"].size() == 2);
    CHECK(server.last_chat_body["messages"][0]["role"] == "system");
    CHECK(server.last_chat_body["messages"][1]["content"] == "ping");
    CHECK(server.last_auth == "Bearer sekrit");
}

TEST_CASE("missing api key environment variable is a backend error") {
    TestServer server;
    unsetenv("LEGALRAG_MISSING_KEY");
    HttpChatBackend backend(server.endpoint("/v1/chat/completions", "LEGALRAG_MISSING_KEY"));
    CHECK_THROWS_AS(backend.complete(ping_request()), BackendError);
}

TEST_CASE("http embedding backend speaks the {model,texts}->{vectors} contract") {
    TestServer server;
    HttpEmbeddingBackend backend(server.endpoint("/embed"), "embed-model");
    const auto vectors = backend.embed({"a", "b"});
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0] == std::vector<float>{1.0f, 0.0f, 0.0f});
    CHECK(server.last_embed_body["model"] == "embed-model");
    CHECK(server.last_embed_body["texts"] == json::array({"a", "b"}));
}

TEST_CASE("http rerank backend speaks the {model,query,documents}->{scores} contract") {
    TestServer server;
    HttpRerankBackend backend(server.endpoint("/rerank"), "rerank-model");
    const auto scores = backend.score_pairs("q", {"d1", "d2", "d3"});
    CHECK(scores == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(server.last_rerank_body["query"] == "q");
    CHECK(server.last_rerank_body["documents"].size() == 3);
}

TEST_CASE("non-200 responses raise BackendError") {
    TestServer server;
    HttpChatBackend backend(server.endpoint("/broken"));
    CHECK_THROWS_WITH_AS(backend.complete(ping_request()), doctest::Contains("500"),
                         BackendError);
}

TEST_CASE("unreachable server raises BackendError") {
    HttpEndpoint e;
    e.base_url = "http://127.0.0.1:1";  // nothing listens there
    e.path = "/v1/chat/completions";
    e.timeout_seconds = 1;
    HttpChatBackend backend(e);
    CHECK_THROWS_AS(backend.complete(ping_request()), BackendError);
}
