#include "legalrag/backends.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <thread>

// httplib is header-only and heavy; keep it out of our headers.
#include <httplib.h>

namespace legalrag {

using json = nlohmann::json;

std::vector<std::vector<float>> HashEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<float> v(dimension_);
        // Stretch the digest over as many bytes as the dimension needs.
        std::string material = sha256_hex(id() + "\x1f" + text);
        while (material.size() < dimension_ * 2) material += sha256_hex(material);
        for (std::size_t i = 0; i < dimension_; ++i) {
            const auto hex_to_int = [](char c) {
                return c <= '9' ? c - '0' : c - 'a' + 10;
            };
            const int byte = hex_to_int(material[2 * i]) * 16 + hex_to_int(material[2 * i + 1]);
            v[i] = static_cast<float>(byte - 127.5) / 127.5f;
        }
        l2_normalize(v);
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<std::vector<float>> IndicatorEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<float> v(markers_.size() + 1, 0.0f);
        bool any = false;
        for (std::size_t i = 0; i < markers_.size(); ++i) {
            std::size_t count = 0;
            for (std::size_t pos = text.find(markers_[i]); pos != std::string::npos;
                 pos = text.find(markers_[i], pos + 1)) {
                ++count;
            }
            if (count > 0) {
                v[i] = static_cast<float>(count);
                any = true;
            }
        }
        if (!any) v.back() = 1.0f;
        l2_normalize(v);
        out.push_back(std::move(v));
    }
    return out;
}

std::string IndicatorEmbeddingBackend::id() const {
    std::string joined;
    for (const auto& m : markers_) {
        joined += m;
        joined += '\x1f';
    }
    return "indicator-d" + std::to_string(markers_.size() + 1) + "-" +
           sha256_hex(joined).substr(0, 8);
}

std::vector<std::vector<float>> CachedEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out(texts.size());
    std::vector<std::size_t> misses;
    std::vector<std::string> keys(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        keys[i] = sha256_hex("embed\x1f" + inner_->id() + "\x1f" + texts[i]);
        if (cache_) {
            if (auto hit = cache_->get(keys[i])) {
                const json arr = json::parse(*hit);
                std::vector<float> v;
                v.reserve(arr.size());
                for (const auto& x : arr) v.push_back(x.get<float>());
                out[i] = std::move(v);
                ++hits_;
                continue;
            }
        }
        misses.push_back(i);
    }
    if (!misses.empty()) {
        std::vector<std::string> miss_texts;
        miss_texts.reserve(misses.size());
        for (std::size_t i : misses) miss_texts.push_back(texts[i]);

        std::vector<std::vector<float>> fresh;
        const int attempts = std::max(1, retry_.max_attempts);
        int backoff = std::max(0, retry_.backoff_ms);
        for (int attempt = 0;; ++attempt) {
            try {
                fresh = inner_->embed(miss_texts);
                break;
            } catch (const std::exception& e) {
                if (attempt + 1 >= attempts) {
                    throw BackendError("embedding failed after " + std::to_string(attempts) +
                                       " attempts (batch of " +
                                       std::to_string(miss_texts.size()) + " texts, first: \"" +
                                       miss_texts.front().substr(0, 40) + "\"): " + e.what());
                }
                if (backoff > 0) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                    backoff *= 2;
                }
            }
        }
        if (fresh.size() != miss_texts.size()) {
            throw BackendError("embedding backend returned " + std::to_string(fresh.size()) +
                               " vectors for " + std::to_string(miss_texts.size()) + " texts");
        }
        misses_ += misses.size();
        for (std::size_t j = 0; j < misses.size(); ++j) {
            if (cache_) {
                json arr = json::array();
                // Store as doubles: float -> double is exact, so the
                // round-trip reproduces the original float bits.
                for (float x : fresh[j]) arr.push_back(static_cast<double>(x));
                cache_->put(keys[misses[j]], arr.dump(), inner_->id());
            }
            out[misses[j]] = std::move(fresh[j]);
        }
    }
    return out;
}

namespace {

std::pair<std::unique_ptr<httplib::Client>, std::string> make_client(
    const HttpEndpoint& endpoint) {
    auto client = std::make_unique<httplib::Client>(endpoint.base_url);
    client->set_connection_timeout(endpoint.timeout_seconds);
    client->set_read_timeout(endpoint.timeout_seconds);
    std::string auth_value;
    if (!endpoint.api_key_env.empty()) {
        const char* key = std::getenv(endpoint.api_key_env.c_str());
        if (!key || *key == '\0') {
            throw BackendError("environment variable " + endpoint.api_key_env +
                               " is not set (backend auth)");
        }
        auth_value = endpoint.auth_prefix + key;
    }
    return {std::move(client), auth_value};
}

json post_json(const HttpEndpoint& endpoint, const json& body) {
    auto [client, auth_value] = make_client(endpoint);
    httplib::Headers headers;
    if (!auth_value.empty()) headers.emplace(endpoint.auth_header, auth_value);
    auto res = client->Post(endpoint.path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("HTTP request to " + endpoint.base_url + endpoint.path +
                           " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendError("HTTP " + std::to_string(res->status) + " from " + endpoint.base_url +
                           endpoint.path + ": " + res->body.substr(0, 512));
    }
    return json::parse(res->body);
}

}  // namespace

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpChatBackend::complete(const ChatRequest& request) {
    request.validate();
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json{{"role", chat_role_name(m.role)}, {"content", m.content}});
    }
    const json body{{"model", request.model_id},
                    {"messages", std::move(messages)},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens}};
    const json reply = post_json(endpoint_, body);
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("chat response missing choices[0].message.content: ") +
                           e.what());
    }
}

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpEndpoint endpoint, std::string model_id)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)) {}

std::vector<std::vector<float>> HttpEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
    const json body{{"model", model_id_}, {"texts", texts}};
    const json reply = post_json(endpoint_, body);
    std::vector<std::vector<float>> out;
    try {
        for (const auto& vec : reply.at("vectors")) {
            std::vector<float> v;
            v.reserve(vec.size());
            for (const auto& x : vec) v.push_back(x.get<float>());
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw BackendError(std::string("embedding response missing vectors[][]: ") + e.what());
    }
    return out;
}

HttpRerankBackend::HttpRerankBackend(HttpEndpoint endpoint, std::string model_id)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)) {}

std::vector<double> HttpRerankBackend::score_pairs(const std::string& query,
                                                   const std::vector<std::string>& docs) {
    const json body{{"model", model_id_}, {"query", query}, {"documents", docs}};
    const json reply = post_json(endpoint_, body);
    try {
        return reply.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("rerank response missing scores[]: ") + e.what());
    }
}

}  // namespace legalrag
