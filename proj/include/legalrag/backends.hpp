#pragma once

#include <memory>
#include <string>
#include <vector>

#include "legalrag/dense_index.hpp"
#include "legalrag/llm_gateway.hpp"
#include "legalrag/rerank.hpp"

namespace legalrag {

/// Deterministic offline embedding: d floats derived from the SHA-256 of
/// (id, text), L2-normalized. Unrelated texts land on effectively random
/// directions.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dimension = 8, std::string salt = "")
        : dimension_(dimension), salt_(std::move(salt)) {}

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
    std::string id() const override { return "hash-d" + std::to_string(dimension_) + salt_; }

private:
    std::size_t dimension_;
    std::string salt_;
};

/// Transparent test/offline embedding: axis i of the output counts
/// occurrences of marker i in the text (as a substring), then the vector is
/// L2-normalized; a text containing no marker gets the last axis as a
/// fallback so vectors are never zero. Dimension = markers.size() + 1.
class IndicatorEmbeddingBackend : public EmbeddingBackend {
public:
    explicit IndicatorEmbeddingBackend(std::vector<std::string> markers)
        : markers_(std::move(markers)) {}

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
    std::string id() const override;

private:
    std::vector<std::string> markers_;
};

/// Per-text disk cache around any embedding backend; uncached batches are
/// retried with exponential backoff before the error propagates.
class CachedEmbeddingBackend : public EmbeddingBackend {
public:
    CachedEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner, std::shared_ptr<KvCache> cache,
                           RetryPolicy retry = {})
        : inner_(std::move(inner)), cache_(std::move(cache)), retry_(retry) {}

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
    std::string id() const override { return inner_->id(); }

    uint64_t cache_hits() const { return hits_; }
    uint64_t backend_texts() const { return misses_; }

private:
    std::shared_ptr<EmbeddingBackend> inner_;
    std::shared_ptr<KvCache> cache_;
    RetryPolicy retry_;
    std::atomic<uint64_t> hits_{0};
    std::atomic<uint64_t> misses_{0};
};

struct HttpEndpoint {
    std::string base_url;  // e.g. http://127.0.0.1:8089
    std::string path;      // e.g. /v1/chat/completions
    std::string api_key_env;  // env var holding the secret; empty = no auth
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    int timeout_seconds = 120;
};

/// OpenAI-style chat completions:
///   POST {model, messages[], temperature, max_tokens}
///   ->   {choices: [{message: {content}}]}
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpEndpoint endpoint);
    std::string complete(const ChatRequest& request) override;
    std::string id() const override { return "http:" + endpoint_.base_url + endpoint_.path; }

private:
    HttpEndpoint endpoint_;
};

/// Embedding endpoint: POST {model, texts[]} -> {vectors[][]}.
class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(HttpEndpoint endpoint, std::string model_id);
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
    std::string id() const override { return "http:" + endpoint_.base_url + endpoint_.path; }

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
};

/// Rerank endpoint: POST {model, query, documents[]} -> {scores[]}.
class HttpRerankBackend : public RerankBackend {
public:
    HttpRerankBackend(HttpEndpoint endpoint, std::string model_id);
    std::vector<double> score_pairs(const std::string& query,
                                    const std::vector<std::string>& docs) override;
    std::string id() const override { return "http:" + endpoint_.base_url + endpoint_.path; }

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
};

}  // namespace legalrag
