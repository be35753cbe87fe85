#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "legalrag/util.hpp"

namespace legalrag {

enum class ChatRole { System, User, Assistant };

const char* chat_role_name(ChatRole role);

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;  // non-empty, first message is system
    double temperature = 0.0;
    int max_tokens = 2048;

    void validate() const;

    /// Order-stable serialization over all fields; two requests hash equal
    /// iff every field matches.
    std::string canonical() const;
    std::string hash() const;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Deterministic rule-based backend: first rule whose pattern is a substring
/// of the concatenated message contents wins; otherwise the default response.
class MockChatBackend : public ChatBackend {
public:
    struct Rule {
        std::string pattern;
        std::string response;
    };

    MockChatBackend(std::vector<Rule> rules, std::string default_response)
        : rules_(std::move(rules)), default_response_(std::move(default_response)) {}

    std::string complete(const ChatRequest& request) override;
    std::string id() const override { return "mock"; }

    /// Fail the next n calls with BackendError (for retry tests).
    void fail_next(int n) { fail_remaining_ = n; }

private:
    std::vector<Rule> rules_;
    std::string default_response_;
    std::atomic<int> fail_remaining_{0};
};

/// Content-addressed disk cache: one file per entry under a two-hex-char
/// prefix directory. Writes are atomic (temp file + rename); a hit returns
/// the byte-identical prior value.
class KvCache {
public:
    explicit KvCache(std::filesystem::path root);

    std::optional<std::string> get(const std::string& key_hash) const;
    void put(const std::string& key_hash, const std::string& value,
             const std::string& backend_id) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path entry_path(const std::string& key_hash) const;
    std::filesystem::path root_;
};

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 200;  // doubled after each failed attempt
};

struct GatewayStats {
    uint64_t calls = 0;
    uint64_t cache_hits = 0;
    uint64_t backend_errors = 0;
};

/// Single chokepoint for chat-completion calls: cache lookup, bounded
/// concurrency, retries with exponential backoff.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<KvCache> cache,
               RetryPolicy retry = {}, int max_concurrent_requests = 4);

    /// Cached response if present, else backend call (with retries), stored
    /// and returned. Errors after max_attempts carry the request hash.
    std::string complete(const ChatRequest& request);

    GatewayStats stats() const;
    std::string backend_id() const { return backend_->id(); }

private:
    class Slot;

    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<KvCache> cache_;
    RetryPolicy retry_;

    mutable std::mutex mutex_;
    std::condition_variable slot_free_;
    int available_slots_;

    std::atomic<uint64_t> calls_{0};
    std::atomic<uint64_t> cache_hits_{0};
    std::atomic<uint64_t> backend_errors_{0};
};

/// Retry loop shared by all backend kinds.
std::string call_with_retries(const std::function<std::string()>& attempt,
                              const RetryPolicy& retry, const std::string& request_hash);

}  // namespace legalrag
