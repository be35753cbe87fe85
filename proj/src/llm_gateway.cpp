#include "legalrag/llm_gateway.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <thread>

namespace legalrag {

using json = nlohmann::json;

const char* chat_role_name(ChatRole role) {
    switch (role) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

void ChatRequest::validate() const {
    if (messages.empty()) throw std::invalid_argument("chat request: messages must be non-empty");
    if (messages.front().role != ChatRole::System) {
        throw std::invalid_argument("chat request: first message must have role=system");
    }
    if (temperature < 0.0) throw std::invalid_argument("chat request: temperature must be >= 0");
    if (max_tokens <= 0) throw std::invalid_argument("chat request: max_tokens must be > 0");
}

std::string ChatRequest::canonical() const {
    json msgs = json::array();
    for (const auto& m : messages) {
        msgs.push_back(json{{"content", m.content}, {"role", chat_role_name(m.role)}});
    }
    // nlohmann::json keeps object keys sorted, so this dump is order-stable.
    json j{{"max_tokens", max_tokens},
           {"messages", std::move(msgs)},
           {"model", model_id},
           {"temperature", temperature}};
    return j.dump();
}

std::string ChatRequest::hash() const { return sha256_hex(canonical()); }

std::string MockChatBackend::complete(const ChatRequest& request) {
    request.validate();
    if (fail_remaining_.load() > 0) {
        --fail_remaining_;
        throw BackendError("mock backend: injected failure", request.hash());
    }
    std::string haystack;
    for (const auto& m : request.messages) {
        haystack += m.content;
        haystack += '\n';
    }
    for (const auto& rule : rules_) {
        if (haystack.find(rule.pattern) != std::string::npos) return rule.response;
    }
    return default_response_;
}

KvCache::KvCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path KvCache::entry_path(const std::string& key_hash) const {
    return root_ / key_hash.substr(0, 2) / (key_hash + ".json");
}

std::optional<std::string> KvCache::get(const std::string& key_hash) const {
    const auto path = entry_path(key_hash);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    json entry = json::parse(read_file(path));
    return entry.at("value").get<std::string>();
}

void KvCache::put(const std::string& key_hash, const std::string& value,
                  const std::string& backend_id) const {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    json entry{{"key", key_hash},
               {"value", value},
               {"backend_id", backend_id},
               {"timestamp", now}};
    write_file_atomic(entry_path(key_hash), entry.dump());
}

std::string call_with_retries(const std::function<std::string()>& attempt,
                              const RetryPolicy& retry, const std::string& request_hash) {
    const int attempts = std::max(1, retry.max_attempts);
    int backoff = std::max(0, retry.backoff_ms);
    std::string last_error;
    for (int i = 0; i < attempts; ++i) {
        try {
            return attempt();
        } catch (const std::exception& e) {
            last_error = e.what();
            if (i + 1 < attempts && backoff > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
        }
    }
    throw BackendError("backend failed after " + std::to_string(attempts) +
                           " attempts (request " + request_hash + "): " + last_error,
                       request_hash);
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<KvCache> cache,
                       RetryPolicy retry, int max_concurrent_requests)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      retry_(retry),
      available_slots_(std::max(1, max_concurrent_requests)) {
    if (!backend_) throw std::invalid_argument("gateway: backend must not be null");
}

std::string LlmGateway::complete(const ChatRequest& request) {
    request.validate();
    const std::string key = request.hash();
    ++calls_;
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            ++cache_hits_;
            return *hit;
        }
    }

    {
        std::unique_lock lock(mutex_);
        slot_free_.wait(lock, [&] { return available_slots_ > 0; });
        --available_slots_;
    }
    std::string response;
    try {
        response = call_with_retries([&] { return backend_->complete(request); }, retry_, key);
    } catch (...) {
        ++backend_errors_;
        {
            std::lock_guard lock(mutex_);
            ++available_slots_;
        }
        slot_free_.notify_one();
        throw;
    }
    {
        std::lock_guard lock(mutex_);
        ++available_slots_;
    }
    slot_free_.notify_one();

    if (cache_) cache_->put(key, response, backend_->id());
    return response;
}

GatewayStats LlmGateway::stats() const {
    return GatewayStats{calls_.load(), cache_hits_.load(), backend_errors_.load()};
}

}  // namespace legalrag
