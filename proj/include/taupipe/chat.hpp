#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace taupipe {

enum class Role { System, User, Assistant };

const char* role_name(Role role);

struct ChatMessage {
    Role role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    bool want_token_scores = false;
    std::string model_id;

    // At most one System message, and only in first position; User/Assistant
    // content non-empty. Throws ValidationError.
    void validate() const;

    const std::string* last_user_content() const;
};

struct TokenAlternative {
    std::string token;
    double log_probability;

    bool operator==(const TokenAlternative&) const = default;
};

struct ChatResponse {
    std::string text;
    // Present iff token scores were requested and the backend supports them.
    // Sorted by log_probability descending.
    std::optional<std::vector<TokenAlternative>> first_token_alternatives;

    bool operator==(const ChatResponse&) const = default;
};

nlohmann::json chat_request_to_json(const ChatRequest& request);
nlohmann::json chat_response_to_json(const ChatResponse& response);
ChatResponse chat_response_from_json(const nlohmann::json& j);

// Stable content key for caching and replay.
std::string chat_request_key(const ChatRequest& request);

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string describe() const = 0;
};

// --- HTTP backend (chat-completions wire shape) -----------------------------

struct HttpBackendConfig {
    std::string base_url;         // e.g. http://localhost:8089/v1
    std::string model_id;         // default model for requests without one
    std::string api_key_env;      // name of env var holding the key; may be empty
    int timeout_ms = 30000;
    int max_retries = 3;          // transient failures only
    int backoff_ms = 200;         // doubles per retry
    int top_logprobs = 20;        // alternatives requested with token scores
};

class HttpChatBackend : public ChatBackend {
  public:
    explicit HttpChatBackend(HttpBackendConfig config);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override;

    // Total transient retries performed over the backend's lifetime, for
    // observability alongside the log lines.
    int retries_total() const { return retries_total_; }

  private:
    HttpBackendConfig config_;
    std::string scheme_host_;  // scheme://host[:port]
    std::string path_prefix_;  // path part of base_url
    std::atomic_int retries_total_{0};
};

// --- record/replay cache -----------------------------------------------------
//
// Wraps another backend with an on-disk cache keyed by request hash. A
// recorded session replayed through the pipeline reproduces identical
// downstream artifacts without touching the inner backend.

class ReplayCacheBackend : public ChatBackend {
  public:
    ReplayCacheBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path cache_dir);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override;

    int hits() const { return hits_; }
    int misses() const { return misses_; }

  private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path cache_dir_;
    std::mutex mutex_;
    int hits_ = 0;
    int misses_ = 0;
};

}  // namespace taupipe
