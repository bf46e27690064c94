#include "taupipe/chat.hpp"

#include <algorithm>
#include <chrono>
#include <thread>


#include "taupipe/errors.hpp"
#include "taupipe/log.hpp"
#include "taupipe/util.hpp"

// vendored single-header httplib
#include <httplib.h>

namespace taupipe {

using nlohmann::json;

const char* role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "unknown";
}

void ChatRequest::validate() const {
    if (messages.empty()) throw ValidationError("chat request has no messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const ChatMessage& m = messages[i];
        if (m.role == Role::System) {
            if (i != 0) throw ValidationError("system message must be first");
        } else if (m.content.empty()) {
            throw ValidationError("empty content in message " + std::to_string(i));
        }
    }
    if (messages.size() == 1 && messages[0].role == Role::System)
        throw ValidationError("chat request has only a system message");
    if (temperature < 0.0) throw ValidationError("negative temperature");
    if (max_tokens <= 0) throw ValidationError("max_tokens must be positive");
}

const std::string* ChatRequest::last_user_content() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == Role::User) return &it->content;
    return nullptr;
}

json chat_request_to_json(const ChatRequest& request) {
    json msgs = json::array();
    for (const ChatMessage& m : request.messages)
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    json j;
    j["messages"] = std::move(msgs);
    j["temperature"] = request.temperature;
    j["max_tokens"] = request.max_tokens;
    j["want_token_scores"] = request.want_token_scores;
    j["model_id"] = request.model_id;
    return j;
}

json chat_response_to_json(const ChatResponse& response) {
    json j;
    j["text"] = response.text;
    if (response.first_token_alternatives) {
        json alts = json::array();
        for (const TokenAlternative& a : *response.first_token_alternatives)
            alts.push_back({{"token", a.token}, {"log_probability", a.log_probability}});
        j["first_token_alternatives"] = std::move(alts);
    }
    return j;
}

ChatResponse chat_response_from_json(const json& j) {
    ChatResponse response;
    response.text = j.at("text").get<std::string>();
    if (j.contains("first_token_alternatives")) {
        std::vector<TokenAlternative> alts;
        for (const json& a : j.at("first_token_alternatives"))
            alts.push_back({a.at("token").get<std::string>(),
                            a.at("log_probability").get<double>()});
        response.first_token_alternatives = std::move(alts);
    }
    return response;
}

std::string chat_request_key(const ChatRequest& request) {
    // nlohmann dumps object keys alphabetically, so this is canonical.
    return to_hex(fnv1a64(chat_request_to_json(request).dump()));
}

// --- HTTP backend -------------------------------------------------------------

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const std::string& url = config_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("backend base_url missing scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = url;
        path_prefix_.clear();
    } else {
        scheme_host_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpChatBackend::describe() const {
    return "http:" + config_.base_url + " model=" + config_.model_id;
}

static bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
    request.validate();

    json body;
    body["model"] = request.model_id.empty() ? config_.model_id : request.model_id;
    json msgs = json::array();
    for (const ChatMessage& m : request.messages)
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    if (request.want_token_scores) {
        body["logprobs"] = true;
        body["top_logprobs"] = config_.top_logprobs;
    }
    const std::string payload = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        std::string key = getenv_or(config_.api_key_env, "");
        if (key.empty())
            throw BackendError(BackendError::Kind::Auth,
                               "environment variable " + config_.api_key_env + " is not set");
        headers.emplace("Authorization", "Bearer " + key);
    }

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(0, config_.timeout_ms * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            int delay = config_.backoff_ms << (attempt - 1);
            log::warn("backend retry ", attempt, "/", config_.max_retries, " after ", delay,
                      "ms: ", last_error);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            ++retries_total_;
        }

        auto result = client.Post(path, headers, payload, "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status == 401 || result->status == 403)
            throw BackendError(BackendError::Kind::Auth,
                               "backend rejected credentials (HTTP " +
                                   std::to_string(result->status) + ")");
        if (retryable_status(result->status)) {
            last_error = "HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status != 200)
            throw BackendError(BackendError::Kind::Protocol,
                               "backend returned HTTP " + std::to_string(result->status) + ": " +
                                   result->body.substr(0, 200));

        json reply;
        try {
            reply = json::parse(result->body);
        } catch (const json::exception& e) {
            throw BackendError(BackendError::Kind::Protocol,
                               std::string("backend returned malformed JSON: ") + e.what());
        }
        try {
            const json& choice = reply.at("choices").at(0);
            ChatResponse response;
            response.text = choice.at("message").at("content").get<std::string>();
            if (request.want_token_scores && choice.contains("logprobs") &&
                !choice.at("logprobs").is_null()) {
                const json& content = choice.at("logprobs").at("content");
                if (!content.empty()) {
                    std::vector<TokenAlternative> alts;
                    for (const json& alt : content.at(0).at("top_logprobs"))
                        alts.push_back({alt.at("token").get<std::string>(),
                                        alt.at("logprob").get<double>()});
                    std::stable_sort(alts.begin(), alts.end(),
                                     [](const TokenAlternative& a, const TokenAlternative& b) {
                                         return a.log_probability > b.log_probability;
                                     });
                    response.first_token_alternatives = std::move(alts);
                }
            }
            return response;
        } catch (const json::exception& e) {
            throw BackendError(BackendError::Kind::Protocol,
                               std::string("unexpected response shape: ") + e.what());
        }
    }
    throw BackendError(BackendError::Kind::RetryExhausted,
                       "backend unavailable after " + std::to_string(config_.max_retries) +
                           " retries: " + last_error);
}

// --- record/replay cache -------------------------------------------------------

ReplayCacheBackend::ReplayCacheBackend(std::shared_ptr<ChatBackend> inner,
                                       std::filesystem::path cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
    std::filesystem::create_directories(cache_dir_);
}

std::string ReplayCacheBackend::describe() const {
    return "replay-cache(" + inner_->describe() + ") at " + cache_dir_.string();
}

ChatResponse ReplayCacheBackend::complete(const ChatRequest& request) {
    request.validate();
    const json request_json = chat_request_to_json(request);
    const std::string key = to_hex(fnv1a64(request_json.dump()));
    const std::filesystem::path entry_path = cache_dir_ / (key + ".json");

    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (std::filesystem::exists(entry_path)) {
            json entry;
            try {
                entry = json::parse(read_file(entry_path));
            } catch (const json::exception& e) {
                throw FileParseError(entry_path.string() + ": corrupt cache entry: " + e.what());
            }
            // Hash collisions and hand-edited entries must not silently
            // answer for a different request.
            if (entry.at("request") != request_json)
                throw ValidationError("cache entry " + key + " does not match request");
            ++hits_;
            return chat_response_from_json(entry.at("response"));
        }
    }

    ChatResponse response = inner_->complete(request);

    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++misses_;
        json entry;
        entry["request"] = request_json;
        entry["response"] = chat_response_to_json(response);
        write_file(entry_path, entry.dump(2) + "\n");
    }
    return response;
}

}  // namespace taupipe
