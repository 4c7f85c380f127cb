#pragma once

// Minimal chat-completions client: one user message in, the completion text
// plus per-token logprobs (with top alternatives) out.

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "traceconf/error.hpp"
#include "traceconf/records.hpp"

namespace traceconf {

struct EndpointConfig {
    std::string base_url = "http://localhost:8000/v1";  // POSTs to <base_url>/chat/completions
    std::string model;
    double temperature = 0.0;
    int max_tokens = 4096;
    int top_logprobs = 30;  // 0 disables logprob collection
    int timeout_seconds = 600;
    int max_concurrent = 8;
    std::string api_key_env = "OPENAI_API_KEY";
    int attempts = 3;
    int backoff_ms = 500;  // doubled after every failed attempt
};

nlohmann::json to_json(const EndpointConfig& config);
EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

/// Retryable failure: connection errors, timeouts, 408/429/5xx, malformed
/// judge output.
class TransientError : public Error {
public:
    using Error::Error;
};

/// Request rejected for good (other 4xx); not retried.
class RequestRejected : public Error {
public:
    using Error::Error;
};

struct ChatResponse {
    std::string content;
    std::optional<std::string> reasoning;  // separate reasoning channel, if the server splits it out
    std::vector<TokenStep> tokens;
    bool has_logprobs = false;

    /// Reasoning (when split out) wrapped back into tags, then the content.
    std::string raw_text() const;
};

class ChatEndpoint {
public:
    virtual ~ChatEndpoint() = default;
    /// Must be safe to call from several threads at once.
    virtual ChatResponse complete(const std::string& prompt) = 0;
    virtual std::string identity() const = 0;
};

nlohmann::json build_chat_request(const EndpointConfig& config, const std::string& prompt);
/// Throws ProtocolError when the body lacks choices[0].message.content.
ChatResponse parse_chat_response(const nlohmann::json& body);

class HttpChatEndpoint : public ChatEndpoint {
public:
    explicit HttpChatEndpoint(EndpointConfig config);

    ChatResponse complete(const std::string& prompt) override;
    std::string identity() const override;

    const EndpointConfig& config() const { return config_; }

private:
    EndpointConfig config_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;    // path prefix + /chat/completions
    std::string api_key_;
};

/// Calls `fn` up to `attempts` times, sleeping backoff_ms * 2^i between
/// attempts, retrying only TransientError. Returns the attempt count used
/// through `attempts_used` when given.
template <class F>
auto with_retry(int attempts, int backoff_ms, F&& fn, int* attempts_used = nullptr) {
    attempts = std::max(1, attempts);
    for (int i = 0;; ++i) {
        try {
            if (attempts_used) *attempts_used = i + 1;
            return fn();
        } catch (const TransientError&) {
            if (i + 1 >= attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(backoff_ms) << i));
        }
    }
}

}  // namespace traceconf
