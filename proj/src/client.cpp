#include "traceconf/client.hpp"

#include <algorithm>
#include <cstdlib>

#include "httplib.h"
#include "traceconf/extraction.hpp"

namespace traceconf {

using nlohmann::json;

json to_json(const EndpointConfig& c) {
    // The key itself is never serialized, only the variable it is read from.
    return {{"base_url", c.base_url},
            {"model", c.model},
            {"temperature", c.temperature},
            {"max_tokens", c.max_tokens},
            {"top_logprobs", c.top_logprobs},
            {"timeout_seconds", c.timeout_seconds},
            {"max_concurrent", c.max_concurrent},
            {"api_key_env", c.api_key_env},
            {"attempts", c.attempts},
            {"backoff_ms", c.backoff_ms}};
}

EndpointConfig endpoint_config_from_json(const json& j) {
    EndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.attempts = j.value("attempts", c.attempts);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    return c;
}

std::string ChatResponse::raw_text() const {
    if (!reasoning) return content;
    return std::string(kThinkOpen) + *reasoning + std::string(kThinkClose) + content;
}

json build_chat_request(const EndpointConfig& config, const std::string& prompt) {
    json req = {{"model", config.model},
                {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                {"temperature", config.temperature},
                {"max_tokens", config.max_tokens}};
    if (config.top_logprobs > 0) {
        req["logprobs"] = true;
        req["top_logprobs"] = config.top_logprobs;
    }
    return req;
}

ChatResponse parse_chat_response(const json& body) {
    if (!body.is_object()) throw ProtocolError("chat response is not a JSON object");
    auto choices = body.find("choices");
    if (choices == body.end() || !choices->is_array() || choices->empty()) {
        throw ProtocolError("chat response has no choices");
    }
    const json& choice = (*choices)[0];
    auto message = choice.find("message");
    if (message == choice.end() || !message->is_object()) throw ProtocolError("chat response choice has no message");

    ChatResponse out;
    auto content = message->find("content");
    if (content == message->end()) throw ProtocolError("chat response message has no content");
    if (content->is_string()) {
        out.content = content->get<std::string>();
    } else if (!content->is_null()) {
        throw ProtocolError("chat response content is not a string");
    }
    for (const char* key : {"reasoning_content", "reasoning"}) {
        if (auto r = message->find(key); r != message->end() && r->is_string()) {
            out.reasoning = r->get<std::string>();
            break;
        }
    }

    auto logprobs = choice.find("logprobs");
    if (logprobs == choice.end() || logprobs->is_null()) return out;
    auto steps = logprobs->find("content");
    if (steps == logprobs->end() || !steps->is_array()) return out;
    out.has_logprobs = true;
    try {
        for (const auto& s : *steps) {
            TokenStep step;
            step.token = s.at("token").get<std::string>();
            step.logprob = std::min(0.0, s.at("logprob").get<double>());
            if (auto top = s.find("top_logprobs"); top != s.end() && top->is_array()) {
                for (const auto& alt : *top) {
                    step.top.push_back({alt.at("token").get<std::string>(), std::min(0.0, alt.at("logprob").get<double>())});
                }
            }
            std::stable_sort(step.top.begin(), step.top.end(),
                             [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
            out.tokens.push_back(std::move(step));
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed logprobs in chat response: ") + e.what());
    }
    return out;
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig config) : config_(std::move(config)) {
    const std::size_t scheme = config_.base_url.find("://");
    if (scheme == std::string::npos) throw Error("endpoint base_url needs a scheme: " + config_.base_url);
    const std::size_t slash = config_.base_url.find('/', scheme + 3);
    origin_ = config_.base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : config_.base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    path_ = prefix + "/chat/completions";
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
}

std::string HttpChatEndpoint::identity() const { return config_.base_url + "#" + config_.model; }

ChatResponse HttpChatEndpoint::complete(const std::string& prompt) {
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::seconds(std::min(config_.timeout_seconds, 30)));
    client.set_read_timeout(std::chrono::seconds(config_.timeout_seconds));
    client.set_write_timeout(std::chrono::seconds(config_.timeout_seconds));
    if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);

    const std::string body = build_chat_request(config_, prompt).dump();
    auto res = client.Post(path_, httplib::Headers{}, body, "application/json");
    if (!res) throw TransientError("request to " + origin_ + path_ + " failed: " + httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 408 || status == 429 || status >= 500) {
        throw TransientError("endpoint returned HTTP " + std::to_string(status));
    }
    if (status < 200 || status >= 300) {
        throw RequestRejected("endpoint returned HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("chat response is not JSON: ") + e.what());
    }
    return parse_chat_response(parsed);
}

}  // namespace traceconf
