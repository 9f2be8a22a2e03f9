#include "anomsynth/live_backends.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "anomsynth/error.hpp"
#include "anomsynth/hashing.hpp"
#include "anomsynth/png_io.hpp"

namespace anomsynth::live {

nlohmann::json chat_completion_body(const std::string& model, const std::string& question, const Image* image) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", question}});
    if (image != nullptr) {
        const auto png_bytes = png::encode(*image);
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(png_bytes)}}}});
    }
    return {{"model", model}, {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

HttpVllm::HttpVllm(HttpVllmOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw Error(ErrorKind::Config, "http-vllm needs a base_url");
    if (options_.max_retries < 0) throw Error(ErrorKind::Config, "max_retries must be >= 0");
}

HttpVllmOptions HttpVllm::options_from_json(const nlohmann::json& config) {
    HttpVllmOptions o;
    o.base_url = config.value("base_url", std::string{});
    o.path = config.value("path", o.path);
    o.model = config.value("model", o.model);
    o.api_key_env = config.value("api_key_env", o.api_key_env);
    o.max_retries = config.value("max_retries", o.max_retries);
    o.initial_backoff = std::chrono::milliseconds(config.value("initial_backoff_ms", 500));
    o.timeout = std::chrono::seconds(config.value("timeout_s", 60));
    return o;
}

BackendDescriptor HttpVllm::descriptor() const {
    BackendDescriptor d;
    d.kind = BackendKind::Vllm;
    d.name = "http-vllm";
    d.deterministic = false;
    d.concurrent_safe = true;
    d.config = {{"base_url", options_.base_url}, {"path", options_.path}, {"model", options_.model},
                {"max_retries", options_.max_retries}};
    return d;
}

std::string HttpVllm::ask(const VllmRequest& request) {
    httplib::Client client(options_.base_url);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    client.set_connection_timeout(options_.timeout);

    httplib::Headers headers;
    if (!options_.api_key_env.empty()) {
        if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const std::string body = chat_completion_body(options_.model, request.question, request.image).dump();

    std::string last_failure = "no attempt made";
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        auto res = client.Post(options_.path, headers, body, "application/json");
        if (!res) {
            last_failure = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_failure = "server returned HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw TransportError("VLLM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body,
                                 attempt);
        }
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("unexpected chat-completion payload: ") + e.what(), res->body);
        }
    }
    throw TransportError("VLLM endpoint unreachable after " + std::to_string(options_.max_retries) +
                             " retries (" + last_failure + ")",
                         options_.max_retries);
}

}  // namespace anomsynth::live
