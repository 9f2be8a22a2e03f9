#pragma once

#include <chrono>

#include "anomsynth/backends.hpp"

namespace anomsynth::live {

struct HttpVllmOptions {
    /// Base URL, e.g. "https://api.example.com" or "http://127.0.0.1:8080".
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4-vision-preview";
    /// Name of the environment variable holding the bearer token; empty = no auth.
    std::string api_key_env = "ANOMSYNTH_VLLM_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{60};
};

/// Chat-completions style client. The question and the PNG-encoded image go
/// in one user message; the answer is `choices[0].message.content`.
class HttpVllm final : public Vllm {
public:
    explicit HttpVllm(HttpVllmOptions options);

    BackendDescriptor descriptor() const override;
    std::string ask(const VllmRequest& request) override;

    static HttpVllmOptions options_from_json(const nlohmann::json& config);

private:
    HttpVllmOptions options_;
};

/// Builds the request body sent by HttpVllm (exposed for tests).
nlohmann::json chat_completion_body(const std::string& model, const std::string& question, const Image* image);

}  // namespace anomsynth::live
