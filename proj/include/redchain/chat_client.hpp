#pragma once

// Live chat-completion client. The composed prompt is sent unchanged as one
// user message (or SETUP as the system message when configured).

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "redchain/gateway.hpp"

namespace redchain {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection-level failure (refused, reset, timed out).
class TransportFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& body,
                              const std::map<std::string, std::string>& headers,
                              std::chrono::milliseconds timeout) = 0;
};

std::unique_ptr<HttpTransport> make_http_transport();

struct ChatClientOptions {
    std::string url = "https://api.openai.com/v1/chat/completions";
    std::string api_key;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
};

/// REDCHAIN_LLM_URL, REDCHAIN_LLM_API_KEY; REDCHAIN_LLM_MODEL overrides `params.model`.
ChatClientOptions chat_options_from_env(CompletionParams* params = nullptr);

std::string build_chat_request(const PromptBundle& bundle, const CompletionParams& params);
/// choices[0].message.content; throws GatewayError(ModelRejected) on a malformed body.
std::string parse_chat_response(const std::string& body);

class ChatCompletionClient : public ModelGateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    ChatCompletionClient(ChatClientOptions options, std::unique_ptr<HttpTransport> transport,
                         Sleeper sleeper = nullptr);

    std::string complete(const PromptBundle& bundle, const CompletionParams& params) override;

private:
    ChatClientOptions options_;
    std::unique_ptr<HttpTransport> transport_;
    Sleeper sleep_;
};

}  // namespace redchain
