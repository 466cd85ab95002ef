#include "redchain/chat_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "redchain/error.hpp"

namespace redchain {

namespace {

using json = nlohmann::json;

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                      std::chrono::milliseconds timeout) override {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw TransportFailure("malformed URL: " + url);
        auto path_start = url.find('/', scheme_end + 3);
        std::string origin = url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        if (!client.is_valid()) throw TransportFailure("unsupported URL: " + url);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path, h, body, "application/json");
        if (!res) throw TransportFailure(httplib::to_string(res.error()));
        return HttpResponse{res->status, res->body};
    }
};

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

CompletionParams completion_params(const CampaignConfig& config) {
    CompletionParams p;
    p.temperature = config.temperature;
    p.max_response_tokens = config.response_reserve;
    p.model = config.model;
    p.setup_as_system_role = config.setup_as_system_role;
    return p;
}

std::unique_ptr<HttpTransport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

ChatClientOptions chat_options_from_env(CompletionParams* params) {
    ChatClientOptions o;
    if (const char* url = std::getenv("REDCHAIN_LLM_URL")) o.url = url;
    if (const char* key = std::getenv("REDCHAIN_LLM_API_KEY")) o.api_key = key;
    if (params) {
        if (const char* model = std::getenv("REDCHAIN_LLM_MODEL")) params->model = model;
    }
    return o;
}

std::string build_chat_request(const PromptBundle& bundle, const CompletionParams& params) {
    json messages = json::array();
    std::string_view composed = bundle.composed;
    // Split only when the composed text really starts with SETUP, so the two
    // messages concatenate back to the composed prompt byte for byte.
    std::string setup_lead = bundle.setup + "\n\n";
    if (params.setup_as_system_role && !bundle.setup.empty() && composed.starts_with(setup_lead)) {
        messages.push_back({{"role", "system"}, {"content", bundle.setup}});
        messages.push_back({{"role", "user"}, {"content", std::string(composed.substr(setup_lead.size()))}});
    } else {
        messages.push_back({{"role", "user"}, {"content", bundle.composed}});
    }
    json req = {
        {"model", params.model},
        {"temperature", params.temperature},
        {"max_tokens", params.max_response_tokens},
        {"messages", messages},
    };
    return req.dump();
}

std::string parse_chat_response(const std::string& body) {
    try {
        json doc = json::parse(body);
        const json& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw std::runtime_error("content is not a string");
        return content.get<std::string>();
    } catch (const std::exception& e) {
        throw GatewayError(GatewayError::Kind::ModelRejected, std::string("malformed completion response: ") + e.what());
    }
}

ChatCompletionClient::ChatCompletionClient(ChatClientOptions options, std::unique_ptr<HttpTransport> transport,
                                           Sleeper sleeper)
    : options_(std::move(options)), transport_(std::move(transport)), sleep_(std::move(sleeper)) {
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatCompletionClient::complete(const PromptBundle& bundle, const CompletionParams& params) {
    const std::string body = build_chat_request(bundle, params);
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!options_.api_key.empty()) headers["Authorization"] = "Bearer " + options_.api_key;

    std::string last_error;
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            sleep_(backoff);
            backoff *= 2;
        }
        HttpResponse res;
        try {
            res = transport_->post(options_.url, body, headers, params.timeout);
        } catch (const TransportFailure& e) {
            last_error = e.what();
            continue;
        }
        if (res.status >= 200 && res.status < 300) return parse_chat_response(res.body);
        if (retryable(res.status)) {
            last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
            continue;
        }
        throw GatewayError(GatewayError::Kind::ModelRejected, "HTTP " + std::to_string(res.status) + ": " + res.body);
    }
    throw GatewayError(GatewayError::Kind::Transport, "model endpoint failed after " +
                                                          std::to_string(options_.max_retries + 1) +
                                                          " attempts: " + last_error);
}

}  // namespace redchain
