#pragma once

#include <chrono>
#include <cstddef>
#include <string>

#include "redchain/domain.hpp"

namespace redchain {

struct CompletionParams {
    double temperature = 1.0;
    std::size_t max_response_tokens = 1024;
    std::string model = "gpt-3.5-turbo";
    bool setup_as_system_role = false;
    std::chrono::milliseconds timeout{60000};
};

CompletionParams completion_params(const CampaignConfig& config);

/// One model completion per call. Implementations throw GatewayError.
class ModelGateway {
public:
    virtual ~ModelGateway() = default;
    virtual std::string complete(const PromptBundle& bundle, const CompletionParams& params) = 0;
};

}  // namespace redchain
