#pragma once

// Wiring: build the gateway, executor, prompt engine and grammar a
// configuration asks for, then run the loop. Shared by the CLI, the service,
// the eval harness and the Python binding.

#include <atomic>
#include <memory>
#include <string>

#include "redchain/controller.hpp"
#include "redchain/netsim.hpp"

namespace redchain {

struct CampaignSetup {
    CampaignConfig config;
    std::shared_ptr<const NetworkModel> network;
    std::unique_ptr<ModelGateway> gateway;
    std::unique_ptr<Executor> executor;
    std::shared_ptr<const PromptEngine> engine;
    std::shared_ptr<const PromptGrammar> grammar;
    CompletionParams params;
};

/// Scripted model when config.script is set, else the live chat endpoint
/// (REDCHAIN_LLM_API_KEY must be set). `gateway` overrides both.
CampaignSetup prepare_campaign(const CampaignConfig& config, std::unique_ptr<ModelGateway> gateway = nullptr);

struct RunOptions {
    ApprovalGate* gate = nullptr;
    EventSink sink;
    const std::atomic<bool>* cancel = nullptr;
    Clock* clock = nullptr;    // default: a fresh LogicalClock
    std::string campaign_id;   // default: derive_campaign_id(config)
};

struct CampaignOutcome {
    CampaignState state;
    Transcript transcript;
};

CampaignOutcome run_prepared(CampaignSetup& setup, const RunOptions& options = {});
CampaignOutcome run_configured_campaign(const CampaignConfig& config, const RunOptions& options = {});

}  // namespace redchain
