#include "redchain/campaign.hpp"

#include <cstdlib>

#include "redchain/chat_client.hpp"
#include "redchain/error.hpp"
#include "redchain/scripted_model.hpp"

namespace redchain {

CampaignSetup prepare_campaign(const CampaignConfig& config, std::unique_ptr<ModelGateway> gateway) {
    validate_config(config);
    CampaignSetup s;
    s.config = config;
    s.network = std::make_shared<const NetworkModel>(load_network(config.scenario));
    s.executor = make_executor(config, s.network);

    TemplateSet templates = config.templates.empty() ? builtin_templates() : load_templates(config.templates);
    s.grammar = std::make_shared<const PromptGrammar>(config.grammar.empty()
                                                          ? PromptGrammar::builtin(templates)
                                                          : PromptGrammar::load(config.grammar, templates));
    s.engine = std::make_shared<const PromptEngine>(std::move(templates), config.prompt_budget());
    s.params = completion_params(config);

    if (gateway) {
        s.gateway = std::move(gateway);
    } else if (!config.script.empty()) {
        std::optional<std::uint64_t> seed;
        if (config.seed_set) seed = config.seed;
        s.gateway = std::make_unique<ScriptedModel>(load_script(config.script), seed);
    } else {
        auto options = chat_options_from_env(&s.params);
        if (options.api_key.empty()) {
            throw ConfigError("script: not set, and REDCHAIN_LLM_API_KEY is empty (no model to talk to)");
        }
        s.gateway = std::make_unique<ChatCompletionClient>(options, make_http_transport());
    }
    return s;
}

CampaignOutcome run_prepared(CampaignSetup& setup, const RunOptions& options) {
    LogicalClock fallback;
    Clock& clock = options.clock ? *options.clock : fallback;
    EventLog log(clock, options.sink);
    StepContext ctx{*setup.gateway, *setup.executor, *setup.engine, setup.params, setup.config.mode,
                    options.gate, setup.grammar.get(), options.cancel, {}};
    CampaignOutcome out;
    out.state = run_campaign(new_campaign(setup.config), ctx, log);
    std::string id = options.campaign_id.empty() ? derive_campaign_id(setup.config) : options.campaign_id;
    out.transcript = make_transcript(id, setup.config, log, out.state);
    return out;
}

CampaignOutcome run_configured_campaign(const CampaignConfig& config, const RunOptions& options) {
    auto setup = prepare_campaign(config);
    return run_prepared(setup, options);
}

}  // namespace redchain
