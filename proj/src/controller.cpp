#include "redchain/controller.hpp"

#include <array>
#include <chrono>
#include <cstdio>

#include "redchain/error.hpp"
#include "redchain/json_io.hpp"

namespace redchain {

using nlohmann::json;

std::int64_t WallClock::now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

constexpr std::array<std::pair<ApprovalVerdict, std::string_view>, 4> kVerdictNames{{
    {ApprovalVerdict::Approve, "Approve"},
    {ApprovalVerdict::Deny, "Deny"},
    {ApprovalVerdict::Edit, "Edit"},
    {ApprovalVerdict::TakeOver, "TakeOver"},
}};

constexpr std::string_view kDenied = "Action denied by operator.";

std::string_view gateway_kind(GatewayError::Kind k) {
    switch (k) {
        case GatewayError::Kind::NoRuleMatched: return "NoRuleMatched";
        case GatewayError::Kind::ModelRejected: return "ModelRejected";
        case GatewayError::Kind::Transport: return "Transport";
    }
    return "Transport";
}

CommandRecord unrun(const std::string& command, CommandFailure why, std::string output = {}) {
    CommandRecord r;
    r.command = command;
    r.not_run = true;
    r.exit_status = -1;
    r.failure = why;
    r.output = std::move(output);
    return r;
}

// Thrown inside a step to abandon it; the caller reports it.
struct StepAbort {
    StopReason reason;
    PromptStage stage;
    std::string kind;
    std::string message;
};

class StepRun {
public:
    StepRun(StepContext& ctx, EventLog& log, std::size_t index) : ctx_(ctx), log_(log), index_(index) {}

    // Compose, ask, parse; one corrective retry. nullopt after the second miss.
    template <typename T, typename Compose, typename Parse>
    std::optional<T> ask(PromptStage stage, Compose compose, Parse parse) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            PromptBundle bundle = compose(attempt > 0);
            if (ctx_.grammar) {
                if (auto v = ctx_.grammar->validate(bundle); !v) {
                    throw ConsistencyError("composed " + std::string(to_string(stage)) +
                                           " prompt violates the grammar: " + v.reason);
                }
            }
            log_.emit(index_, StepEventKind::PromptComposed, stage, {{"attempt", attempt}, {"bundle", bundle}});
            std::string response;
            try {
                response = ctx_.gateway.complete(bundle, ctx_.params);
            } catch (const GatewayError& e) {
                throw StepAbort{StopReason::GatewayError, stage, std::string(gateway_kind(e.kind())), e.what()};
            }
            auto outcome = parse(response);
            json payload{{"attempt", attempt}, {"response", response}, {"parsed", outcome.ok()}};
            if (!outcome.ok()) {
                payload["reason"] = outcome.reason();
                payload["excerpt"] = outcome.excerpt();
            }
            log_.emit(index_, StepEventKind::ModelResponded, stage, std::move(payload));
            if (outcome.ok()) {
                bundles.push_back(std::move(bundle));
                return outcome.value();
            }
        }
        return std::nullopt;
    }

    std::vector<PromptBundle> bundles;

private:
    StepContext& ctx_;
    EventLog& log_;
    std::size_t index_;
};

void check_replacement(const ActionBlock& block) {
    if (block.commands.empty()) throw ConsistencyError("edited action has no commands");
    if (auto spans = detect_placeholders(block); !spans.empty()) {
        throw ConsistencyError("edited action still contains placeholder " + spans.front().text);
    }
}

struct Acted {
    ActionBlock action;
    ExecutionResult execution;
    bool denied = false;
};

Acted act(const ActionBlock& proposed, std::size_t index, StepContext& ctx, EventLog& log) {
    Acted out{proposed, {}, false};
    auto spans = detect_placeholders(proposed);
    if (!spans.empty()) {
        json found = json::array();
        for (const auto& s : spans) {
            found.push_back({{"command_index", s.command_index}, {"offset", s.offset}, {"text", s.text}});
        }
        for (std::size_t i = 0; i < proposed.commands.size(); ++i) {
            std::string why;
            for (const auto& s : spans) {
                if (s.command_index == i) {
                    why = "rejected before dispatch: unresolved placeholder " + s.text;
                    break;
                }
            }
            if (why.empty()) why = "rejected before dispatch: block contains an unresolved placeholder";
            out.execution.records.push_back(unrun(proposed.commands[i], CommandFailure::Rejected, why));
        }
        log.emit(index, StepEventKind::ActionExecuted, PromptStage::Execution,
                 {{"action", out.action}, {"execution", out.execution}, {"rejected", true}, {"placeholders", found}});
        return out;
    }

    if (ctx.mode == OperatingMode::Assisted) {
        if (!ctx.gate) throw ConfigError("mode: assisted needs an approval gate");
        log.emit(index, StepEventKind::ActionPendingApproval, PromptStage::Execution, {{"action", proposed}});
        ApprovalDecision d = ctx.gate->decide(index, proposed);
        json payload{{"decision", to_string(d.verdict)}, {"note", d.note}};
        switch (d.verdict) {
            case ApprovalVerdict::Approve: break;
            case ApprovalVerdict::Deny: out.denied = true; break;
            case ApprovalVerdict::Edit:
                check_replacement(d.replacement);
                out.action = d.replacement;
                payload["action"] = d.replacement;
                break;
            case ApprovalVerdict::TakeOver:
                if (d.manual.empty()) throw ConsistencyError("take-over decision carries no commands");
                out.action = ActionBlock{};
                for (const auto& r : d.manual) out.action.commands.push_back(r.command);
                out.execution.records = d.manual;
                payload["action"] = out.action;
                break;
        }
        log.emit(index, StepEventKind::ApprovalDecided, PromptStage::Execution, std::move(payload));
        if (d.verdict == ApprovalVerdict::TakeOver) {
            log.emit(index, StepEventKind::ActionExecuted, PromptStage::Execution,
                     {{"action", out.action}, {"execution", out.execution}, {"manual", true}});
            return out;
        }
        if (out.denied) {
            for (const auto& c : proposed.commands) {
                out.execution.records.push_back(unrun(c, CommandFailure::Denied, std::string(kDenied)));
            }
            log.emit(index, StepEventKind::ActionExecuted, PromptStage::Execution,
                     {{"action", out.action}, {"execution", out.execution}, {"denied", true}});
            return out;
        }
    }

    if (ctx.mode == OperatingMode::Observer) {
        for (const auto& c : out.action.commands) out.execution.records.push_back(unrun(c, CommandFailure::None));
        log.emit(index, StepEventKind::ActionExecuted, PromptStage::Execution,
                 {{"action", out.action}, {"execution", out.execution}, {"observer", true}});
        return out;
    }

    try {
        out.execution = ctx.executor.execute(out.action, nullptr);
    } catch (const ExecutionError& e) {
        throw StepAbort{StopReason::ExecutorError, PromptStage::Execution, "ExecutionError", e.what()};
    }
    log.emit(index, StepEventKind::ActionExecuted, PromptStage::Execution,
             {{"action", out.action}, {"execution", out.execution}});
    return out;
}

}  // namespace

std::string_view to_string(ApprovalVerdict v) {
    for (const auto& [k, name] : kVerdictNames) {
        if (k == v) return name;
    }
    return "Approve";
}

std::optional<ApprovalVerdict> parse_approval_verdict(std::string_view text) {
    for (const auto& [k, name] : kVerdictNames) {
        if (name == text) return k;
    }
    return std::nullopt;
}

const StepEvent& EventLog::emit(std::size_t step, StepEventKind kind, std::optional<PromptStage> stage,
                                json payload) {
    StepEvent e;
    e.seq = events_.size();
    e.step = step;
    e.kind = kind;
    e.stage = stage;
    e.at_ms = clock_.now_ms();
    e.payload = std::move(payload);
    events_.push_back(std::move(e));
    if (sink_) sink_(events_.back());
    return events_.back();
}

std::optional<StopReason> check_stop(const CampaignState& state) {
    const auto& th = state.thresholds;
    if (state.tactic == Tactic::EndOfCampaign) return StopReason::EndOfCampaign;
    if (state.total_actions >= th.max_actions) return StopReason::MaxActions;
    if (state.consecutive_failures >= th.max_consecutive_failures) return StopReason::MaxConsecutiveFailures;
    for (const auto& [key, count] : state.repeat_counts) {
        if (count >= th.repeat_limit) return StopReason::RepeatedAction;
    }
    return std::nullopt;
}

CampaignState step(CampaignState state, StepContext& ctx, EventLog& log) {
    if (state.terminated) throw ConsistencyError("step on a terminated campaign");
    const std::size_t index = state.history.size();
    const CampaignState before = state;
    StepRun run(ctx, log, index);

    try {
        StepRecord rec;
        rec.index = index;
        rec.tactic = state.tactic == Tactic::Start ? Tactic::Recon : state.tactic;
        rec.started_at_ms = log.now();

        state.stage = PromptStage::Execution;
        auto block = run.ask<ActionBlock>(
            PromptStage::Execution, [&](bool c) { return ctx.engine.compose_execution(state, c); },
            [&](const std::string& text) {
                auto out = parse_enumerated_commands(text, ctx.parser_options);
                if (out.ok() && out.value().commands.empty()) {
                    return ParseOutcome<ActionBlock>::failure("STOP without any command", text.substr(0, 200));
                }
                return out;
            });
        if (!block) {
            terminate(state, StopReason::ParserGiveUp);
            return state;
        }

        Acted acted = act(*block, index, ctx, log);
        rec.action = acted.action;
        rec.execution = acted.execution;

        state.stage = PromptStage::Translate;
        if (acted.denied) {
            rec.translation = TranslationReport{Verdict::Fail, std::string(kDenied), {}};
            log.emit(index, StepEventKind::TranslationProduced, PromptStage::Translate,
                     {{"translation", rec.translation}, {"synthetic", true}});
        } else {
            auto report = run.ask<TranslationReport>(
                PromptStage::Translate, [&](bool c) { return ctx.engine.compose_translation(state, rec, c); },
                [](const std::string& text) { return parse_translation(text); });
            if (!report) {
                terminate(state, StopReason::ParserGiveUp);
                return state;
            }
            rec.translation = *report;
            log.emit(index, StepEventKind::TranslationProduced, PromptStage::Translate,
                     {{"translation", rec.translation}, {"synthetic", false}});
        }

        rec.next_tactic = rec.tactic;  // provisional until the tactic prompt answers
        state = record_step(std::move(state), rec);

        state.stage = PromptStage::TacticSelect;
        auto tactic = run.ask<Tactic>(
            PromptStage::TacticSelect, [&](bool c) { return ctx.engine.compose_tactic(state, c); },
            [](const std::string& text) { return parse_tactic(text); });

        auto& stored = state.history.back();
        stored.prompt_bundles = run.bundles;
        if (tactic) {
            stored.next_tactic = *tactic;
            state.tactic = *tactic;
            log.emit(index, StepEventKind::TacticSelected, PromptStage::TacticSelect,
                     {{"tactic", to_string(*tactic)}});
        }
        stored.finished_at_ms = log.now();
        log.emit(index, StepEventKind::StepRecorded, std::nullopt, {{"record", stored}});

        if (!tactic) {
            terminate(state, StopReason::ParserGiveUp);
            return state;
        }
        state.stage = PromptStage::Execution;
        if (auto why = check_stop(state)) terminate(state, *why);
        return state;
    } catch (const StepAbort& abort) {
        log.emit(index, StepEventKind::StepError, abort.stage, {{"error", abort.kind}, {"message", abort.message}});
        CampaignState out = before;
        terminate(out, abort.reason);
        return out;
    }
}

CampaignState run_campaign(CampaignState state, StepContext& ctx, EventLog& log) {
    if (ctx.mode == OperatingMode::Assisted && !ctx.gate) throw ConfigError("mode: assisted needs an approval gate");
    while (!state.terminated) {
        if (auto why = check_stop(state)) {
            terminate(state, *why);
            break;
        }
        if (ctx.cancel && ctx.cancel->load()) {
            terminate(state, StopReason::OperatorStopped);
            break;
        }
        state = step(std::move(state), ctx, log);
    }
    log.emit(state.history.size(), StepEventKind::CampaignStopped, std::nullopt,
             {{"reason", to_string(*state.terminated)},
              {"steps", state.history.size()},
              {"total_actions", state.total_actions}});
    return state;
}

std::string derive_campaign_id(const CampaignConfig& config) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : render_config(config)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "c-%012llx", static_cast<unsigned long long>(h & 0xffffffffffffull));
    return buf;
}

Transcript make_transcript(const std::string& campaign_id, const CampaignConfig& config, const EventLog& log,
                           const CampaignState& state) {
    Transcript t;
    t.campaign_id = campaign_id;
    t.config = config_snapshot(config);
    t.events = log.events();
    t.stop_reason = state.terminated;
    return t;
}

}  // namespace redchain
