#pragma once

// Drives the plan-act-report loop: execution prompt, act, translate, pick the
// next tactic, check stop conditions. All collaborators are injected.

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "redchain/domain.hpp"
#include "redchain/executor.hpp"
#include "redchain/gateway.hpp"
#include "redchain/grammar.hpp"
#include "redchain/parsers.hpp"
#include "redchain/prompt_engine.hpp"
#include "redchain/transcript.hpp"

namespace redchain {

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
};

/// Starts at a fixed epoch and advances a fixed tick per reading.
class LogicalClock : public Clock {
public:
    static constexpr std::int64_t kEpochMs = 1678132440000;  // 2023-03-06T19:54:00Z
    explicit LogicalClock(std::int64_t start = kEpochMs, std::int64_t tick = 1000) : t_(start), tick_(tick) {}
    std::int64_t now_ms() override {
        auto t = t_;
        t_ += tick_;
        return t;
    }

private:
    std::int64_t t_;
    std::int64_t tick_;
};

class WallClock : public Clock {
public:
    std::int64_t now_ms() override;
};

enum class ApprovalVerdict { Approve, Deny, Edit, TakeOver };

std::string_view to_string(ApprovalVerdict v);
std::optional<ApprovalVerdict> parse_approval_verdict(std::string_view text);

struct ApprovalDecision {
    ApprovalVerdict verdict = ApprovalVerdict::Approve;
    ActionBlock replacement;              // Edit
    std::vector<CommandRecord> manual;    // TakeOver: operator-run commands and their outputs
    std::string note;
};

/// Consulted in Assisted mode before anything runs. May block.
class ApprovalGate {
public:
    virtual ~ApprovalGate() = default;
    virtual ApprovalDecision decide(std::size_t step, const ActionBlock& proposed) = 0;
};

using EventSink = std::function<void(const StepEvent&)>;

/// Assigns sequence numbers and timestamps, keeps the log, forwards to a sink.
class EventLog {
public:
    EventLog(Clock& clock, EventSink sink = {}) : clock_(clock), sink_(std::move(sink)) {}

    const StepEvent& emit(std::size_t step, StepEventKind kind, std::optional<PromptStage> stage,
                          nlohmann::json payload);
    const std::vector<StepEvent>& events() const noexcept { return events_; }
    std::int64_t now() { return clock_.now_ms(); }

private:
    Clock& clock_;
    EventSink sink_;
    std::vector<StepEvent> events_;
};

struct StepContext {
    ModelGateway& gateway;
    Executor& executor;
    const PromptEngine& engine;
    CompletionParams params;
    OperatingMode mode = OperatingMode::Autonomous;
    ApprovalGate* gate = nullptr;            // required in Assisted mode
    const PromptGrammar* grammar = nullptr;  // when set, every composed prompt is validated
    const std::atomic<bool>* cancel = nullptr;
    ParserOptions parser_options;
};

/// Highest-priority stop condition that holds for `state`, if any:
/// EndOfCampaign > MaxActions > MaxConsecutiveFailures > RepeatedAction.
std::optional<StopReason> check_stop(const CampaignState& state);

/// One full step. Gateway or executor failures leave the state as it was
/// (apart from `terminated`) and emit StepError. Parse give-up terminates.
CampaignState step(CampaignState state, StepContext& ctx, EventLog& log);

/// Steps until a stop condition holds; always ends with CampaignStopped.
CampaignState run_campaign(CampaignState state, StepContext& ctx, EventLog& log);

/// Deterministic id derived from the configuration text.
std::string derive_campaign_id(const CampaignConfig& config);

/// Transcript assembled from a finished (or running) log.
Transcript make_transcript(const std::string& campaign_id, const CampaignConfig& config, const EventLog& log,
                           const CampaignState& state);

}  // namespace redchain
