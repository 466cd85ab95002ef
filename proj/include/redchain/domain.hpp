#pragma once

// Campaign domain model: the prompt-chain symbols (stage, tactic, history,
// counters) and the append-only step history every other module builds on.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace redchain {

enum class PromptStage { TacticSelect, Execution, Translate };

enum class Tactic { Start, Recon, Exploit, Exfiltration, Default, EndOfCampaign };

enum class StopReason {
    EndOfCampaign,
    MaxActions,
    MaxConsecutiveFailures,
    RepeatedAction,
    ParserGiveUp,
    GatewayError,
    OperatorStopped,
    ExecutorError,
};

enum class Verdict { Success, Fail };

std::string_view to_string(PromptStage stage);
std::string_view to_string(Tactic tactic);
std::string_view to_string(StopReason reason);
std::string_view to_string(Verdict verdict);

/// Kill-chain token as the model sees it (RECON, EXPLOIT, ...). Start renders as START.
std::string_view tactic_token(Tactic tactic);

std::optional<PromptStage> parse_prompt_stage(std::string_view text);
std::optional<Tactic> parse_tactic_name(std::string_view text);
std::optional<StopReason> parse_stop_reason(std::string_view text);
std::optional<Verdict> parse_verdict_name(std::string_view text);

struct ActionBlock {
    std::vector<std::string> commands;
    bool stop_requested = false;

    bool empty() const noexcept { return commands.empty(); }
    bool operator==(const ActionBlock&) const = default;
};

/// Why a single command did not do what it was asked. In-band; never an exception.
enum class CommandFailure {
    None,
    Syntax,          // malformed, but correct once fixed (wrong module directory, bad option)
    UnknownModule,   // module path that does not exist in any form
    UnknownCommand,  // tool or command not available
    Runtime,         // executed and failed (permission denied, connection refused, ...)
    Rejected,        // blocked before dispatch (unresolved placeholder)
    Denied,          // operator denied the action
    Timeout,
};

std::string_view to_string(CommandFailure failure);
std::optional<CommandFailure> parse_command_failure(std::string_view text);

struct CommandRecord {
    std::string command;
    int exit_status = 0;
    std::string output;
    std::int64_t duration_ms = 0;
    bool timed_out = false;
    bool not_run = false;
    CommandFailure failure = CommandFailure::None;

    bool operator==(const CommandRecord&) const = default;
};

enum class SessionEventKind { Opened, Closed, CredentialLeak };

std::string_view to_string(SessionEventKind kind);
std::optional<SessionEventKind> parse_session_event_kind(std::string_view text);

struct SessionEvent {
    SessionEventKind kind = SessionEventKind::Opened;
    int session_id = 0;
    std::string host;
    std::string privilege;
    std::string detail;

    bool operator==(const SessionEvent&) const = default;
};

struct ExecutionResult {
    std::vector<CommandRecord> records;
    std::vector<SessionEvent> session_events;

    /// Outputs of all records that produced text, joined by newlines.
    std::string combined_output() const;
    bool any_failure() const;
    bool operator==(const ExecutionResult&) const = default;
};

struct TranslationReport {
    Verdict verdict = Verdict::Fail;
    std::string summary;
    std::string recommendations;

    bool operator==(const TranslationReport&) const = default;
};

struct PromptBundle {
    PromptStage stage = PromptStage::Execution;
    std::string setup;
    std::string context;
    std::string instruction;
    std::string composed;
    std::size_t token_estimate = 0;

    bool operator==(const PromptBundle&) const = default;
};

struct StepRecord {
    std::size_t index = 0;
    Tactic tactic = Tactic::Recon;
    std::vector<PromptBundle> prompt_bundles;
    ActionBlock action;
    ExecutionResult execution;
    TranslationReport translation;
    Tactic next_tactic = Tactic::Recon;
    std::int64_t started_at_ms = 0;
    std::int64_t finished_at_ms = 0;

    bool operator==(const StepRecord&) const = default;
};

struct StopThresholds {
    std::size_t max_actions = 30;
    std::size_t max_consecutive_failures = 3;
    std::size_t repeat_limit = 3;

    bool operator==(const StopThresholds&) const = default;
};

enum class OperatingMode { Autonomous, Assisted, Observer };

std::string_view to_string(OperatingMode mode);
std::optional<OperatingMode> parse_operating_mode(std::string_view text);

/// Everything a campaign run needs. Read from a key/value file (see docs/config.md).
struct CampaignConfig {
    std::string agent_ip = "172.16.2.2";
    std::string target_ip = "172.16.2.3";
    std::string objective = "EXFILTRATE data from the machine";
    StopThresholds thresholds;

    OperatingMode mode = OperatingMode::Autonomous;
    std::string scenario = "builtin:metasploitable-like";
    std::string script;        // empty => live model gateway
    std::uint64_t seed = 0;
    bool seed_set = false;     // seed given explicitly (overrides the script's seed)

    std::size_t context_window = 4096;
    std::size_t response_reserve = 1024;
    double temperature = 1.0;
    std::string model = "gpt-3.5-turbo";
    bool setup_as_system_role = false;

    std::string templates;     // empty => built-in templates
    std::string grammar;       // empty => built-in grammar

    std::string executor = "sim";  // "sim" | "external"
    bool external_acknowledged = false;
    std::string external_host = "127.0.0.1";
    int external_port = 0;
    std::string external_token_env;
    std::int64_t command_timeout_ms = 120000;

    std::string transcript;    // output path for cli_run; empty => derived

    std::size_t prompt_budget() const { return context_window - response_reserve; }
    bool operator==(const CampaignConfig&) const = default;
};

/// Parse key/value configuration text. Relative paths resolve against `base_dir`.
CampaignConfig parse_config(std::string_view text, const std::string& source,
                            const std::filesystem::path& base_dir = {});
CampaignConfig load_config(const std::filesystem::path& path);
/// Apply one `key = value` setting; throws ConfigError naming the key.
void apply_config_value(CampaignConfig& config, std::string_view key, std::string_view value,
                        const std::filesystem::path& base_dir = {});
/// Cross-field checks (IPs, budget, executor). Throws ConfigError.
void validate_config(const CampaignConfig& config);
/// Render the configuration back to key/value text (stable key order).
std::string render_config(const CampaignConfig& config);

bool is_valid_ip(std::string_view text);

struct CampaignState {
    PromptStage stage = PromptStage::TacticSelect;
    Tactic tactic = Tactic::Start;
    std::vector<StepRecord> history;
    std::string agent_ip;
    std::string target_ip;
    std::string objective;
    StopThresholds thresholds;
    std::size_t consecutive_failures = 0;
    std::size_t total_actions = 0;
    std::map<std::string, std::size_t> repeat_counts;
    std::optional<StopReason> terminated;

    bool operator==(const CampaignState&) const = default;
};

CampaignState new_campaign(const CampaignConfig& config);

/// Append `step` to the history and update counters. Throws ConsistencyError
/// if `step.index` is not the current history length.
CampaignState record_step(CampaignState state, StepRecord step);

/// Set the stop reason. A reason already set is kept.
void terminate(CampaignState& state, StopReason reason);

/// Canonical key for repeat detection and unique-action counting.
/// Throws ConsistencyError for a stop-only block.
std::string normalize_action_key(const ActionBlock& block);

/// Split a key back into a block (inverse of the join in normalize_action_key).
ActionBlock block_from_key(std::string_view key);

}  // namespace redchain
