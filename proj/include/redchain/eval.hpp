#pragma once

// Evaluation harness: repeat campaigns per scenario, put every trial in one
// outcome class, count unique exploit actions, render service-by-outcome
// tables; plus the execution-prompt statement ablation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "redchain/domain.hpp"
#include "redchain/gateway.hpp"
#include "redchain/transcript.hpp"

namespace redchain {

enum class OutcomeClass { SuccessfulExploit, ExecutedNoAccess, SyntaxError, IncorrectAction };

std::string_view to_string(OutcomeClass c);
std::optional<OutcomeClass> parse_outcome_class(std::string_view text);

struct Classification {
    OutcomeClass outcome = OutcomeClass::ExecutedNoAccess;
    std::string note;  // why; "warning: ..." for degenerate transcripts
};

/// SuccessfulExploit > SyntaxError > IncorrectAction > ExecutedNoAccess.
Classification classify_trial(const Transcript& t);

/// Action blocks proposed while the campaign's tactic was EXPLOIT, in order.
std::vector<ActionBlock> exploit_stage_blocks(const Transcript& t);

struct TrialRef {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string campaign_id;
    OutcomeClass outcome = OutcomeClass::ExecutedNoAccess;
    std::string note;
    std::optional<StopReason> stop_reason;
};

struct EvalReport {
    std::string scenario;       // row label (the range's report name)
    std::string scenario_spec;  // as requested
    std::size_t trials = 0;
    std::map<OutcomeClass, std::size_t> counts;
    std::set<std::string> action_keys;
    std::vector<TrialRef> trial_refs;
    std::vector<Transcript> transcripts;  // kept when requested
    std::optional<std::string> error;     // row rendered as ERROR

    std::size_t count(OutcomeClass c) const;
    std::size_t unique_actions() const noexcept { return action_keys.size(); }
};

struct TrialRequest {
    CampaignConfig base;  // thresholds, mode and the like; scenario/script/seed are overridden
    std::string scenario;
    std::filesystem::path script;
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    bool keep_transcripts = false;
};

/// Trial i runs with seed + i. Load errors propagate.
EvalReport run_trials(const TrialRequest& request);

enum class ReportFormat { AlignedText, Csv };

std::optional<ReportFormat> parse_report_format(std::string_view text);

/// Header plus one row per report, sorted by scenario label.
std::string render_report(std::vector<EvalReport> reports, ReportFormat format);

struct SuiteEntry {
    std::string scenario;
    std::filesystem::path script;
    std::size_t line = 0;
};

/// "<scenario> <script>" per line; '#' comments. Script paths resolve against `base_dir`.
std::vector<SuiteEntry> parse_suite(std::string_view text, const std::string& source,
                                    const std::filesystem::path& base_dir = {});
std::vector<SuiteEntry> load_suite(const std::filesystem::path& path);

/// run_trials per entry; a failing entry becomes an ERROR row, the rest still run.
std::vector<EvalReport> run_suite(const std::vector<SuiteEntry>& entries, const CampaignConfig& base,
                                  std::size_t trials, std::uint64_t seed, bool keep_transcripts = false);

// ---- ablation -------------------------------------------------------------

struct AblationRow {
    std::string label;     // the statement this row adds
    std::string variant;   // cumulative statements, as composed by ablation_variants()
    std::string prompt;    // what was sent: scan fixture + variant
    std::string response;  // verbatim; empty on error
    std::string error;     // gateway failure, if any
};

struct AblationResult {
    AblationRow baseline;             // the scan fixture alone
    std::vector<AblationRow> rows;    // one per ablation variant, in order
};

AblationResult run_ablation(std::string_view scan_fixture, ModelGateway& gateway, const CompletionParams& params);

/// Two columns: statement | response. The baseline row comes first.
std::string render_ablation(const AblationResult& result, ReportFormat format);

}  // namespace redchain
