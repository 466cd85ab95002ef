#pragma once

// Campaign event log. On disk it is JSON Lines: a header, one line per
// event, and a footer once the campaign has stopped. Format: docs/transcript.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "redchain/domain.hpp"

namespace redchain {

enum class StepEventKind {
    PromptComposed,
    ModelResponded,
    ActionPendingApproval,
    ApprovalDecided,
    ActionExecuted,
    TranslationProduced,
    TacticSelected,
    StepRecorded,
    StepError,
    CampaignStopped,
};

std::string_view to_string(StepEventKind kind);
std::optional<StepEventKind> parse_step_event_kind(std::string_view text);

struct StepEvent {
    std::uint64_t seq = 0;
    std::size_t step = 0;
    StepEventKind kind = StepEventKind::PromptComposed;
    std::optional<PromptStage> stage;
    std::int64_t at_ms = 0;
    nlohmann::json payload = nlohmann::json::object();

    bool operator==(const StepEvent&) const = default;
};

inline constexpr std::string_view kTranscriptSchema = "redchain.transcript/1";

struct Transcript {
    std::string campaign_id;
    std::map<std::string, std::string> config;  // key/value snapshot
    std::vector<StepEvent> events;
    std::optional<StopReason> stop_reason;

    bool operator==(const Transcript&) const = default;
};

/// Snapshot of render_config as key/value pairs.
std::map<std::string, std::string> config_snapshot(const CampaignConfig& config);

std::string serialize_header(const Transcript& t);
std::string serialize_event(const StepEvent& e);
std::string serialize_footer(StopReason reason);
std::string serialize_transcript(const Transcript& t);

/// Throws TranscriptError (with the byte offset of the bad line) for corrupt,
/// truncated-mid-line or reordered input. A missing footer is allowed.
Transcript parse_transcript(std::string_view text);
Transcript load_transcript(const std::filesystem::path& path);
void save_transcript(const std::filesystem::path& path, const Transcript& t);

/// Step records reassembled from StepRecorded events.
std::vector<StepRecord> transcript_steps(const Transcript& t);

/// Human-readable replay: prompts, responses, outputs, verdicts, transitions.
std::string render_narrative(const Transcript& t, bool include_prompts = true);

}  // namespace redchain
