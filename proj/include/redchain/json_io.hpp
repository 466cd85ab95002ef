#pragma once

// JSON mapping for the domain types, shared by transcripts, the service and
// the Python binding. Enums travel as their names.

#include <nlohmann/json.hpp>

#include "redchain/domain.hpp"

namespace redchain {

void to_json(nlohmann::json& j, const ActionBlock& v);
void from_json(const nlohmann::json& j, ActionBlock& v);
void to_json(nlohmann::json& j, const CommandRecord& v);
void from_json(const nlohmann::json& j, CommandRecord& v);
void to_json(nlohmann::json& j, const SessionEvent& v);
void from_json(const nlohmann::json& j, SessionEvent& v);
void to_json(nlohmann::json& j, const ExecutionResult& v);
void from_json(const nlohmann::json& j, ExecutionResult& v);
void to_json(nlohmann::json& j, const TranslationReport& v);
void from_json(const nlohmann::json& j, TranslationReport& v);
void to_json(nlohmann::json& j, const PromptBundle& v);
void from_json(const nlohmann::json& j, PromptBundle& v);
void to_json(nlohmann::json& j, const StepRecord& v);
void from_json(const nlohmann::json& j, StepRecord& v);

/// Throws ConsistencyError for an unknown name.
Tactic tactic_from_json(const nlohmann::json& j);
PromptStage stage_from_json(const nlohmann::json& j);

}  // namespace redchain
