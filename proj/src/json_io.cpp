#include "redchain/json_io.hpp"

#include "redchain/error.hpp"

namespace redchain {

using nlohmann::json;

namespace {

template <typename Opt>
auto need(Opt parsed, const json& j, const char* what) {
    if (!parsed) throw ConsistencyError(std::string("unknown ") + what + " '" + j.dump() + "'");
    return *parsed;
}

std::string str(const json& j) { return j.is_string() ? j.get<std::string>() : std::string{}; }

}  // namespace

Tactic tactic_from_json(const json& j) { return need(parse_tactic_name(str(j)), j, "tactic"); }
PromptStage stage_from_json(const json& j) { return need(parse_prompt_stage(str(j)), j, "stage"); }

void to_json(json& j, const ActionBlock& v) {
    j = json{{"commands", v.commands}, {"stop_requested", v.stop_requested}};
}

void from_json(const json& j, ActionBlock& v) {
    j.at("commands").get_to(v.commands);
    v.stop_requested = j.value("stop_requested", false);
}

void to_json(json& j, const CommandRecord& v) {
    j = json{{"command", v.command},       {"exit_status", v.exit_status}, {"output", v.output},
             {"duration_ms", v.duration_ms}, {"timed_out", v.timed_out},   {"not_run", v.not_run},
             {"failure", to_string(v.failure)}};
}

void from_json(const json& j, CommandRecord& v) {
    v.command = j.at("command").get<std::string>();
    v.exit_status = j.value("exit_status", 0);
    v.output = j.value("output", std::string{});
    v.duration_ms = j.value("duration_ms", std::int64_t{0});
    v.timed_out = j.value("timed_out", false);
    v.not_run = j.value("not_run", false);
    v.failure = need(parse_command_failure(j.value("failure", std::string("None"))), j.at("failure"), "failure");
}

void to_json(json& j, const SessionEvent& v) {
    j = json{{"kind", to_string(v.kind)},
             {"session_id", v.session_id},
             {"host", v.host},
             {"privilege", v.privilege},
             {"detail", v.detail}};
}

void from_json(const json& j, SessionEvent& v) {
    v.kind = need(parse_session_event_kind(str(j.at("kind"))), j.at("kind"), "session event");
    v.session_id = j.value("session_id", 0);
    v.host = j.value("host", std::string{});
    v.privilege = j.value("privilege", std::string{});
    v.detail = j.value("detail", std::string{});
}

void to_json(json& j, const ExecutionResult& v) {
    j = json{{"records", v.records}, {"session_events", v.session_events}};
}

void from_json(const json& j, ExecutionResult& v) {
    j.at("records").get_to(v.records);
    if (j.contains("session_events")) j.at("session_events").get_to(v.session_events);
}

void to_json(json& j, const TranslationReport& v) {
    j = json{{"verdict", to_string(v.verdict)}, {"summary", v.summary}, {"recommendations", v.recommendations}};
}

void from_json(const json& j, TranslationReport& v) {
    v.verdict = need(parse_verdict_name(str(j.at("verdict"))), j.at("verdict"), "verdict");
    v.summary = j.value("summary", std::string{});
    v.recommendations = j.value("recommendations", std::string{});
}

void to_json(json& j, const PromptBundle& v) {
    j = json{{"stage", to_string(v.stage)}, {"setup", v.setup},       {"context", v.context},
             {"instruction", v.instruction}, {"composed", v.composed}, {"token_estimate", v.token_estimate}};
}

void from_json(const json& j, PromptBundle& v) {
    v.stage = stage_from_json(j.at("stage"));
    v.setup = j.value("setup", std::string{});
    v.context = j.value("context", std::string{});
    v.instruction = j.value("instruction", std::string{});
    v.composed = j.value("composed", std::string{});
    v.token_estimate = j.value("token_estimate", std::size_t{0});
}

void to_json(json& j, const StepRecord& v) {
    j = json{{"index", v.index},
             {"tactic", to_string(v.tactic)},
             {"prompt_bundles", v.prompt_bundles},
             {"action", v.action},
             {"execution", v.execution},
             {"translation", v.translation},
             {"next_tactic", to_string(v.next_tactic)},
             {"started_at_ms", v.started_at_ms},
             {"finished_at_ms", v.finished_at_ms}};
}

void from_json(const json& j, StepRecord& v) {
    v.index = j.at("index").get<std::size_t>();
    v.tactic = tactic_from_json(j.at("tactic"));
    if (j.contains("prompt_bundles")) j.at("prompt_bundles").get_to(v.prompt_bundles);
    j.at("action").get_to(v.action);
    j.at("execution").get_to(v.execution);
    j.at("translation").get_to(v.translation);
    v.next_tactic = tactic_from_json(j.at("next_tactic"));
    v.started_at_ms = j.value("started_at_ms", std::int64_t{0});
    v.finished_at_ms = j.value("finished_at_ms", std::int64_t{0});
}

}  // namespace redchain
