#include "redchain/transcript.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/json_io.hpp"
#include "redchain/text.hpp"

namespace redchain {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<StepEventKind, std::string_view>, 10> kKinds{{
    {StepEventKind::PromptComposed, "PromptComposed"},
    {StepEventKind::ModelResponded, "ModelResponded"},
    {StepEventKind::ActionPendingApproval, "ActionPendingApproval"},
    {StepEventKind::ApprovalDecided, "ApprovalDecided"},
    {StepEventKind::ActionExecuted, "ActionExecuted"},
    {StepEventKind::TranslationProduced, "TranslationProduced"},
    {StepEventKind::TacticSelected, "TacticSelected"},
    {StepEventKind::StepRecorded, "StepRecorded"},
    {StepEventKind::StepError, "StepError"},
    {StepEventKind::CampaignStopped, "CampaignStopped"},
}};

// Model and executor text is not guaranteed to be UTF-8; replace rather than throw.
std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

int stage_rank(PromptStage s) {
    switch (s) {
        case PromptStage::Execution: return 0;
        case PromptStage::Translate: return 1;
        case PromptStage::TacticSelect: return 2;
    }
    return 0;
}

}  // namespace

std::string_view to_string(StepEventKind kind) {
    for (const auto& [k, name] : kKinds) {
        if (k == kind) return name;
    }
    return "PromptComposed";
}

std::optional<StepEventKind> parse_step_event_kind(std::string_view text) {
    for (const auto& [k, name] : kKinds) {
        if (name == text) return k;
    }
    return std::nullopt;
}

std::map<std::string, std::string> config_snapshot(const CampaignConfig& config) {
    std::map<std::string, std::string> out;
    // keep the rendered text alive; split_lines returns views into it
    const std::string rendered = render_config(config);
    for (auto line : text::split_lines(rendered)) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string_view::npos) continue;
        out[std::string(text::trim(t.substr(0, eq)))] = std::string(text::trim(t.substr(eq + 1)));
    }
    return out;
}

std::string serialize_header(const Transcript& t) {
    json j{{"type", "header"}, {"schema", kTranscriptSchema}, {"campaign_id", t.campaign_id}, {"config", t.config}};
    return dump(j) + "\n";
}

std::string serialize_event(const StepEvent& e) {
    json j{{"type", "event"},
           {"seq", e.seq},
           {"step", e.step},
           {"kind", to_string(e.kind)},
           {"stage", e.stage ? json(to_string(*e.stage)) : json(nullptr)},
           {"at_ms", e.at_ms},
           {"payload", e.payload}};
    return dump(j) + "\n";
}

std::string serialize_footer(StopReason reason) {
    return dump(json{{"type", "footer"}, {"stop_reason", to_string(reason)}}) + "\n";
}

std::string serialize_transcript(const Transcript& t) {
    std::string out = serialize_header(t);
    for (const auto& e : t.events) out += serialize_event(e);
    if (t.stop_reason) out += serialize_footer(*t.stop_reason);
    return out;
}

Transcript parse_transcript(std::string_view text) {
    Transcript t;
    if (text.empty()) throw TranscriptError(0, "empty transcript");
    std::size_t pos = 0;
    bool header = false;
    bool footer = false;
    std::size_t last_step = 0;
    int last_rank = -1;
    std::int64_t last_at = 0;
    std::optional<StopReason> stopped_event;

    while (pos < text.size()) {
        const std::size_t offset = pos;
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) throw TranscriptError(offset, "truncated record (no trailing newline)");
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw TranscriptError(offset, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw TranscriptError(offset, "record is not an object");
        if (footer) throw TranscriptError(offset, "record after footer");
        const std::string type = j.value("type", "");

        try {
            if (!header) {
                if (type != "header") throw TranscriptError(offset, "first record must be the header");
                if (j.value("schema", "") != kTranscriptSchema) {
                    throw TranscriptError(offset, "unsupported schema '" + j.value("schema", "") + "'");
                }
                t.campaign_id = j.at("campaign_id").get<std::string>();
                t.config = j.at("config").get<std::map<std::string, std::string>>();
                header = true;
                continue;
            }
            if (type == "event") {
                StepEvent e;
                e.seq = j.at("seq").get<std::uint64_t>();
                e.step = j.at("step").get<std::size_t>();
                auto kind = parse_step_event_kind(j.at("kind").get<std::string>());
                if (!kind) throw TranscriptError(offset, "unknown event kind " + j.at("kind").dump());
                e.kind = *kind;
                if (!j.at("stage").is_null()) {
                    auto st = parse_prompt_stage(j.at("stage").get<std::string>());
                    if (!st) throw TranscriptError(offset, "unknown stage " + j.at("stage").dump());
                    e.stage = *st;
                }
                e.at_ms = j.at("at_ms").get<std::int64_t>();
                e.payload = j.at("payload");

                if (e.seq != t.events.size()) {
                    throw TranscriptError(offset, "event out of order: seq " + std::to_string(e.seq) + ", expected " +
                                                      std::to_string(t.events.size()));
                }
                if (!t.events.empty() && e.step < last_step) throw TranscriptError(offset, "step index went back");
                if (e.step != last_step) last_rank = -1;
                if (e.stage && e.kind != StepEventKind::StepError) {
                    int r = stage_rank(*e.stage);
                    if (r < last_rank) throw TranscriptError(offset, "stage order violated within step");
                    last_rank = r;
                }
                if (e.at_ms < last_at) throw TranscriptError(offset, "timestamp went back");
                if (stopped_event) throw TranscriptError(offset, "event after CampaignStopped");
                if (e.kind == StepEventKind::CampaignStopped) {
                    stopped_event = parse_stop_reason(e.payload.value("reason", ""));
                    if (!stopped_event) throw TranscriptError(offset, "CampaignStopped without a valid reason");
                }
                last_step = e.step;
                last_at = e.at_ms;
                t.events.push_back(std::move(e));
            } else if (type == "footer") {
                auto r = parse_stop_reason(j.at("stop_reason").get<std::string>());
                if (!r) throw TranscriptError(offset, "unknown stop reason " + j.at("stop_reason").dump());
                if (stopped_event && *stopped_event != *r) {
                    throw TranscriptError(offset, "footer disagrees with the CampaignStopped event");
                }
                t.stop_reason = *r;
                footer = true;
            } else {
                throw TranscriptError(offset, "unexpected record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw TranscriptError(offset, std::string("bad field: ") + e.what());
        }
    }
    if (!header) throw TranscriptError(0, "missing header");
    return t;
}

Transcript load_transcript(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open transcript");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_transcript(ss.str());
}

void save_transcript(const std::filesystem::path& path, const Transcript& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError(path.string(), 0, "cannot write transcript");
    out << serialize_transcript(t);
    if (!out) throw LoadError(path.string(), 0, "write failed");
}

std::vector<StepRecord> transcript_steps(const Transcript& t) {
    std::vector<StepRecord> out;
    for (const auto& e : t.events) {
        if (e.kind == StepEventKind::StepRecorded) out.push_back(e.payload.at("record").get<StepRecord>());
    }
    return out;
}

std::string render_narrative(const Transcript& t, bool include_prompts) {
    std::ostringstream out;
    out << "campaign " << t.campaign_id << "\n";
    for (const char* key : {"scenario", "mode", "objective"}) {
        if (auto it = t.config.find(key); it != t.config.end()) out << "  " << key << ": " << it->second << "\n";
    }
    std::size_t shown_step = static_cast<std::size_t>(-1);
    std::string tactic(tactic_token(Tactic::Recon));  // the first step always reconnoitres
    for (const auto& e : t.events) {
        if (e.step != shown_step && e.kind != StepEventKind::CampaignStopped) {
            shown_step = e.step;
            out << "\n== step " << e.step + 1 << " " << tactic << " ==\n";
        }
        const auto& p = e.payload;
        const std::string stage = e.stage ? std::string(to_string(*e.stage)) : "";
        switch (e.kind) {
            case StepEventKind::PromptComposed:
                if (include_prompts) {
                    out << "-- " << stage << " prompt";
                    if (p.value("attempt", 0) > 0) out << " (corrective retry)";
                    out << " --\n" << p.at("bundle").value("composed", "") << "\n";
                }
                break;
            case StepEventKind::ModelResponded:
                out << "-- " << stage << " response --\n" << p.value("response", "") << "\n";
                if (!p.value("parsed", true)) out << "   (unparseable: " << p.value("reason", "") << ")\n";
                break;
            case StepEventKind::ActionPendingApproval: out << "   awaiting operator approval\n"; break;
            case StepEventKind::ApprovalDecided:
                out << "   operator decision: " << p.value("decision", "") << "\n";
                break;
            case StepEventKind::ActionExecuted: {
                auto exec = p.at("execution").get<ExecutionResult>();
                out << "-- output --\n";
                for (const auto& r : exec.records) {
                    out << "$ " << r.command << "\n";
                    if (!r.output.empty()) out << r.output << (r.output.back() == '\n' ? "" : "\n");
                    if (r.not_run) out << "   (not run)\n";
                }
                for (const auto& s : exec.session_events) {
                    out << "   session " << s.session_id << " " << to_string(s.kind) << " on " << s.host;
                    if (!s.privilege.empty()) out << " as " << s.privilege;
                    out << "\n";
                }
                break;
            }
            case StepEventKind::TranslationProduced: {
                auto tr = p.at("translation").get<TranslationReport>();
                out << "verdict: " << to_string(tr.verdict) << "\n";
                break;
            }
            case StepEventKind::TacticSelected: {
                auto t = parse_tactic_name(p.value("tactic", ""));
                tactic = t ? std::string(tactic_token(*t)) : "?";
                out << "next tactic: " << tactic << "\n";
                break;
            }
            case StepEventKind::StepRecorded: break;
            case StepEventKind::StepError:
                out << "error (" << p.value("error", "") << "): " << p.value("message", "") << "\n";
                break;
            case StepEventKind::CampaignStopped:
                out << "\nstopped: " << p.value("reason", "") << " after " << p.value("steps", 0) << " step(s), "
                    << p.value("total_actions", 0) << " command(s)\n";
                break;
        }
    }
    return out.str();
}

}  // namespace redchain
