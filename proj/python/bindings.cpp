// Python surface: run campaigns and evaluations, parse model text, replay
// transcripts. Structured results cross the boundary as JSON-shaped dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "redchain/campaign.hpp"
#include "redchain/error.hpp"
#include "redchain/eval.hpp"
#include "redchain/json_io.hpp"
#include "redchain/parsers.hpp"
#include "redchain/scripted_model.hpp"

namespace py = pybind11;
using namespace redchain;
using nlohmann::json;

namespace {

// json -> Python via the json module keeps this file free of a converter.
py::object to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump(-1, ' ', false, json::error_handler_t::replace));
}

CampaignConfig build_config(const std::string& config_path, const py::dict& overrides) {
    CampaignConfig config;
    std::filesystem::path base = std::filesystem::current_path();
    if (!config_path.empty()) config = load_config(config_path);
    for (auto [k, v] : overrides) {
        std::string key = py::str(k);
        std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : std::string(py::str(v));
        apply_config_value(config, key, value, base);
    }
    validate_config(config);
    return config;
}

py::dict outcome_dict(const CampaignOutcome& out) {
    py::dict d;
    d["campaign_id"] = out.transcript.campaign_id;
    d["stop_reason"] = out.state.terminated ? py::cast(std::string(to_string(*out.state.terminated))) : py::none();
    d["steps"] = out.state.history.size();
    d["total_actions"] = out.state.total_actions;
    py::list tactics;
    for (const auto& s : out.state.history) tactics.append(std::string(tactic_token(s.tactic)));
    d["tactics"] = tactics;
    d["transcript"] = serialize_transcript(out.transcript);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "campaign orchestrator core";

    // translators run newest first, so subclasses are registered after the base
    auto& base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<TranscriptError>(m, "TranscriptError", base.ptr());
    py::register_exception<GatewayError>(m, "GatewayError", base.ptr());

    m.def(
        "run_campaign",
        [](const std::string& config_path, const py::dict& overrides) {
            CampaignConfig config = build_config(config_path, overrides);
            if (config.mode == OperatingMode::Assisted) {
                throw ConfigError("mode: assisted campaigns need an operator; use the service");
            }
            CampaignOutcome out;
            {
                py::gil_scoped_release nogil;
                out = run_configured_campaign(config);
            }
            return outcome_dict(out);
        },
        py::arg("config_path") = "", py::arg("overrides") = py::dict(),
        "Run one campaign. `overrides` are config keys (script, seed, scenario, ...).");

    m.def(
        "run_trials",
        [](const std::string& scenario, const std::string& script, std::size_t trials, std::uint64_t seed) {
            EvalReport r;
            {
                py::gil_scoped_release nogil;
                r = run_trials({CampaignConfig{}, scenario, script, trials, seed, false});
            }
            py::dict d;
            d["scenario"] = r.scenario;
            d["trials"] = r.trials;
            py::dict counts;
            for (auto c : {OutcomeClass::SuccessfulExploit, OutcomeClass::ExecutedNoAccess, OutcomeClass::SyntaxError,
                           OutcomeClass::IncorrectAction}) {
                counts[py::str(std::string(to_string(c)))] = r.count(c);
            }
            d["counts"] = counts;
            d["unique_actions"] = r.unique_actions();
            d["csv"] = render_report({r}, ReportFormat::Csv);
            return d;
        },
        py::arg("scenario"), py::arg("script"), py::arg("trials") = 10, py::arg("seed") = 0);

    m.def(
        "parse_commands",
        [](const std::string& text) -> py::object {
            auto out = parse_enumerated_commands(text);
            if (!out) return to_py({{"ok", false}, {"reason", out.reason()}, {"excerpt", out.excerpt()}});
            return to_py({{"ok", true},
                          {"commands", out.value().commands},
                          {"stop_requested", out.value().stop_requested}});
        },
        py::arg("text"));

    m.def(
        "parse_tactic",
        [](const std::string& text) -> py::object {
            auto out = parse_tactic(text);
            if (!out) return py::none();
            return py::str(std::string(tactic_token(out.value())));
        },
        py::arg("text"));

    m.def(
        "parse_translation",
        [](const std::string& text) -> py::object {
            auto out = parse_translation(text);
            if (!out) return py::none();
            return to_py(json(out.value()));
        },
        py::arg("text"));

    m.def(
        "detect_placeholders",
        [](const std::vector<std::string>& commands) {
            ActionBlock b;
            b.commands = commands;
            json out = json::array();
            for (const auto& s : detect_placeholders(b)) {
                out.push_back({{"command_index", s.command_index}, {"offset", s.offset}, {"length", s.length},
                               {"text", s.text}});
            }
            return to_py(out);
        },
        py::arg("commands"));

    m.def("estimate_tokens", [](const std::string& text) { return estimate_tokens(text); }, py::arg("text"));

    m.def(
        "render_narrative",
        [](const std::string& transcript, bool include_prompts) {
            return render_narrative(parse_transcript(transcript), include_prompts);
        },
        py::arg("transcript"), py::arg("include_prompts") = true);

    m.def(
        "transcript_events",
        [](const std::string& transcript) {
            Transcript t = parse_transcript(transcript);
            json out = json::array();
            for (const auto& e : t.events) out.push_back(json::parse(serialize_event(e)));
            return to_py(out);
        },
        py::arg("transcript"));

    m.def("ablation_variants", [] {
        std::vector<std::string> out;
        for (const auto& b : ablation_variants()) out.push_back(b.composed);
        return out;
    });

    m.def(
        "run_ablation",
        [](const std::string& fixture, const std::string& script) {
            ScriptedModel model(load_script(script));
            auto r = run_ablation(fixture, model, CompletionParams{});
            py::list rows;
            for (const auto& row : r.rows) {
                py::dict d;
                d["label"] = row.label;
                d["prompt"] = row.prompt;
                d["response"] = row.response;
                d["error"] = row.error;
                rows.append(d);
            }
            return rows;
        },
        py::arg("fixture"), py::arg("script"));

    m.def("builtin_scenarios", &builtin_network_names);
    m.def("export_scenario", [](const std::string& name) { return network_to_json(builtin_network(name)); },
          py::arg("name"));
    m.def("export_templates", [] { return templates_to_json(builtin_templates()); });
}
