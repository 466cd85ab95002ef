// redchain: run, evaluate, replay and ablate campaigns; serve the operator API.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "redchain/campaign.hpp"
#include "redchain/error.hpp"
#include "redchain/eval.hpp"
#include "redchain/json_io.hpp"
#include "redchain/parsers.hpp"
#include "redchain/scripted_model.hpp"
#include "redchain/service.hpp"

using namespace redchain;

namespace {

constexpr int kExitInput = 2;  // bad config, scenario, script or transcript
constexpr int kExitEvalErrors = 1;

std::atomic<bool> g_cancel{false};
ApiServer* g_server = nullptr;

extern "C" void on_signal(int) {
    g_cancel = true;
    if (g_server) g_server->stop();
}

// 0 only for EndOfCampaign; every other stop reason has its own code.
int exit_code(StopReason r) {
    switch (r) {
        case StopReason::EndOfCampaign: return 0;
        case StopReason::MaxActions: return 10;
        case StopReason::MaxConsecutiveFailures: return 11;
        case StopReason::RepeatedAction: return 12;
        case StopReason::ParserGiveUp: return 13;
        case StopReason::GatewayError: return 14;
        case StopReason::OperatorStopped: return 15;
        case StopReason::ExecutorError: return 16;
    }
    return 1;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_out(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError(path, 0, "cannot write file");
    out << text;
}

// Operator prompt on the terminal for assisted runs.
class TerminalGate : public ApprovalGate {
public:
    ApprovalDecision decide(std::size_t step, const ActionBlock& proposed) override {
        std::cout << "\nstep " << step + 1 << " proposes:\n" << render_enumerated(proposed) << "\n";
        while (true) {
            std::cout << "[a]pprove, [d]eny, [e]dit, [t]ake over: " << std::flush;
            std::string line;
            if (!std::getline(std::cin, line)) return deny("stdin closed");
            if (line == "a" || line == "approve") return {};
            if (line == "d" || line == "deny") return deny("");
            if (line == "e" || line == "edit") {
                ApprovalDecision d;
                d.verdict = ApprovalVerdict::Edit;
                std::cout << "replacement commands, one per line, blank line to finish:\n";
                while (std::getline(std::cin, line) && !line.empty()) d.replacement.commands.push_back(line);
                if (d.replacement.empty()) {
                    std::cout << "no commands given\n";
                    continue;
                }
                if (auto spans = detect_placeholders(d.replacement); !spans.empty()) {
                    std::cout << "rejected: command " << spans.front().command_index + 1 << " still contains "
                              << spans.front().text << " at column " << spans.front().offset + 1 << "\n";
                    continue;
                }
                return d;
            }
            if (line == "t" || line == "take over") {
                ApprovalDecision d;
                d.verdict = ApprovalVerdict::TakeOver;
                std::cout << "for each command you ran: the command, then its output, then a line with a single '.'\n"
                             "blank command line to finish:\n";
                while (std::getline(std::cin, line) && !line.empty()) {
                    CommandRecord r;
                    r.command = line;
                    std::string out;
                    while (std::getline(std::cin, line) && line != ".") out += line + "\n";
                    r.output = out;
                    d.manual.push_back(std::move(r));
                }
                if (d.manual.empty()) {
                    std::cout << "no commands given\n";
                    continue;
                }
                return d;
            }
        }
    }

private:
    static ApprovalDecision deny(std::string note) {
        ApprovalDecision d;
        d.verdict = ApprovalVerdict::Deny;
        d.note = std::move(note);
        return d;
    }
};

void print_step(const StepRecord& r) {
    std::size_t failed = 0;
    for (const auto& c : r.execution.records) failed += c.failure != CommandFailure::None || c.not_run ? 1 : 0;
    std::cout << "step " << r.index + 1 << "  " << tactic_token(r.tactic) << "  " << r.action.commands.size()
              << " command(s), " << failed << " failed/not run  " << to_string(r.translation.verdict) << "  -> "
              << tactic_token(r.next_tactic) << "\n";
    for (const auto& s : r.execution.session_events) {
        std::cout << "        session " << s.session_id << " " << to_string(s.kind) << " on " << s.host
                  << (s.privilege.empty() ? "" : " as " + s.privilege) << "\n";
    }
}

struct RunArgs {
    std::string config;
    std::string mode, scenario, script, transcript;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

int cmd_run(const RunArgs& a) {
    CampaignConfig config = load_config(a.config);
    const auto cwd = std::filesystem::current_path();
    if (!a.mode.empty()) apply_config_value(config, "mode", a.mode, cwd);
    if (!a.scenario.empty()) apply_config_value(config, "scenario", a.scenario, cwd);
    if (!a.script.empty()) apply_config_value(config, "script", a.script, cwd);
    if (a.seed) {
        config.seed = *a.seed;
        config.seed_set = true;
    }

    TerminalGate gate;
    RunOptions options;
    options.cancel = &g_cancel;
    if (config.mode == OperatingMode::Assisted) options.gate = &gate;
    if (!a.quiet) {
        options.sink = [](const StepEvent& e) {
            if (e.kind == StepEventKind::StepRecorded) print_step(e.payload.at("record").get<StepRecord>());
            if (e.kind == StepEventKind::StepError) {
                std::cout << "step " << e.step + 1 << "  error (" << e.payload.value("error", "") << "): "
                          << e.payload.value("message", "") << "\n";
            }
        };
    }
    auto out = run_configured_campaign(config, options);
    // the output path stays out of the config so it cannot change the transcript bytes
    std::string path = !a.transcript.empty()       ? a.transcript
                       : !config.transcript.empty() ? config.transcript
                                                    : out.transcript.campaign_id + ".jsonl";
    save_transcript(path, out.transcript);
    StopReason reason = out.state.terminated.value_or(StopReason::OperatorStopped);
    std::cout << "stopped: " << to_string(reason) << " after " << out.state.history.size() << " step(s); transcript "
              << path << "\n";
    return exit_code(reason);
}

struct EvalArgs {
    std::string suite, scenario, script, config, out, format = "text", transcripts_dir;
    std::size_t trials = 10;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    auto format = parse_report_format(a.format);
    if (!format) throw ConfigError("format: expected csv or text, got '" + a.format + "'");
    if (a.trials == 0) throw ConfigError("trials: must be at least 1");
    CampaignConfig base;
    if (!a.config.empty()) base = load_config(a.config);

    std::vector<SuiteEntry> entries;
    if (!a.suite.empty()) {
        entries = load_suite(a.suite);
    } else {
        if (a.scenario.empty() || a.script.empty()) throw ConfigError("eval: give --suite, or --scenario with --script");
        entries.push_back({a.scenario, a.script, 0});
    }
    const bool keep = !a.transcripts_dir.empty();
    auto reports = run_suite(entries, base, a.trials, a.seed, keep);
    bool errors = false;
    for (const auto& r : reports) {
        if (r.error) {
            errors = true;
            std::cerr << "error: " << r.scenario_spec << ": " << *r.error << "\n";
        }
        if (!keep) continue;
        auto dir = std::filesystem::path(a.transcripts_dir) / r.scenario_spec.substr(r.scenario_spec.rfind(':') + 1);
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < r.transcripts.size(); ++i) {
            save_transcript(dir / ("trial-" + std::to_string(i) + ".jsonl"), r.transcripts[i]);
        }
    }
    write_out(a.out, render_report(std::move(reports), *format));
    return errors ? kExitEvalErrors : 0;
}

int cmd_replay(const std::string& path, bool brief) {
    std::cout << render_narrative(load_transcript(path), !brief);
    return 0;
}

struct AblateArgs {
    std::string fixture, script, config, out, format = "text";
};

int cmd_ablate(const AblateArgs& a) {
    auto format = parse_report_format(a.format);
    if (!format) throw ConfigError("format: expected csv or text, got '" + a.format + "'");
    CampaignConfig config;
    if (!a.config.empty()) config = load_config(a.config);
    if (!a.script.empty()) config.script = a.script;
    // no scenario is needed, only a gateway
    std::unique_ptr<ModelGateway> gateway;
    if (!config.script.empty()) {
        gateway = std::make_unique<ScriptedModel>(load_script(config.script),
                                                  config.seed_set ? std::optional<std::uint64_t>(config.seed)
                                                                  : std::nullopt);
    } else {
        auto setup = prepare_campaign(config);
        gateway = std::move(setup.gateway);
    }
    auto result = run_ablation(slurp(a.fixture), *gateway, completion_params(config));
    write_out(a.out, render_ablation(result, *format));
    return 0;
}

struct ServeArgs {
    std::string bind = "127.0.0.1:8080";
    std::string configs = "data/configs";
    std::string transcripts = "transcripts";
    std::string static_dir;
    double approval_timeout_s = 600;
    bool wall_clock = false;
};

int cmd_serve(const ServeArgs& a) {
    auto colon = a.bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("bind: expected host:port, got '" + a.bind + "'");
    std::string host = a.bind.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(a.bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bind: bad port in '" + a.bind + "'");
    }
    ServiceOptions o;
    o.config_dir = a.configs;
    o.base_dir = a.configs;
    o.transcript_dir = a.transcripts;
    o.static_dir = a.static_dir;
    o.approval_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(a.approval_timeout_s * 1000));
    o.wall_clock = a.wall_clock;
    if (const char* t = std::getenv("REDCHAIN_SERVICE_TOKEN")) o.token = t;
    if (o.token.empty()) std::cerr << "warning: REDCHAIN_SERVICE_TOKEN not set; the API is unauthenticated\n";

    ApiServer server(o);
    int bound = server.bind(host, port);
    if (bound < 0) throw ConfigError("bind: cannot listen on " + a.bind);
    g_server = &server;
    std::cout << "listening on " << host << ":" << bound << std::endl;
    server.listen();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM plan-act-report campaign orchestrator over a simulated range"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "run one campaign and write its transcript");
    run_cmd->add_option("config", run.config, "campaign configuration file")->required();
    run_cmd->add_option("--mode", run.mode, "autonomous | assisted | observer");
    run_cmd->add_option("--scenario", run.scenario, "builtin:<name> or a scenario JSON file");
    run_cmd->add_option("--script", run.script, "scripted-model file (omit for the live model)");
    run_cmd->add_option("--seed", run.seed, "seed for weighted script responses");
    run_cmd->add_option("--transcript", run.transcript, "transcript output path");
    run_cmd->add_flag("--quiet", run.quiet, "no per-step lines");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "repeat campaigns and tabulate outcome classes");
    eval_cmd->add_option("--suite", ev.suite, "suite file: '<scenario> <script>' per line");
    eval_cmd->add_option("--scenario", ev.scenario, "single scenario (with --script)");
    eval_cmd->add_option("--script", ev.script, "script for --scenario");
    eval_cmd->add_option("--config", ev.config, "base configuration (thresholds, mode)");
    eval_cmd->add_option("--trials", ev.trials, "trials per scenario")->capture_default_str();
    eval_cmd->add_option("--seed", ev.seed, "trial i runs with seed + i")->capture_default_str();
    eval_cmd->add_option("--format", ev.format, "text | csv")->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "report file (default stdout)");
    eval_cmd->add_option("--transcripts-dir", ev.transcripts_dir, "also save every trial transcript here");

    std::string replay_path;
    bool replay_brief = false;
    auto* replay_cmd = app.add_subcommand("replay", "render a transcript as a narrative");
    replay_cmd->add_option("transcript", replay_path, "transcript file")->required();
    replay_cmd->add_flag("--brief", replay_brief, "omit composed prompts");

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "send the cumulative execution-prompt statements");
    ablate_cmd->add_option("--fixture", ab.fixture, "scan output the statements are appended to")->required();
    ablate_cmd->add_option("--script", ab.script, "scripted-model file");
    ablate_cmd->add_option("--config", ab.config, "configuration (model settings for live runs)");
    ablate_cmd->add_option("--format", ab.format, "text | csv")->capture_default_str();
    ablate_cmd->add_option("--out", ab.out, "output file (default stdout)");

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP API for operator consoles");
    serve_cmd->add_option("--bind", sv.bind, "host:port")->capture_default_str();
    serve_cmd->add_option("--configs", sv.configs, "directory of named configurations")->capture_default_str();
    serve_cmd->add_option("--transcripts", sv.transcripts, "where finished transcripts go")->capture_default_str();
    serve_cmd->add_option("--static", sv.static_dir, "console assets served at /");
    serve_cmd->add_option("--approval-timeout", sv.approval_timeout_s, "seconds before a pending action is denied")
        ->capture_default_str();
    serve_cmd->add_flag("--wall-clock", sv.wall_clock, "real timestamps instead of the logical clock");

    std::string scenario_name, scenario_out;
    bool scenario_list = false;
    auto* scenario_cmd = app.add_subcommand("scenario", "list or export built-in scenarios");
    scenario_cmd->add_option("--export", scenario_name, "built-in scenario name");
    scenario_cmd->add_flag("--list", scenario_list, "list built-in scenario names");
    scenario_cmd->add_option("--out", scenario_out, "output file (default stdout)");

    std::string templates_out;
    auto* templates_cmd = app.add_subcommand("templates", "export the built-in prompt templates");
    templates_cmd->add_flag("--export", "write the built-in templates as JSON");
    templates_cmd->add_option("--out", templates_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        if (*run_cmd) return cmd_run(run);
        if (*eval_cmd) return cmd_eval(ev);
        if (*replay_cmd) return cmd_replay(replay_path, replay_brief);
        if (*ablate_cmd) return cmd_ablate(ab);
        if (*serve_cmd) return cmd_serve(sv);
        if (*scenario_cmd) {
            if (scenario_list || scenario_name.empty()) {
                std::string names;
                for (const auto& n : builtin_network_names()) names += n + "\n";
                write_out(scenario_out, names);
            } else {
                write_out(scenario_out, network_to_json(builtin_network(scenario_name)));
            }
            return 0;
        }
        if (*templates_cmd) {
            write_out(templates_out, templates_to_json(builtin_templates()));
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
