#include "redchain/domain.hpp"

#include <arpa/inet.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/text.hpp"

namespace redchain {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view name) {
    for (const auto& [value, label] : table) {
        if (label == name) return value;
    }
    return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view label_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value) {
    for (const auto& [v, label] : table) {
        if (v == value) return label;
    }
    return "?";
}

constexpr std::array<std::pair<PromptStage, std::string_view>, 3> kStages{{
    {PromptStage::TacticSelect, "tactic_select"},
    {PromptStage::Execution, "execution"},
    {PromptStage::Translate, "translate"},
}};

constexpr std::array<std::pair<Tactic, std::string_view>, 6> kTactics{{
    {Tactic::Start, "Start"},
    {Tactic::Recon, "Recon"},
    {Tactic::Exploit, "Exploit"},
    {Tactic::Exfiltration, "Exfiltration"},
    {Tactic::Default, "Default"},
    {Tactic::EndOfCampaign, "EndOfCampaign"},
}};

constexpr std::array<std::pair<Tactic, std::string_view>, 6> kTacticTokens{{
    {Tactic::Start, "START"},
    {Tactic::Recon, "RECON"},
    {Tactic::Exploit, "EXPLOIT"},
    {Tactic::Exfiltration, "EXFILTRATION"},
    {Tactic::Default, "DEFAULT"},
    {Tactic::EndOfCampaign, "END_OF_CAMPAIGN"},
}};

constexpr std::array<std::pair<StopReason, std::string_view>, 8> kStopReasons{{
    {StopReason::EndOfCampaign, "EndOfCampaign"},
    {StopReason::MaxActions, "MaxActions"},
    {StopReason::MaxConsecutiveFailures, "MaxConsecutiveFailures"},
    {StopReason::RepeatedAction, "RepeatedAction"},
    {StopReason::ParserGiveUp, "ParserGiveUp"},
    {StopReason::GatewayError, "GatewayError"},
    {StopReason::OperatorStopped, "OperatorStopped"},
    {StopReason::ExecutorError, "ExecutorError"},
}};

constexpr std::array<std::pair<Verdict, std::string_view>, 2> kVerdicts{{
    {Verdict::Success, "SUCCESS"},
    {Verdict::Fail, "FAIL"},
}};

constexpr std::array<std::pair<CommandFailure, std::string_view>, 8> kFailures{{
    {CommandFailure::None, "none"},
    {CommandFailure::Syntax, "syntax"},
    {CommandFailure::UnknownModule, "unknown_module"},
    {CommandFailure::UnknownCommand, "unknown_command"},
    {CommandFailure::Runtime, "runtime"},
    {CommandFailure::Rejected, "rejected"},
    {CommandFailure::Denied, "denied"},
    {CommandFailure::Timeout, "timeout"},
}};

constexpr std::array<std::pair<SessionEventKind, std::string_view>, 3> kSessionEvents{{
    {SessionEventKind::Opened, "opened"},
    {SessionEventKind::Closed, "closed"},
    {SessionEventKind::CredentialLeak, "credential_leak"},
}};

constexpr std::array<std::pair<OperatingMode, std::string_view>, 3> kModes{{
    {OperatingMode::Autonomous, "autonomous"},
    {OperatingMode::Assisted, "assisted"},
    {OperatingMode::Observer, "observer"},
}};

constexpr std::string_view kKeySeparator = "\n";

std::string normalize_command(std::string_view command) {
    std::string lowered = text::to_lower(command);
    auto words = text::split_words(lowered);
    std::vector<std::string> out;
    out.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string word(words[i]);
        bool is_session_id = i >= 2 && words[i - 2] == "sessions" && words[i - 1] == "-i" && !word.empty() &&
                             word.find_first_not_of("0123456789") == std::string::npos;
        out.push_back(is_session_id ? "#" : word);
    }
    return text::join(out, " ");
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
    Int out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" + std::string(value) + "'");
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    std::string v = text::to_lower(value);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(value) + "'");
}

std::string resolve_path(std::string_view value, const std::filesystem::path& base_dir) {
    if (value.empty() || value.starts_with("builtin:")) return std::string(value);
    std::filesystem::path p{std::string(value)};
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.lexically_normal().string();
}


}  // namespace

std::string_view to_string(PromptStage stage) { return label_of(kStages, stage); }
std::string_view to_string(Tactic tactic) { return label_of(kTactics, tactic); }
std::string_view to_string(StopReason reason) { return label_of(kStopReasons, reason); }
std::string_view to_string(Verdict verdict) { return label_of(kVerdicts, verdict); }
std::string_view to_string(CommandFailure failure) { return label_of(kFailures, failure); }
std::string_view to_string(SessionEventKind kind) { return label_of(kSessionEvents, kind); }
std::string_view to_string(OperatingMode mode) { return label_of(kModes, mode); }
std::string_view tactic_token(Tactic tactic) { return label_of(kTacticTokens, tactic); }

std::optional<PromptStage> parse_prompt_stage(std::string_view text) { return lookup(kStages, text); }
std::optional<Tactic> parse_tactic_name(std::string_view text) { return lookup(kTactics, text); }
std::optional<StopReason> parse_stop_reason(std::string_view text) { return lookup(kStopReasons, text); }
std::optional<Verdict> parse_verdict_name(std::string_view text) { return lookup(kVerdicts, text); }
std::optional<CommandFailure> parse_command_failure(std::string_view text) { return lookup(kFailures, text); }
std::optional<SessionEventKind> parse_session_event_kind(std::string_view text) { return lookup(kSessionEvents, text); }
std::optional<OperatingMode> parse_operating_mode(std::string_view text) { return lookup(kModes, text); }

std::string ExecutionResult::combined_output() const {
    std::string out;
    for (const auto& r : records) {
        if (r.output.empty()) continue;
        if (!out.empty() && out.back() != '\n') out += '\n';
        out += r.output;
    }
    return out;
}

bool ExecutionResult::any_failure() const {
    for (const auto& r : records) {
        if (r.failure != CommandFailure::None || r.timed_out || r.exit_status != 0) return true;
    }
    return false;
}

bool is_valid_ip(std::string_view text) {
    std::string s(text);
    unsigned char buf[16];
    return inet_pton(AF_INET, s.c_str(), buf) == 1 || inet_pton(AF_INET6, s.c_str(), buf) == 1;
}

void apply_config_value(CampaignConfig& c, std::string_view key, std::string_view value,
                        const std::filesystem::path& base_dir) {
    if (key == "agent_ip") c.agent_ip = value;
    else if (key == "target_ip") c.target_ip = value;
    else if (key == "objective") c.objective = value;
    else if (key == "max_actions") c.thresholds.max_actions = parse_int<std::size_t>(key, value);
    else if (key == "max_consecutive_failures") c.thresholds.max_consecutive_failures = parse_int<std::size_t>(key, value);
    else if (key == "repeat_limit") c.thresholds.repeat_limit = parse_int<std::size_t>(key, value);
    else if (key == "mode") {
        auto mode = parse_operating_mode(text::to_lower(value));
        if (!mode) throw ConfigError("config key 'mode': expected autonomous, assisted or observer");
        c.mode = *mode;
    } else if (key == "scenario") c.scenario = resolve_path(value, base_dir);
    else if (key == "script") c.script = resolve_path(value, base_dir);
    else if (key == "seed") {
        c.seed = parse_int<std::uint64_t>(key, value);
        c.seed_set = true;
    } else if (key == "context_window") c.context_window = parse_int<std::size_t>(key, value);
    else if (key == "response_reserve") c.response_reserve = parse_int<std::size_t>(key, value);
    else if (key == "temperature") {
        try {
            std::size_t used = 0;
            c.temperature = std::stod(std::string(value), &used);
            if (used != value.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("config key 'temperature': expected a number");
        }
    } else if (key == "model") c.model = value;
    else if (key == "setup_as_system_role") c.setup_as_system_role = parse_bool(key, value);
    else if (key == "templates") c.templates = resolve_path(value, base_dir);
    else if (key == "grammar") c.grammar = resolve_path(value, base_dir);
    else if (key == "executor") c.executor = text::to_lower(value);
    else if (key == "external_acknowledged") c.external_acknowledged = parse_bool(key, value);
    else if (key == "external_host") c.external_host = value;
    else if (key == "external_port") c.external_port = parse_int<int>(key, value);
    else if (key == "external_token_env") c.external_token_env = value;
    else if (key == "command_timeout_ms") c.command_timeout_ms = parse_int<std::int64_t>(key, value);
    else if (key == "transcript") c.transcript = resolve_path(value, base_dir);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

CampaignConfig parse_config(std::string_view text_in, const std::string& source, const std::filesystem::path& base_dir) {
    CampaignConfig config;
    std::size_t line_no = 0;
    for (auto raw : text::split_lines(text_in)) {
        ++line_no;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw LoadError(source, line_no, "expected 'key = value'");
        auto key = text::trim(line.substr(0, eq));
        auto value = text::trim(line.substr(eq + 1));
        try {
            apply_config_value(config, key, value, base_dir);
        } catch (const ConfigError& e) {
            throw LoadError(source, line_no, e.what());
        }
    }
    try {
        validate_config(config);
    } catch (const ConfigError& e) {
        throw LoadError(source, 0, e.what());
    }
    return config;
}

CampaignConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string(), 0, "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string(), path.parent_path());
}

std::string render_config(const CampaignConfig& c) {
    std::ostringstream out;
    auto b = [](bool v) { return v ? "true" : "false"; };
    out << "agent_ip = " << c.agent_ip << "\n"
        << "target_ip = " << c.target_ip << "\n"
        << "objective = " << c.objective << "\n"
        << "max_actions = " << c.thresholds.max_actions << "\n"
        << "max_consecutive_failures = " << c.thresholds.max_consecutive_failures << "\n"
        << "repeat_limit = " << c.thresholds.repeat_limit << "\n"
        << "mode = " << to_string(c.mode) << "\n"
        << "scenario = " << c.scenario << "\n"
        << "script = " << c.script << "\n";
    if (c.seed_set) out << "seed = " << c.seed << "\n";
    out << "context_window = " << c.context_window << "\n"
        << "response_reserve = " << c.response_reserve << "\n"
        << "temperature = " << c.temperature << "\n"
        << "model = " << c.model << "\n"
        << "setup_as_system_role = " << b(c.setup_as_system_role) << "\n"
        << "templates = " << c.templates << "\n"
        << "grammar = " << c.grammar << "\n"
        << "executor = " << c.executor << "\n"
        << "external_acknowledged = " << b(c.external_acknowledged) << "\n"
        << "external_host = " << c.external_host << "\n"
        << "external_port = " << c.external_port << "\n"
        << "external_token_env = " << c.external_token_env << "\n"
        << "command_timeout_ms = " << c.command_timeout_ms << "\n"
        << "transcript = " << c.transcript << "\n";
    return out.str();
}

void validate_config(const CampaignConfig& config) {
    if (!is_valid_ip(config.agent_ip)) throw ConfigError("agent_ip is not a valid IP address: '" + config.agent_ip + "'");
    if (!is_valid_ip(config.target_ip)) throw ConfigError("target_ip is not a valid IP address: '" + config.target_ip + "'");
    if (config.response_reserve >= config.context_window)
        throw ConfigError("response_reserve must be smaller than context_window");
    if (!(config.temperature >= 0.0 && config.temperature <= 2.0))
        throw ConfigError("temperature must lie in [0, 2]");
    if (config.executor != "sim" && config.executor != "external")
        throw ConfigError("executor must be 'sim' or 'external', got '" + config.executor + "'");
}

CampaignState new_campaign(const CampaignConfig& config) {
    if (!is_valid_ip(config.agent_ip)) throw ConfigError("agent_ip is not a valid IP address: '" + config.agent_ip + "'");
    if (!is_valid_ip(config.target_ip)) throw ConfigError("target_ip is not a valid IP address: '" + config.target_ip + "'");
    CampaignState state;
    state.stage = PromptStage::TacticSelect;
    state.tactic = Tactic::Start;
    state.agent_ip = config.agent_ip;
    state.target_ip = config.target_ip;
    state.objective = config.objective;
    state.thresholds = config.thresholds;
    return state;
}

CampaignState record_step(CampaignState state, StepRecord step) {
    if (step.index != state.history.size()) {
        throw ConsistencyError("step index " + std::to_string(step.index) + " does not follow history of length " +
                               std::to_string(state.history.size()));
    }
    state.total_actions += step.action.commands.size();
    if (step.translation.verdict == Verdict::Success) {
        state.consecutive_failures = 0;
    } else {
        ++state.consecutive_failures;
    }
    if (!step.action.commands.empty()) ++state.repeat_counts[normalize_action_key(step.action)];
    state.history.push_back(std::move(step));
    return state;
}

void terminate(CampaignState& state, StopReason reason) {
    if (!state.terminated) state.terminated = reason;
}

std::string normalize_action_key(const ActionBlock& block) {
    if (block.commands.empty()) throw ConsistencyError("a stop-only action block has no key");
    std::vector<std::string> parts;
    parts.reserve(block.commands.size());
    for (const auto& c : block.commands) parts.push_back(normalize_command(c));
    return text::join(parts, kKeySeparator);
}

ActionBlock block_from_key(std::string_view key) {
    ActionBlock block;
    for (auto line : text::split_lines(key)) block.commands.emplace_back(line);
    return block;
}

}  // namespace redchain
