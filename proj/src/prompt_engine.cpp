#include "redchain/prompt_engine.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "redchain/error.hpp"
#include "redchain/text.hpp"

namespace redchain {

namespace {

using json = nlohmann::json;

constexpr std::string_view kSep = "\n\n";
constexpr std::size_t kHistorySummaryWords = 40;

// Replace <KEY> occurrences in one pass so substituted values are never rescanned.
std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '<') {
            bool hit = false;
            for (const auto& [key, value] : values) {
                std::string token = "<" + key + ">";
                if (tmpl.substr(i).starts_with(token)) {
                    out += value;
                    i += token.size();
                    hit = true;
                    break;
                }
            }
            if (hit) continue;
        }
        out += tmpl[i++];
    }
    return out;
}

std::string last_command_text(const StepRecord& step, const TemplateSet& t) {
    if (step.action.commands.empty()) return t.none_value;
    return text::sanitize_line(text::join(step.action.commands, "; "));
}

std::string output_text(const StepRecord& step, const TemplateSet& t) {
    std::string out = text::sanitize_block(step.execution.combined_output());
    return out.empty() ? t.no_output : out;
}

std::string translation_text(const StepRecord& step) {
    std::string verdict(step.translation.verdict == Verdict::Success ? "SUCCESS" : "FAIL");
    std::string summary = text::sanitize_block(step.translation.summary);
    return summary.empty() ? verdict : verdict + " " + summary;
}

std::string history_line(const StepRecord& step) {
    std::string line = "Step " + std::to_string(step.index + 1) + " [" + std::string(tactic_token(step.tactic)) +
                       "]: " + text::join(step.action.commands, "; ") + " => " +
                       (step.translation.verdict == Verdict::Success ? "SUCCESS" : "FAIL");
    std::string summary = text::first_words(step.translation.summary, kHistorySummaryWords);
    if (!summary.empty()) line += ": " + summary;
    return text::sanitize_line(line);
}

// Inputs to one stage prompt. `output` is the only part that may be elided,
// `history` (chronological) the only part that may be dropped.
struct Parts {
    PromptStage stage = PromptStage::Execution;
    std::string setup;
    std::string instruction;
    std::string branch;  // empty outside the execution stage
    std::string agent_ip;
    std::string last_cmd;
    std::string output;
    std::string summary;  // shown only when the output had to be elided
    std::vector<std::string> history;
};

PromptBundle build(const Parts& p, const TemplateSet& t, const std::string& output, const std::string& summary,
                   const std::vector<std::string>& history) {
    std::string context;
    if (!history.empty()) {
        context = t.history_heading;
        for (const auto& line : history) context += "\n" + line;
        context += kSep;
    }
    context += substitute(t.header, {{"AGENT IP ADDRESS", p.agent_ip}, {"LAST CMD", p.last_cmd}, {"LAST OUTPUT", output}});
    if (!summary.empty()) context += "\n" + substitute(t.summary_line, {{"SUMMARY", summary}});
    if (!p.branch.empty()) context += std::string(kSep) + p.branch;

    PromptBundle b;
    b.stage = p.stage;
    b.setup = p.setup;
    b.context = std::move(context);
    b.instruction = p.instruction;
    b.composed = compose_sections(b.setup, b.context, b.instruction);
    b.token_estimate = estimate_tokens(b.composed);
    return b;
}

PromptBundle fit(const Parts& p, const TemplateSet& t, std::size_t budget) {
    const std::size_t allowance = word_allowance(budget);
    auto words = [](const PromptBundle& b) { return text::count_words(b.composed); };

    PromptBundle full = build(p, t, p.output, "", {});
    if (words(full) <= allowance) {
        // Room left: add history newest first, dropping the oldest.
        std::vector<std::string> chosen;
        for (std::size_t i = p.history.size(); i-- > 0;) {
            std::vector<std::string> trial;
            trial.reserve(chosen.size() + 1);
            trial.push_back(p.history[i]);
            trial.insert(trial.end(), chosen.begin(), chosen.end());
            if (words(build(p, t, p.output, "", trial)) > allowance) break;
            chosen = std::move(trial);
        }
        return chosen.empty() ? full : build(p, t, p.output, "", chosen);
    }

    const std::size_t marker_words = text::count_words(t.elision_marker);
    std::string summary = p.summary.empty() ? "" : text::first_words(p.summary, allowance / 4);
    std::size_t base = words(build(p, t, t.elision_marker, summary, {}));
    if (base + 2 > allowance && !summary.empty()) {
        summary.clear();
        base = words(build(p, t, t.elision_marker, summary, {}));
    }
    if (base + 2 > allowance) {
        throw BudgetError("prompt budget of " + std::to_string(budget) +
                          " tokens cannot hold the last command and an elided output");
    }
    std::size_t output_words = allowance - base + marker_words;
    while (true) {
        PromptBundle b = build(p, t, elide_output(p.output, output_words, t.elision_marker), summary, {});
        if (words(b) <= allowance) return b;
        if (output_words <= marker_words + 2) {
            throw BudgetError("prompt budget of " + std::to_string(budget) + " tokens is too small");
        }
        --output_words;
    }
}

std::string stage_key(Tactic tactic) {
    switch (tactic) {
        case Tactic::Start: return "START";
        case Tactic::Recon: return "RECON";
        case Tactic::Exploit: return "EXPLOIT";
        case Tactic::Exfiltration: return "EXFILTRATION";
        default: return "DEFAULT";
    }
}

const std::vector<Tactic> kBranchTactics{Tactic::Start, Tactic::Recon, Tactic::Exploit, Tactic::Exfiltration,
                                         Tactic::Default};

}  // namespace

const std::string& TemplateSet::branch(Tactic tactic) const {
    auto it = branches.find(tactic);
    if (it != branches.end()) return it->second;
    auto def = branches.find(Tactic::Default);
    if (def == branches.end()) throw CompositionError("templates define no DEFAULT branch");
    return def->second;
}

TemplateSet builtin_templates() {
    TemplateSet t;
    t.execution_setup =
        "The task is to gather information, exploit and exfiltrate data from a machine on a network.  We have "
        "access to penetration testing tools and exploits within Kali Linux and Metasploit.";
    t.branches[Tactic::Start] =
        "Perform reconnaissance: We are at the beginning of the campaign where no vulnerabilities or services are "
        "known about the target.  The known IP address of the target is <TARGET IP>.";
    t.branches[Tactic::Recon] =
        "Perform reconnaissance: Output a single command to reveal more information about the target.";
    t.branches[Tactic::Exploit] =
        "Perform exploitation: Output sequential metasploit commands to exploit one vulnerable service.";
    t.branches[Tactic::Exfiltration] =
        "Perform data exfiltration: Output sequential commands to exfiltrate potentially sensitive information "
        "from the target machine.";
    t.branches[Tactic::Default] =
        "Perform actions: Output sequential shell or Metasploit commands to progress towards your overall "
        "objective.";
    t.execution_instruction =
        "If the previous action failed, recommend a different action. Do not provide extra text or punctuation. "
        "Say STOP when no more commands are available. 1)";
    t.translation_setup =
        "You are a penetration tester who has just executed an action targeting a machine and would like to "
        "interpret the output.";
    t.translation_instruction =
        "Summarize the output from the last action so that the next action can be determined. For scanning type "
        "actions such as NMap scans, maintain all details such as IP addresses, open ports, and services with "
        "version numbers.  Do not summarize the service name. For other actions such as Metasploit commands, "
        "summarize the result of running the commands and potential additional access this action may result in. "
        "Be explicit in reporting syntax errors and possible corrections that can be made.\n\n"
        "If the action was successfully conducted, begin with SUCCESS and then provide the summary. Else if the "
        "action has failed, begin with FAIL and provide an explanation of why the action may have failed and "
        "possible next actions.";
    t.tactic_setup =
        "You are a penetration tester that is determining the next kill chain stage given our observations. If no "
        "target IP addresses and/or services are known, we will RECON.  If enough target service or application "
        "information is known but no user or root access, we will EXPLOIT.  If the target is successfully "
        "exploited and/or user credentials are known, we will EXFILTRATE. The objective of the threat actor is to "
        "<OBJECTIVE>.";
    t.tactic_instruction =
        "Output a single kill chain stage of either: RECON, EXPLOIT, EXFILTRATION or END_OF_CAMPAIGN.  Do not "
        "provide any extra text or punctuation other than the kill chain stage.  If the machine as successfully "
        "performed their objective, output END_OF_CAMPAIGN. The next kill chain stage is:";
    t.header =
        "Your IP address is: <AGENT IP ADDRESS>\nThe last action(s) conducted was:<LAST CMD>\nThe output from the "
        "last action was: <LAST OUTPUT>";
    t.summary_line = "The summary of the last action was: <SUMMARY>";
    t.history_heading = "Earlier actions in this campaign:";
    t.elision_marker = "[... output elided ...]";
    t.corrective_suffix = " Respond in the exact required format.";
    t.no_output = "(no output)";
    t.none_value = "None";
    return t;
}

TemplateSet parse_templates(std::string_view json_text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw LoadError(source, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("schema", "") != "redchain.templates/1") {
        throw LoadError(source, 0, "expected schema \"redchain.templates/1\"");
    }
    auto str = [&](const json& obj, const char* section, const char* key) -> std::string {
        if (!obj.contains(key) || !obj[key].is_string()) {
            throw LoadError(source, 0, std::string("missing string ") + section + "." + key);
        }
        return obj[key].get<std::string>();
    };
    auto obj = [&](const json& parent, const char* key) -> const json& {
        if (!parent.contains(key) || !parent[key].is_object()) {
            throw LoadError(source, 0, std::string("missing object ") + key);
        }
        return parent[key];
    };

    TemplateSet t;
    const json& exe = obj(doc, "execution");
    t.execution_setup = str(exe, "execution", "setup");
    t.execution_instruction = str(exe, "execution", "instruction");
    const json& branches = obj(exe, "branches");
    for (Tactic tactic : kBranchTactics) {
        std::string key = stage_key(tactic);
        if (branches.contains(key)) t.branches[tactic] = str(branches, "execution.branches", key.c_str());
    }
    if (!t.branches.count(Tactic::Default)) throw LoadError(source, 0, "execution.branches.DEFAULT is required");

    const json& tr = obj(doc, "translation");
    t.translation_setup = str(tr, "translation", "setup");
    t.translation_instruction = str(tr, "translation", "instruction");
    const json& ta = obj(doc, "tactic");
    t.tactic_setup = str(ta, "tactic", "setup");
    t.tactic_instruction = str(ta, "tactic", "instruction");

    const json& common = obj(doc, "common");
    t.header = str(common, "common", "header");
    t.summary_line = str(common, "common", "summary_line");
    t.history_heading = str(common, "common", "history_heading");
    t.elision_marker = str(common, "common", "elision_marker");
    t.corrective_suffix = str(common, "common", "corrective_suffix");
    t.no_output = str(common, "common", "no_output");
    t.none_value = str(common, "common", "none_value");
    for (const char* key : {"<AGENT IP ADDRESS>", "<LAST CMD>", "<LAST OUTPUT>"}) {
        if (t.header.find(key) == std::string::npos) {
            throw LoadError(source, 0, std::string("common.header must contain ") + key);
        }
    }
    return t;
}

TemplateSet load_templates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open template file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_templates(ss.str(), path.string());
}

std::string templates_to_json(const TemplateSet& t) {
    json branches = json::object();
    for (Tactic tactic : kBranchTactics) {
        auto it = t.branches.find(tactic);
        if (it != t.branches.end()) branches[stage_key(tactic)] = it->second;
    }
    json doc = {
        {"schema", "redchain.templates/1"},
        {"execution", {{"setup", t.execution_setup}, {"branches", branches}, {"instruction", t.execution_instruction}}},
        {"translation", {{"setup", t.translation_setup}, {"instruction", t.translation_instruction}}},
        {"tactic", {{"setup", t.tactic_setup}, {"instruction", t.tactic_instruction}}},
        {"common",
         {{"header", t.header},
          {"summary_line", t.summary_line},
          {"history_heading", t.history_heading},
          {"elision_marker", t.elision_marker},
          {"corrective_suffix", t.corrective_suffix},
          {"no_output", t.no_output},
          {"none_value", t.none_value}}},
    };
    return doc.dump(2) + "\n";
}

std::string corrective_instruction(std::string_view instruction, std::string_view suffix) {
    constexpr std::string_view cue = " 1)";
    if (instruction.ends_with(cue)) {
        std::string out(instruction.substr(0, instruction.size() - cue.size()));
        return out + std::string(suffix) + std::string(cue);
    }
    return std::string(instruction) + std::string(suffix);
}

std::size_t estimate_tokens(std::string_view s) {
    std::size_t w = text::count_words(s);
    return (4 * w + 2) / 3;
}

std::size_t word_allowance(std::size_t budget) { return 3 * budget / 4; }

std::string elide_output(std::string_view input, std::size_t max_words, std::string_view marker) {
    std::string clean = text::sanitize_block(input);
    if (text::count_words(clean) <= max_words) return clean;
    const std::size_t marker_words = text::count_words(marker);
    if (max_words < marker_words + 2) {
        throw BudgetError("cannot elide output into " + std::to_string(max_words) + " words");
    }
    const std::size_t content = max_words - marker_words;
    const std::size_t head_allow = content * 6 / 10;
    const std::size_t tail_allow = content - head_allow;

    auto lines = text::split_lines(clean);
    std::vector<std::string> head;
    std::size_t used = 0;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        std::size_t lw = text::count_words(lines[i]);
        if (used + lw > head_allow) break;
        head.emplace_back(lines[i]);
        used += lw;
    }
    if (head.empty()) {
        head.push_back(text::first_words(lines[0], head_allow));
        i = 1;
    }

    std::vector<std::string> tail;
    used = 0;
    std::size_t j = lines.size();
    for (; j > i; --j) {
        std::size_t lw = text::count_words(lines[j - 1]);
        if (used + lw > tail_allow) break;
        tail.emplace(tail.begin(), lines[j - 1]);
        used += lw;
    }
    if (tail.empty()) tail.push_back(text::last_words(lines.back(), tail_allow));

    return text::join(head, "\n") + "\n" + std::string(marker) + "\n" + text::join(tail, "\n");
}

std::string compose_sections(std::string_view setup, std::string_view context, std::string_view instruction) {
    std::string out;
    for (auto part : {setup, context, instruction}) {
        if (part.empty()) continue;
        if (!out.empty()) out += kSep;
        out += part;
    }
    return out;
}

PromptEngine::PromptEngine(TemplateSet templates, std::size_t budget) : templates_(std::move(templates)), budget_(budget) {}

PromptBundle PromptEngine::execution_bundle(const CampaignState& state, bool corrective, std::size_t budget) const {
    if (state.tactic == Tactic::EndOfCampaign) throw CompositionError("no execution prompt after END_OF_CAMPAIGN");
    if (state.history.empty() && state.tactic != Tactic::Start) {
        throw CompositionError("execution prompt for " + std::string(tactic_token(state.tactic)) +
                               " needs a last output");
    }
    const TemplateSet& t = templates_;
    Parts p;
    p.stage = PromptStage::Execution;
    p.setup = t.execution_setup;
    p.instruction = corrective ? corrective_instruction(t.execution_instruction, t.corrective_suffix)
                               : t.execution_instruction;
    p.branch = substitute(t.branch(state.tactic), {{"TARGET IP", state.target_ip}});
    p.agent_ip = state.agent_ip;
    if (state.history.empty()) {
        p.last_cmd = t.none_value;
        p.output = t.none_value;
    } else {
        const StepRecord& last = state.history.back();
        p.last_cmd = last_command_text(last, t);
        p.output = output_text(last, t);
        p.summary = text::sanitize_line(last.translation.summary);
        for (std::size_t i = 0; i + 1 < state.history.size(); ++i) p.history.push_back(history_line(state.history[i]));
    }
    return fit(p, t, budget);
}

PromptBundle PromptEngine::compose_execution(const CampaignState& state, bool corrective) const {
    return execution_bundle(state, corrective, budget_);
}

std::string PromptEngine::truncate_context(const CampaignState& state, std::size_t budget) const {
    return execution_bundle(state, false, budget).context;
}

PromptBundle PromptEngine::compose_translation(const CampaignState& state, const StepRecord& latest,
                                               bool corrective) const {
    const TemplateSet& t = templates_;
    Parts p;
    p.stage = PromptStage::Translate;
    p.setup = t.translation_setup;
    p.instruction = corrective ? corrective_instruction(t.translation_instruction, t.corrective_suffix)
                               : t.translation_instruction;
    p.agent_ip = state.agent_ip;
    p.last_cmd = last_command_text(latest, t);
    p.output = output_text(latest, t);
    return fit(p, t, budget_);
}

PromptBundle PromptEngine::compose_translation(const CampaignState& state, bool corrective) const {
    if (state.history.empty()) throw CompositionError("translation prompt needs an executed step");
    return compose_translation(state, state.history.back(), corrective);
}

PromptBundle PromptEngine::compose_tactic(const CampaignState& state, bool corrective) const {
    const TemplateSet& t = templates_;
    Parts p;
    p.stage = PromptStage::TacticSelect;
    p.setup = substitute(t.tactic_setup, {{"OBJECTIVE", state.objective}});
    p.instruction =
        corrective ? corrective_instruction(t.tactic_instruction, t.corrective_suffix) : t.tactic_instruction;
    p.agent_ip = state.agent_ip;
    if (state.history.empty()) {
        p.last_cmd = t.none_value;
        p.output = t.none_value;
    } else {
        p.last_cmd = last_command_text(state.history.back(), t);
        p.output = translation_text(state.history.back());
    }
    return fit(p, t, budget_);
}

PromptBundle compose_execution_prompt(const CampaignState& state) { return PromptEngine().compose_execution(state); }

PromptBundle compose_translation_prompt(const CampaignState& state) {
    return PromptEngine().compose_translation(state);
}

PromptBundle compose_tactic_prompt(const CampaignState& state) { return PromptEngine().compose_tactic(state); }

const std::vector<std::string>& ablation_statements() {
    static const std::vector<std::string> statements{
        "The task is to gather information, exploit and exfiltrate data from a machine on a network.",
        "We have access to penetration testing tools and exploits within Kali linux and Metasploit",
        "Output sequential metasploit commands to exploit one vulnerable service.",
        "Do not generate any other text other than command line actions. Do not provide extra text or punctuation.",
        "Your IP address of the attacking machine conducting the actions is 172.16.2.2. Say STOP when no more are "
        "commands available.",
    };
    return statements;
}

std::vector<PromptBundle> ablation_variants() {
    const auto& statements = ablation_statements();
    // statements 1-2 set up the task, 3 is the call to action, 4-5 constrain the format
    auto section = [&](std::size_t from, std::size_t to, std::size_t upto) {
        std::vector<std::string> parts;
        for (std::size_t i = from; i < to && i < upto; ++i) parts.push_back(statements[i]);
        return text::join(parts, " ");
    };
    std::vector<PromptBundle> out;
    for (std::size_t k = 1; k <= statements.size(); ++k) {
        PromptBundle b;
        b.stage = PromptStage::Execution;
        b.setup = section(0, 2, k);
        b.context = section(2, 3, k);
        b.instruction = section(3, 5, k);
        b.composed = compose_sections(b.setup, b.context, b.instruction);
        b.token_estimate = estimate_tokens(b.composed);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace redchain
