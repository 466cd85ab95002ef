#include "redchain/scripted_model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/text.hpp"

namespace redchain {

namespace {

std::string unescape(std::string_view s, const std::string& source, std::size_t line) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out += s[i];
            continue;
        }
        if (i + 1 >= s.size()) throw LoadError(source, line, "dangling backslash");
        char e = s[++i];
        switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case '\\': out += '\\'; break;
            default: throw LoadError(source, line, std::string("unknown escape \\") + e);
        }
    }
    return out;
}

std::optional<StageMatcher> parse_stage(std::string_view s) {
    if (s == "any") return StageMatcher::Any;
    if (s == "execution") return StageMatcher::Execution;
    if (s == "translation") return StageMatcher::Translation;
    if (s == "tactic") return StageMatcher::Tactic;
    return std::nullopt;
}

bool stage_ok(StageMatcher m, PromptStage s) {
    switch (m) {
        case StageMatcher::Any: return true;
        case StageMatcher::Execution: return s == PromptStage::Execution;
        case StageMatcher::Translation: return s == PromptStage::Translate;
        case StageMatcher::Tactic: return s == PromptStage::TacticSelect;
    }
    return false;
}

bool glob_at(std::string_view p, std::string_view t) {
    // iterative wildcard match with single-star backtracking
    std::size_t pi = 0, ti = 0, star = std::string_view::npos, mark = 0;
    while (ti < t.size()) {
        if (pi < p.size() && (p[pi] == '?' || p[pi] == t[ti])) {
            ++pi;
            ++ti;
        } else if (pi < p.size() && p[pi] == '*') {
            star = pi++;
            mark = ti;
        } else if (star != std::string_view::npos) {
            pi = star + 1;
            ti = ++mark;
        } else {
            return false;
        }
    }
    while (pi < p.size() && p[pi] == '*') ++pi;
    return pi == p.size();
}

std::string between(std::string_view hay, std::string_view lead, std::initializer_list<std::string_view> stops) {
    auto p = hay.find(lead);
    if (p == std::string_view::npos) return {};
    p += lead.size();
    std::size_t end = hay.size();
    for (auto stop : stops) {
        auto q = hay.find(stop, p);
        if (q != std::string_view::npos && q < end) end = q;
    }
    return std::string(hay.substr(p, end - p));
}

}  // namespace

bool glob_search(std::string_view pattern, std::string_view text) {
    std::string wrapped = "*" + std::string(pattern) + "*";
    return glob_at(wrapped, text);
}

bool ScriptRule::matches(const PromptBundle& bundle) const {
    if (!stage_ok(stage, bundle.stage)) return false;
    for (const auto& c : contains) {
        if (bundle.composed.find(c) == std::string::npos) return false;
    }
    for (const auto& c : excludes) {
        if (bundle.composed.find(c) != std::string::npos) return false;
    }
    for (const auto& p : patterns) {
        if (!glob_search(p, bundle.composed)) return false;
    }
    return true;
}

ScenarioScript parse_script(std::string_view input, const std::string& source) {
    ScenarioScript script;
    std::set<std::string> names;
    bool seed_seen = false;
    std::size_t lineno = 0;
    ScriptRule* rule = nullptr;

    auto finish = [&](std::size_t line) {
        if (!rule) return;
        int kinds = (rule->response ? 1 : 0) + (rule->options.empty() ? 0 : 1) + (rule->sequence.empty() ? 0 : 1);
        if (kinds == 0) throw LoadError(source, line, "rule '" + rule->name + "' has no response");
    };

    for (auto raw : text::split_lines(input)) {
        ++lineno;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto sp = line.find_first_of(" \t");
        std::string_view directive = line.substr(0, sp);
        std::string_view arg = sp == std::string_view::npos ? std::string_view{} : text::trim(line.substr(sp));

        if (directive == "seed") {
            if (seed_seen) throw LoadError(source, lineno, "seed given twice");
            auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), script.seed);
            if (ec != std::errc{} || ptr != arg.data() + arg.size() || arg.empty()) {
                throw LoadError(source, lineno, "seed must be a non-negative integer");
            }
            seed_seen = true;
            continue;
        }
        if (directive == "rule") {
            if (rule) finish(lineno);
            if (arg.empty() || arg.find_first_of(" \t") != std::string_view::npos) {
                throw LoadError(source, lineno, "rule needs a single-word name");
            }
            if (!names.insert(std::string(arg)).second) {
                throw LoadError(source, lineno, "duplicate rule name '" + std::string(arg) + "'");
            }
            script.rules.push_back(ScriptRule{});
            rule = &script.rules.back();
            rule->name = std::string(arg);
            rule->line = lineno;
            continue;
        }
        if (!rule) throw LoadError(source, lineno, "'" + std::string(directive) + "' outside a rule");
        if (arg.empty()) throw LoadError(source, lineno, "'" + std::string(directive) + "' needs an argument");

        if (directive == "stage") {
            auto st = parse_stage(arg);
            if (!st) throw LoadError(source, lineno, "stage must be execution, translation, tactic or any");
            rule->stage = *st;
        } else if (directive == "contains") {
            rule->contains.push_back(unescape(arg, source, lineno));
        } else if (directive == "excludes") {
            rule->excludes.push_back(unescape(arg, source, lineno));
        } else if (directive == "matches") {
            rule->patterns.push_back(unescape(arg, source, lineno));
        } else if (directive == "respond") {
            if (rule->response) throw LoadError(source, lineno, "rule '" + rule->name + "' has two responses");
            rule->response = unescape(arg, source, lineno);
        } else if (directive == "option") {
            auto ws = arg.find_first_of(" \t");
            std::string weight_text(arg.substr(0, ws));
            double weight = 0;
            try {
                std::size_t used = 0;
                weight = std::stod(weight_text, &used);
                if (used != weight_text.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw LoadError(source, lineno, "option weight must be a number");
            }
            if (!(weight > 0) || !std::isfinite(weight)) {
                throw LoadError(source, lineno, "option weight must be positive");
            }
            if (ws == std::string_view::npos) throw LoadError(source, lineno, "option needs a response text");
            rule->options.push_back({weight, unescape(text::trim(arg.substr(ws)), source, lineno)});
        } else if (directive == "sequence") {
            rule->sequence.push_back(unescape(arg, source, lineno));
        } else {
            throw LoadError(source, lineno, "unknown directive '" + std::string(directive) + "'");
        }
        int kinds = (rule->response ? 1 : 0) + (rule->options.empty() ? 0 : 1) + (rule->sequence.empty() ? 0 : 1);
        if (kinds > 1) throw LoadError(source, lineno, "rule '" + rule->name + "' mixes respond, option and sequence");
    }
    finish(lineno);
    return script;
}

ScenarioScript load_script(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open script file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_script(ss.str(), path.string());
}

std::size_t weighted_pick(std::mt19937_64& rng, const std::vector<WeightedResponse>& options) {
    double total = 0;
    for (const auto& o : options) total += o.weight;
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
    double acc = 0;
    for (std::size_t i = 0; i < options.size(); ++i) {
        acc += options[i].weight;
        if (u < acc) return i;
    }
    return options.size() - 1;
}

std::string expand_response(std::string_view response, const PromptBundle& bundle) {
    if (response.find("${") == std::string_view::npos) return std::string(response);
    std::string out(response);
    if (out.find("${LAST_OUTPUT}") != std::string::npos) {
        std::string last = between(bundle.context, "The output from the last action was: ",
                                   {"\nThe summary of the last action was: ", "\n\n"});
        out = text::replace_all(std::move(out), "${LAST_OUTPUT}", last);
    }
    if (out.find("${LAST_CMD}") != std::string::npos) {
        out = text::replace_all(std::move(out), "${LAST_CMD}",
                                between(bundle.context, "The last action(s) conducted was:", {"\n"}));
    }
    return out;
}

ScriptedModel::ScriptedModel(ScenarioScript script, std::optional<std::uint64_t> seed)
    : script_(std::move(script)), rng_(seed.value_or(script_.seed)) {}

std::string ScriptedModel::complete(const PromptBundle& bundle, const CompletionParams&) {
    std::lock_guard lock(mu_);
    for (const auto& rule : script_.rules) {
        if (!rule.matches(bundle)) continue;
        answered_.push_back(rule.name);
        if (rule.response) return expand_response(*rule.response, bundle);
        if (!rule.options.empty()) return expand_response(rule.options[weighted_pick(rng_, rule.options)].text, bundle);
        std::size_t& pos = positions_[rule.name];
        const std::string& item = rule.sequence[std::min(pos, rule.sequence.size() - 1)];
        if (pos < rule.sequence.size()) ++pos;
        return expand_response(item, bundle);
    }
    std::string stage(to_string(bundle.stage));
    throw GatewayError(GatewayError::Kind::NoRuleMatched, "no script rule matches the " + stage + " prompt");
}

std::vector<std::string> ScriptedModel::answered() const {
    std::lock_guard lock(mu_);
    return answered_;
}

}  // namespace redchain
