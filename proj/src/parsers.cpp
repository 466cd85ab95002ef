#include "redchain/parsers.hpp"

#include <array>
#include <cctype>
#include <set>

#include "redchain/text.hpp"

namespace redchain {

namespace {

constexpr std::size_t kExcerptLimit = 160;

std::string excerpt(std::string_view s) {
    auto t = text::trim(s);
    if (t.size() <= kExcerptLimit) return std::string(t);
    return std::string(t.substr(0, kExcerptLimit)) + "...";
}

std::string normalize_quotes(std::string_view s) {
    std::string out(s);
    out = text::replace_all(std::move(out), "\xE2\x80\x99", "'");  // right single quotation mark
    out = text::replace_all(std::move(out), "\xE2\x80\x98", "'");
    return out;
}

// "1) ", "1. ", "1: ", "- ", "* " prefixes.
std::string_view strip_enumeration(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == ')' || line[i] == '.' || line[i] == ':')) {
        std::size_t j = i + 1;
        if (j == line.size() || text::is_space(line[j])) return text::trim(line.substr(j));
    }
    if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && text::is_space(line[1])) {
        return text::trim(line.substr(2));
    }
    if (line.starts_with("\xE2\x80\xA2")) return text::trim(line.substr(3));  // bullet
    return line;
}

std::string_view strip_quotes(std::string_view line) {
    while (line.size() >= 2) {
        char f = line.front();
        if ((f == '"' || f == '\'' || f == '`') && line.back() == f) {
            line = text::trim(line.substr(1, line.size() - 2));
        } else {
            break;
        }
    }
    return line;
}

bool is_stop_line(std::string_view line) {
    while (!line.empty() && (line.back() == '.' || line.back() == '!')) line.remove_suffix(1);
    return text::iequals(text::trim(line), "STOP");
}

bool is_capitalized_word(std::string_view token) {
    if (token.size() < 2 || !std::isupper(static_cast<unsigned char>(token[0]))) return false;
    bool has_lower = false;
    for (char c : token.substr(1)) {
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != '\'') return false;
        if (std::islower(static_cast<unsigned char>(c))) has_lower = true;
    }
    return has_lower;
}

bool is_command_shaped(std::string_view line) {
    auto words = text::split_words(line);
    if (words.empty()) return false;
    auto first = words.front();
    if (first.find_first_of(",;:!?") != std::string_view::npos) return false;
    if (first.back() == '.') return false;
    if (is_capitalized_word(first)) return false;
    return true;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

constexpr std::array<std::pair<std::string_view, Tactic>, 4> kTacticTokens{{
    {"RECON", Tactic::Recon},
    {"EXPLOIT", Tactic::Exploit},
    {"EXFILTRATION", Tactic::Exfiltration},
    {"END_OF_CAMPAIGN", Tactic::EndOfCampaign},
}};

constexpr std::array<std::string_view, 8> kRecommendationMarkers{
    "next action", "next step", "consider", "recommend", "should", "try ", "suggest", "possible next",
};

std::string extract_recommendations(std::string_view summary) {
    std::vector<std::string> clauses;
    std::string current;
    auto flush = [&] {
        auto t = text::trim(current);
        if (!t.empty()) clauses.emplace_back(t);
        current.clear();
    };
    for (std::size_t i = 0; i < summary.size(); ++i) {
        char c = summary[i];
        if (c == ';' || c == '\n') {
            flush();
        } else if (c == '.' && (i + 1 == summary.size() || text::is_space(summary[i + 1]))) {
            current += c;
            flush();
        } else {
            current += c;
        }
    }
    flush();
    std::vector<std::string> picked;
    for (const auto& clause : clauses) {
        std::string lower = text::to_lower(clause);
        for (auto marker : kRecommendationMarkers) {
            if (lower.find(marker) != std::string::npos) {
                picked.push_back(clause);
                break;
            }
        }
    }
    return text::join(picked, " ");
}

}  // namespace

ParseOutcome<ActionBlock> parse_enumerated_commands(std::string_view raw, const ParserOptions& options) {
    std::string normalized = normalize_quotes(raw);
    for (const auto& marker : options.refusal_markers) {
        if (text::icontains(normalized, normalize_quotes(marker))) {
            return ParseOutcome<ActionBlock>::failure("refusal", excerpt(raw));
        }
    }

    ActionBlock block;
    for (auto line : text::split_lines(normalized)) {
        auto t = text::trim(line);
        if (t.empty() || t.starts_with("```")) continue;
        t = strip_quotes(strip_enumeration(t));
        if (t.empty()) continue;
        if (is_stop_line(t)) {
            block.stop_requested = true;
            break;
        }
        if (is_command_shaped(t)) block.commands.emplace_back(t);
    }
    if (block.commands.empty() && !block.stop_requested) {
        return ParseOutcome<ActionBlock>::failure("no commands", excerpt(raw));
    }
    return ParseOutcome<ActionBlock>::success(std::move(block));
}

ParseOutcome<Tactic> parse_tactic(std::string_view raw) {
    auto t = text::trim(raw);
    for (const auto& [token, tactic] : kTacticTokens) {
        if (t == token) return ParseOutcome<Tactic>::success(tactic);
    }
    std::set<Tactic> found;
    std::size_t i = 0;
    while (i < t.size()) {
        if (!is_word_char(t[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < t.size() && is_word_char(t[i])) ++i;
        auto word = t.substr(b, i - b);
        for (const auto& [token, tactic] : kTacticTokens) {
            if (word == token) found.insert(tactic);
        }
    }
    if (found.size() == 1) return ParseOutcome<Tactic>::success(*found.begin());
    if (found.empty()) return ParseOutcome<Tactic>::failure("no tactic", excerpt(raw));
    return ParseOutcome<Tactic>::failure("ambiguous", excerpt(raw));
}

ParseOutcome<TranslationReport> parse_translation(std::string_view raw) {
    auto t = text::trim(raw);
    std::size_t i = 0;
    while (i < t.size() && std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
    std::string token = text::to_upper(t.substr(0, i));

    TranslationReport report;
    if (token == "SUCCESS" || token == "SUCCESSFUL") {
        report.verdict = Verdict::Success;
    } else if (token == "FAIL" || token == "FAILURE" || token == "FAILED") {
        report.verdict = Verdict::Fail;
    } else {
        return ParseOutcome<TranslationReport>::failure("no verdict", excerpt(raw));
    }

    auto rest = t.substr(i);
    std::size_t j = 0;
    while (j < rest.size()) {
        if (text::is_space(rest[j]) || rest[j] == ':' || rest[j] == '-' || rest[j] == ',' || rest[j] == '.') {
            ++j;
        } else if (rest.substr(j).starts_with("\xE2\x80\x93") || rest.substr(j).starts_with("\xE2\x80\x94")) {
            j += 3;  // en/em dash
        } else {
            break;
        }
    }
    report.summary = std::string(text::trim(rest.substr(j)));
    if (report.verdict == Verdict::Success && report.summary.empty()) {
        return ParseOutcome<TranslationReport>::failure("empty summary", excerpt(raw));
    }
    report.recommendations = extract_recommendations(report.summary);
    return ParseOutcome<TranslationReport>::success(std::move(report));
}

std::vector<PlaceholderSpan> detect_placeholders(const ActionBlock& block) {
    std::vector<PlaceholderSpan> spans;
    for (std::size_t ci = 0; ci < block.commands.size(); ++ci) {
        const std::string& cmd = block.commands[ci];
        std::size_t i = 0;
        while ((i = cmd.find('<', i)) != std::string::npos) {
            std::size_t j = i + 1;
            if (j >= cmd.size() || !std::isalpha(static_cast<unsigned char>(cmd[j]))) {
                ++i;
                continue;
            }
            while (j < cmd.size()) {
                char c = cmd[j];
                if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '_' || c == '-' || c == '.' ||
                    c == '/') {
                    ++j;
                } else {
                    break;
                }
            }
            if (j < cmd.size() && cmd[j] == '>') {
                spans.push_back(PlaceholderSpan{ci, i, j + 1 - i, cmd.substr(i, j + 1 - i)});
                i = j + 1;
            } else {
                ++i;
            }
        }
    }
    return spans;
}

std::string render_enumerated(const ActionBlock& block) {
    std::string out;
    for (std::size_t i = 0; i < block.commands.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ") " + block.commands[i];
    }
    if (block.stop_requested) {
        if (!out.empty()) out += '\n';
        out += "STOP";
    }
    return out;
}

}  // namespace redchain
