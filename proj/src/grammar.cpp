#include "redchain/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/text.hpp"

namespace redchain {

struct PromptGrammar::Node {
    enum class Kind { Literal, Placeholder, Ref, Seq, Alt, Opt, Plus, Star };
    Kind kind = Kind::Literal;
    std::string text;  // literal bytes, placeholder class, or referenced name
    std::vector<std::shared_ptr<const Node>> kids;
};

namespace {

using Node = PromptGrammar::Node;
using NodePtr = std::shared_ptr<const Node>;
using Positions = std::vector<std::size_t>;

constexpr std::size_t kMaxDepth = 256;

NodePtr make(Node::Kind kind, std::string text = {}, std::vector<NodePtr> kids = {}) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->text = std::move(text);
    n->kids = std::move(kids);
    return n;
}

void normalize(Positions& p) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
}

std::string_view stage_prefix(PromptStage stage) {
    switch (stage) {
        case PromptStage::Execution: return "execution";
        case PromptStage::Translate: return "translation";
        case PromptStage::TacticSelect: return "tactic";
    }
    return "";
}

// Template placeholders and the character class each one admits.
const std::vector<std::pair<std::string, std::string>> kPlaceholderClasses{
    {"<AGENT IP ADDRESS>", "ip"}, {"<TARGET IP>", "ip"},   {"<LAST CMD>", "line"},
    {"<OBJECTIVE>", "line"},      {"<LAST OUTPUT>", "text"}, {"<SUMMARY>", "text"},
};

NodePtr template_node(std::string_view tmpl) {
    std::vector<NodePtr> parts;
    std::string lit;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool hit = false;
        if (tmpl[i] == '<') {
            for (const auto& [token, cls] : kPlaceholderClasses) {
                if (tmpl.substr(i).starts_with(token)) {
                    if (!lit.empty()) parts.push_back(make(Node::Kind::Literal, std::exchange(lit, {})));
                    parts.push_back(make(Node::Kind::Placeholder, cls));
                    i += token.size();
                    hit = true;
                    break;
                }
            }
        }
        if (!hit) lit += tmpl[i++];
    }
    if (!lit.empty()) parts.push_back(make(Node::Kind::Literal, lit));
    if (parts.size() == 1) return parts.front();
    return make(Node::Kind::Seq, {}, std::move(parts));
}

std::map<std::string, std::string> template_terminals(const TemplateSet& t) {
    std::map<std::string, std::string> m{
        {"execution.setup", t.execution_setup},
        {"execution.instruction", t.execution_instruction},
        {"execution.instruction.corrective", corrective_instruction(t.execution_instruction, t.corrective_suffix)},
        {"translation.setup", t.translation_setup},
        {"translation.instruction", t.translation_instruction},
        {"translation.instruction.corrective", corrective_instruction(t.translation_instruction, t.corrective_suffix)},
        {"tactic.setup", t.tactic_setup},
        {"tactic.instruction", t.tactic_instruction},
        {"tactic.instruction.corrective", corrective_instruction(t.tactic_instruction, t.corrective_suffix)},
        {"header", t.header},
        {"summary_line", t.summary_line},
        {"history_heading", t.history_heading},
        {"elision_marker", t.elision_marker},
        {"corrective_suffix", t.corrective_suffix},
    };
    for (const auto& [tactic, text] : t.branches) m["branch." + std::string(tactic_token(tactic))] = text;
    if (t.branches.count(Tactic::Default)) m["branch.DEFAULT"] = t.branches.at(Tactic::Default);
    return m;
}

// ---- grammar text parser -------------------------------------------------

class ExprParser {
public:
    ExprParser(std::string_view src, const std::string& source, std::size_t line,
               const std::map<std::string, std::string>& templates, std::vector<std::string>& terminals,
               std::set<std::string>& refs)
        : s_(src), source_(source), line_(line), templates_(templates), terminals_(terminals), refs_(refs) {}

    NodePtr parse_all() {
        NodePtr n = alt();
        skip();
        if (i_ < s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw LoadError(source_, line_, msg); }

    void skip() {
        while (i_ < s_.size() && text::is_space(s_[i_])) ++i_;
    }

    bool peek(char c) {
        skip();
        return i_ < s_.size() && s_[i_] == c;
    }

    NodePtr alt() {
        std::vector<NodePtr> options{seq()};
        while (peek('|')) {
            ++i_;
            options.push_back(seq());
        }
        return options.size() == 1 ? options.front() : make(Node::Kind::Alt, {}, std::move(options));
    }

    NodePtr seq() {
        std::vector<NodePtr> items;
        while (true) {
            skip();
            if (i_ >= s_.size() || s_[i_] == '|' || s_[i_] == ')' || s_[i_] == ']') break;
            items.push_back(postfix());
        }
        if (items.empty()) fail("empty alternative");
        return items.size() == 1 ? items.front() : make(Node::Kind::Seq, {}, std::move(items));
    }

    NodePtr postfix() {
        NodePtr n = atom();
        while (i_ < s_.size() && (s_[i_] == '+' || s_[i_] == '*' || s_[i_] == '?')) {
            char op = s_[i_++];
            n = make(op == '+' ? Node::Kind::Plus : op == '*' ? Node::Kind::Star : Node::Kind::Opt, {}, {n});
        }
        return n;
    }

    std::string word() {
        std::size_t b = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' ||
                                  s_[i_] == '.' || s_[i_] == '-'))
            ++i_;
        return std::string(s_.substr(b, i_ - b));
    }

    NodePtr atom() {
        skip();
        char c = s_[i_];
        if (c == '(' || c == '[') {
            ++i_;
            NodePtr inner = alt();
            char close = c == '(' ? ')' : ']';
            if (!peek(close)) fail(std::string("expected '") + close + "'");
            ++i_;
            return c == '[' ? make(Node::Kind::Opt, {}, {inner}) : inner;
        }
        if (c == '"') {
            ++i_;
            std::string lit;
            while (i_ < s_.size() && s_[i_] != '"') {
                if (s_[i_] == '\\' && i_ + 1 < s_.size()) {
                    char e = s_[++i_];
                    lit += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                } else {
                    lit += s_[i_];
                }
                ++i_;
            }
            if (i_ >= s_.size()) fail("unterminated string literal");
            ++i_;
            if (lit.empty()) fail("empty string literal");
            terminals_.push_back("\"" + lit + "\"");
            return make(Node::Kind::Literal, lit);
        }
        if (c == '<') {
            ++i_;
            std::string name = word();
            if (name.empty() || i_ >= s_.size() || s_[i_] != '>') fail("malformed nonterminal");
            ++i_;
            refs_.insert(name);
            return make(Node::Kind::Ref, name);
        }
        if (c == '@') {
            ++i_;
            std::string key = word();
            auto it = templates_.find(key);
            if (it == templates_.end()) fail("unknown template key @" + key);
            terminals_.push_back("@" + key);
            return template_node(it->second);
        }
        if (c == '%') {
            ++i_;
            std::string cls = word();
            if (cls != "ip" && cls != "line" && cls != "text") fail("unknown placeholder class %" + cls);
            return make(Node::Kind::Placeholder, cls);
        }
        std::string kw = word();
        if (kw == "SEP") return make(Node::Kind::Literal, "\n\n");
        if (kw == "NL") return make(Node::Kind::Literal, "\n");
        if (kw == "SP") return make(Node::Kind::Literal, " ");
        fail(kw.empty() ? "unexpected '" + std::string(1, c) + "'" : "unknown symbol " + kw);
    }

    std::string_view s_;
    std::size_t i_ = 0;
    const std::string& source_;
    std::size_t line_;
    const std::map<std::string, std::string>& templates_;
    std::vector<std::string>& terminals_;
    std::set<std::string>& refs_;
};

// ---- matcher ---------------------------------------------------------------

struct Matcher {
    const std::map<std::string, NodePtr>& productions;
    std::string_view stage;
    std::string_view s;

    const Node* resolve(const std::string& name) const {
        auto it = productions.find(std::string(stage) + "." + name);
        if (it != productions.end()) return it->second.get();
        it = productions.find(name);
        return it == productions.end() ? nullptr : it->second.get();
    }

    Positions placeholder(const std::string& cls, std::size_t p) const {
        Positions out;
        if (cls == "ip") {
            std::size_t e = p;
            while (e < s.size() && (std::isxdigit(static_cast<unsigned char>(s[e])) || s[e] == '.' || s[e] == ':')) {
                out.push_back(++e);
            }
        } else if (cls == "line") {
            for (std::size_t e = p; e < s.size() && s[e] != '\n'; ++e) out.push_back(e + 1);
        } else {
            std::size_t para = s.find("\n\n", p);
            std::size_t limit = para == std::string_view::npos ? s.size() : para + 1;
            for (std::size_t e = p + 1; e <= limit && e <= s.size(); ++e) out.push_back(e);
        }
        return out;
    }

    Positions match(const Node& n, const Positions& starts, std::size_t depth = 0) const {
        Positions out;
        if (starts.empty() || depth > kMaxDepth) return out;
        switch (n.kind) {
            case Node::Kind::Literal:
                for (std::size_t p : starts) {
                    if (s.substr(p).starts_with(n.text)) out.push_back(p + n.text.size());
                }
                break;
            case Node::Kind::Placeholder:
                for (std::size_t p : starts) {
                    auto ends = placeholder(n.text, p);
                    out.insert(out.end(), ends.begin(), ends.end());
                }
                normalize(out);
                break;
            case Node::Kind::Ref:
                if (const Node* target = resolve(n.text)) out = match(*target, starts, depth + 1);
                break;
            case Node::Kind::Seq:
                out = starts;
                for (const auto& kid : n.kids) {
                    out = match(*kid, out, depth + 1);
                    if (out.empty()) break;
                }
                break;
            case Node::Kind::Alt:
                for (const auto& kid : n.kids) {
                    auto ends = match(*kid, starts, depth + 1);
                    out.insert(out.end(), ends.begin(), ends.end());
                }
                normalize(out);
                break;
            case Node::Kind::Opt:
                out = match(*n.kids[0], starts, depth + 1);
                out.insert(out.end(), starts.begin(), starts.end());
                normalize(out);
                break;
            case Node::Kind::Plus:
            case Node::Kind::Star: {
                std::set<std::size_t> seen;
                if (n.kind == Node::Kind::Star) seen.insert(starts.begin(), starts.end());
                Positions frontier = match(*n.kids[0], starts, depth + 1);
                while (!frontier.empty()) {
                    Positions fresh;
                    for (std::size_t p : frontier) {
                        if (seen.insert(p).second) fresh.push_back(p);
                    }
                    frontier = match(*n.kids[0], fresh, depth + 1);
                }
                out.assign(seen.begin(), seen.end());
                break;
            }
        }
        return out;
    }
};

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return 0;
    std::size_t n = 0;
    for (std::size_t p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

const Node* first_literal(const Node& n) {
    if (n.kind == Node::Kind::Literal) return &n;
    if (n.kind == Node::Kind::Seq && !n.kids.empty()) return first_literal(*n.kids.front());
    return nullptr;
}

}  // namespace

PromptGrammar PromptGrammar::parse(std::string_view grammar_text, const std::string& source,
                                   const TemplateSet& templates) {
    PromptGrammar g;
    auto terms = template_terminals(templates);
    std::set<std::string> refs;

    // Join continuation lines (leading whitespace then '|') onto their production.
    struct Pending {
        std::size_t line;
        std::string name;
        std::string body;
    };
    std::vector<Pending> defs;
    std::size_t lineno = 0;
    for (auto raw : text::split_lines(grammar_text)) {
        ++lineno;
        auto t = text::trim(raw);
        if (t.empty() || t.front() == '#') continue;
        if (t.front() == '|' && !raw.empty() && text::is_space(raw.front())) {
            if (defs.empty()) throw LoadError(source, lineno, "continuation without a production");
            defs.back().body += " " + std::string(t);
            continue;
        }
        auto arrow = t.find("::=");
        if (arrow == std::string_view::npos) throw LoadError(source, lineno, "expected '<name> ::= ...'");
        auto lhs = text::trim(t.substr(0, arrow));
        if (lhs.size() < 3 || lhs.front() != '<' || lhs.back() != '>') {
            throw LoadError(source, lineno, "left side must be a <nonterminal>");
        }
        std::string name(lhs.substr(1, lhs.size() - 2));
        for (const auto& d : defs) {
            if (d.name == name) throw LoadError(source, lineno, "duplicate production <" + name + ">");
        }
        defs.push_back({lineno, name, std::string(t.substr(arrow + 3))});
    }

    for (const auto& d : defs) {
        ExprParser p(d.body, source, d.line, terms, g.terminals_, refs);
        g.productions_[d.name] = p.parse_all();
    }
    if (!g.productions_.count(g.start_)) throw LoadError(source, 0, "grammar has no <prompt> production");
    for (const auto& r : refs) {
        bool found = g.productions_.count(r) > 0;
        for (const char* stage : {"execution.", "translation.", "tactic."}) {
            if (g.productions_.count(stage + r)) found = true;
        }
        if (!found) throw LoadError(source, 0, "undefined nonterminal <" + r + ">");
    }

    for (const auto& [name, node] : g.productions_) {
        if (name != "tactic_branch" && !name.ends_with(".tactic_branch")) continue;
        std::vector<NodePtr> options = node->kind == Node::Kind::Alt ? node->kids : std::vector<NodePtr>{node};
        for (const auto& opt : options) {
            if (const Node* lit = first_literal(*opt)) g.branch_texts_.push_back(lit->text);
        }
    }
    return g;
}

PromptGrammar PromptGrammar::load(const std::filesystem::path& path, const TemplateSet& templates) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open grammar file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string(), templates);
}

PromptGrammar PromptGrammar::builtin(const TemplateSet& templates) {
    return parse(builtin_grammar_text(), "builtin:prompt.bnf", templates);
}

std::vector<std::string> PromptGrammar::nonterminals() const {
    std::vector<std::string> out;
    for (const auto& [name, node] : productions_) out.push_back(name);
    return out;
}

GrammarVerdict PromptGrammar::validate(const PromptBundle& bundle) const {
    std::string_view s = bundle.composed;

    std::size_t branches = 0;
    for (const auto& b : branch_texts_) branches += count_occurrences(s, b);
    if (branches > 1) return GrammarVerdict::reject("multiple <tactic_branch>");

    Matcher m{productions_, stage_prefix(bundle.stage), s};
    const Node& top = *productions_.at(start_);
    std::vector<NodePtr> elements = top.kind == Node::Kind::Seq ? top.kids : std::vector<NodePtr>{productions_.at(start_)};

    auto section_name = [&](std::size_t k) {
        for (std::size_t j = k; j < elements.size(); ++j) {
            if (elements[j]->kind == Node::Kind::Ref) return elements[j]->text;
        }
        for (std::size_t j = k + 1; j-- > 0;) {
            if (j < elements.size() && elements[j]->kind == Node::Kind::Ref) return elements[j]->text;
        }
        return start_;
    };

    Positions pos{0};
    for (std::size_t k = 0; k < elements.size(); ++k) {
        pos = m.match(*elements[k], pos);
        if (pos.empty()) return GrammarVerdict::reject("missing <" + section_name(k) + ">");
    }
    if (!std::binary_search(pos.begin(), pos.end(), s.size())) {
        return GrammarVerdict::reject("unexpected text after <" + section_name(elements.size() - 1) + ">");
    }
    if (bundle.composed != compose_sections(bundle.setup, bundle.context, bundle.instruction)) {
        return GrammarVerdict::reject("sections do not match the composed text");
    }
    return GrammarVerdict::accept();
}

GrammarVerdict validate_prompt(const PromptBundle& bundle, const PromptGrammar& grammar) {
    return grammar.validate(bundle);
}

std::string builtin_grammar_text() {
    return R"(# Prompt grammar, schema redchain.grammar/1.
# Every stage prompt is three sections separated by a blank line.
<prompt> ::= <setup> SEP <context> SEP <instructions>

<header> ::= @header
<summary> ::= NL @summary_line
<history> ::= @history_heading ( NL %line )+ SEP

<execution.setup> ::= @execution.setup
<execution.context> ::= [ <history> ] <header> [ <summary> ] SEP <tactic_branch>
<tactic_branch> ::= @branch.START
    | @branch.RECON
    | @branch.EXPLOIT
    | @branch.EXFILTRATION
    | @branch.DEFAULT
<execution.instructions> ::= @execution.instruction | @execution.instruction.corrective

<translation.setup> ::= @translation.setup
<translation.context> ::= <header>
<translation.instructions> ::= @translation.instruction | @translation.instruction.corrective

<tactic.setup> ::= @tactic.setup
<tactic.context> ::= <header>
<tactic.instructions> ::= @tactic.instruction | @tactic.instruction.corrective
)";
}

}  // namespace redchain
