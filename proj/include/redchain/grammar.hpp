#pragma once

// Prompt grammar: the setup / context / instructions skeleton, loaded from a
// small BNF-like data file whose @key terminals name template texts.
//
//   <name> ::= alternatives separated by |
//   "literal"  @template.key  SEP (blank line)  NL  SP  %ip  %line  %text
//   [ optional ]  ( group )  postfix + * ?
//
// A reference <x> inside a stage prompt resolves to <stage.x> when defined.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "redchain/domain.hpp"
#include "redchain/prompt_engine.hpp"

namespace redchain {

struct GrammarVerdict {
    bool accepted = false;
    std::string reason;

    static GrammarVerdict accept() { return {true, {}}; }
    static GrammarVerdict reject(std::string why) { return {false, std::move(why)}; }
    explicit operator bool() const noexcept { return accepted; }
};

class PromptGrammar {
public:
    struct Node;

    static PromptGrammar parse(std::string_view grammar_text, const std::string& source,
                               const TemplateSet& templates = builtin_templates());
    static PromptGrammar load(const std::filesystem::path& path, const TemplateSet& templates = builtin_templates());
    static PromptGrammar builtin(const TemplateSet& templates = builtin_templates());

    GrammarVerdict validate(const PromptBundle& bundle) const;

    const std::string& start_symbol() const noexcept { return start_; }
    std::vector<std::string> nonterminals() const;
    /// Template keys and quoted literals used as terminals.
    const std::vector<std::string>& terminals() const noexcept { return terminals_; }
    std::size_t production_count() const noexcept { return productions_.size(); }

private:
    std::string start_ = "prompt";
    std::map<std::string, std::shared_ptr<const Node>> productions_;
    std::vector<std::string> terminals_;
    std::vector<std::string> branch_texts_;
};

GrammarVerdict validate_prompt(const PromptBundle& bundle, const PromptGrammar& grammar);

/// The grammar shipped in data/grammar/prompt.bnf.
std::string builtin_grammar_text();

}  // namespace redchain
