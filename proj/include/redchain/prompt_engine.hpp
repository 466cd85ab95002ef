#pragma once

// Stage prompt composition: SETUP / CONTEXT / INSTRUCTION sub-prompts joined by
// blank lines, fitted to the prompt token budget.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "redchain/domain.hpp"

namespace redchain {

/// Every template text the engine uses. Placeholders are written <LIKE THIS>.
struct TemplateSet {
    std::string execution_setup;
    std::map<Tactic, std::string> branches;  // Start, Recon, Exploit, Exfiltration, Default
    std::string execution_instruction;
    std::string translation_setup;
    std::string translation_instruction;
    std::string tactic_setup;
    std::string tactic_instruction;

    std::string header;             // <AGENT IP ADDRESS>, <LAST CMD>, <LAST OUTPUT>
    std::string summary_line;       // <SUMMARY>; added when the output was elided
    std::string history_heading;
    std::string elision_marker;
    std::string corrective_suffix;
    std::string no_output;          // stands in for an empty output
    std::string none_value;         // LAST CMD / LAST OUTPUT on a fresh campaign

    /// Branch text for a tactic; Default for anything without its own branch.
    const std::string& branch(Tactic tactic) const;
    bool operator==(const TemplateSet&) const = default;
};

TemplateSet builtin_templates();
TemplateSet load_templates(const std::filesystem::path& path);
TemplateSet parse_templates(std::string_view json_text, const std::string& source);
std::string templates_to_json(const TemplateSet& templates);

/// Instruction as sent on a corrective re-prompt. The suffix goes before a
/// trailing "1)" cue so the prompt still ends with it.
std::string corrective_instruction(std::string_view instruction, std::string_view suffix);

/// ceil(words / 0.75), computed in integers.
std::size_t estimate_tokens(std::string_view text);
/// Largest word count whose estimate fits in `budget` tokens.
std::size_t word_allowance(std::size_t budget);

/// Reduce `text` to at most `max_words` words: head 60% / tail 40% of the
/// allowance, whole lines where possible, joined around `marker`.
std::string elide_output(std::string_view text, std::size_t max_words, std::string_view marker);

class PromptEngine {
public:
    explicit PromptEngine(TemplateSet templates = builtin_templates(), std::size_t budget = 3072);

    PromptBundle compose_execution(const CampaignState& state, bool corrective = false) const;
    /// Translation prompt for `latest`, the step just executed (not yet in history).
    PromptBundle compose_translation(const CampaignState& state, const StepRecord& latest,
                                     bool corrective = false) const;
    /// Translation prompt for the newest recorded step.
    PromptBundle compose_translation(const CampaignState& state, bool corrective = false) const;
    PromptBundle compose_tactic(const CampaignState& state, bool corrective = false) const;

    /// Execution CONTEXT fitted so the whole prompt stays within `budget`.
    std::string truncate_context(const CampaignState& state, std::size_t budget) const;

    const TemplateSet& templates() const noexcept { return templates_; }
    std::size_t budget() const noexcept { return budget_; }

private:
    PromptBundle execution_bundle(const CampaignState& state, bool corrective, std::size_t budget) const;

    TemplateSet templates_;
    std::size_t budget_;
};

PromptBundle compose_execution_prompt(const CampaignState& state);
PromptBundle compose_translation_prompt(const CampaignState& state);
PromptBundle compose_tactic_prompt(const CampaignState& state);

/// Join non-empty sections with a blank line.
std::string compose_sections(std::string_view setup, std::string_view context, std::string_view instruction);

/// The execution-prompt statements in the order the ablation adds them.
const std::vector<std::string>& ablation_statements();
/// The cumulative execution-prompt statements, one bundle per row.
std::vector<PromptBundle> ablation_variants();

}  // namespace redchain
