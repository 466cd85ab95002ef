#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/grammar.hpp"

using namespace redchain;

namespace {

StepRecord step(std::size_t index, std::string cmd, std::string output, Verdict v = Verdict::Success) {
    StepRecord s;
    s.index = index;
    s.tactic = Tactic::Recon;
    s.action.commands = {std::move(cmd)};
    CommandRecord r;
    r.command = s.action.commands[0];
    r.output = std::move(output);
    s.execution.records.push_back(r);
    s.translation.verdict = v;
    s.translation.summary = "port 21 runs vsftpd 2.3.4";
    return s;
}

PromptBundle recompose(PromptBundle b) {
    b.composed = compose_sections(b.setup, b.context, b.instruction);
    return b;
}

// A spread of engine outputs: every stage, every tactic, corrective variants, elided outputs.
std::vector<PromptBundle> engine_bundles() {
    std::vector<PromptBundle> out;
    PromptEngine engine;
    std::mt19937 rng(77);
    auto s = new_campaign(CampaignConfig{});
    out.push_back(engine.compose_execution(s));
    out.push_back(engine.compose_execution(s, true));
    out.push_back(engine.compose_tactic(s));
    for (std::size_t i = 0; i < 6; ++i) {
        std::string output;
        std::size_t words = i == 3 ? 9000 : 20 + rng() % 200;
        for (std::size_t w = 0; w < words; ++w) output += (w % 9 == 8) ? "open\n" : "tcp ";
        s = record_step(s, step(i, "nmap -p " + std::to_string(i) + " 172.16.2.3", output,
                                i % 2 ? Verdict::Fail : Verdict::Success));
        for (auto t : {Tactic::Recon, Tactic::Exploit, Tactic::Exfiltration, Tactic::Default}) {
            s.tactic = t;
            out.push_back(engine.compose_execution(s));
            out.push_back(engine.compose_execution(s, i % 2 == 1));
        }
        out.push_back(engine.compose_translation(s));
        out.push_back(engine.compose_translation(s, true));
        out.push_back(engine.compose_tactic(s));
        out.push_back(engine.compose_tactic(s, true));
    }
    auto empty_out = s;
    empty_out.history.back().execution.records.back().output.clear();
    out.push_back(engine.compose_execution(empty_out));
    return out;
}

}  // namespace

TEST(Grammar, BuiltinIsWellFormed) {
    auto g = PromptGrammar::builtin();
    EXPECT_EQ(g.start_symbol(), "prompt");
    EXPECT_GE(g.production_count(), 10u);
    auto nts = g.nonterminals();
    EXPECT_NE(std::find(nts.begin(), nts.end(), "tactic_branch"), nts.end());
    EXPECT_FALSE(g.terminals().empty());
}

TEST(Grammar, ShippedFileMatchesBuiltin) {
    std::ifstream in(std::string(REDCHAIN_DATA_DIR) + "/grammar/prompt.bnf", std::ios::binary);
    ASSERT_TRUE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), builtin_grammar_text());
    EXPECT_NO_THROW(PromptGrammar::load(std::string(REDCHAIN_DATA_DIR) + "/grammar/prompt.bnf"));
}

TEST(Grammar, LoadErrorsNameTheLine) {
    try {
        PromptGrammar::parse("<prompt> ::= <setup>\n<setup> ::= @no.such.key\n", "g.bnf");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(PromptGrammar::parse("<prompt> ::= <undefined>\n", "g.bnf"), LoadError);
    EXPECT_THROW(PromptGrammar::parse("<other> ::= \"x\"\n", "g.bnf"), LoadError);
    EXPECT_THROW(PromptGrammar::parse("<prompt> ::= \"x\"\n<prompt> ::= \"y\"\n", "g.bnf"), LoadError);
    EXPECT_THROW(PromptGrammar::parse("<prompt> ::= ( \"x\"\n", "g.bnf"), LoadError);
}

TEST(Grammar, ClosureOverEngineOutput) {
    auto g = PromptGrammar::builtin();
    for (const auto& b : engine_bundles()) {
        auto v = validate_prompt(b, g);
        EXPECT_TRUE(v.accepted) << v.reason << "\n---\n" << b.composed.substr(0, 600);
    }
}

TEST(Grammar, InstructionRemovedIsRejected) {
    auto g = PromptGrammar::builtin();
    auto b = compose_tactic_prompt(new_campaign(CampaignConfig{}));
    b.instruction.clear();
    b = recompose(b);
    auto v = validate_prompt(b, g);
    EXPECT_FALSE(v.accepted);
    EXPECT_EQ(v.reason, "missing <instructions>");
}

TEST(Grammar, SectionDeletionMutants) {
    auto g = PromptGrammar::builtin();
    std::size_t mutants = 0;
    for (const auto& b : engine_bundles()) {
        for (int section = 0; section < 3; ++section) {
            PromptBundle m = b;
            (section == 0 ? m.setup : section == 1 ? m.context : m.instruction).clear();
            m = recompose(m);
            auto v = validate_prompt(m, g);
            ++mutants;
            EXPECT_FALSE(v.accepted) << "section " << section;
            const char* expected[] = {"missing <setup>", "missing <context>", "missing <instructions>"};
            EXPECT_EQ(v.reason, expected[section]);
        }
        // Deleting from the composed text alone (sections left intact) is caught too.
        PromptBundle raw = b;
        raw.composed = b.setup + "\n\n" + b.context;
        EXPECT_FALSE(validate_prompt(raw, g).accepted);
    }
    EXPECT_GT(mutants, 100u);
}

TEST(Grammar, BranchDuplicationMutants) {
    auto g = PromptGrammar::builtin();
    auto t = builtin_templates();
    std::size_t mutants = 0;
    const std::vector<std::string> joins{"\n\n", "\n", " ", ""};
    for (const auto& b : engine_bundles()) {
        if (b.stage != PromptStage::Execution) continue;
        auto cut = b.context.rfind("\n\n");
        ASSERT_NE(cut, std::string::npos);
        std::string branch = b.context.substr(cut + 2);
        for (const auto& j : joins) {
            // same branch twice, and this branch plus every other branch
            std::vector<std::string> extras{branch};
            for (const auto& [tactic, text] : t.branches) {
                std::string other = text;
                auto p = other.find("<TARGET IP>");
                if (p != std::string::npos) other.replace(p, 11, "172.16.2.3");
                if (other != branch) extras.push_back(other);
            }
            for (const auto& extra : extras) {
                PromptBundle m = b;
                m.context += j + extra;
                m = recompose(m);
                auto v = validate_prompt(m, g);
                ++mutants;
                EXPECT_FALSE(v.accepted);
                EXPECT_EQ(v.reason, "multiple <tactic_branch>");
                PromptBundle front = b;
                front.context = extra + j + b.context;
                EXPECT_FALSE(validate_prompt(recompose(front), g).accepted);
            }
        }
    }
    EXPECT_GT(mutants, 100u);
}

TEST(Grammar, StageMismatchAndAlteredBranchRejected) {
    auto g = PromptGrammar::builtin();
    auto b = compose_execution_prompt(new_campaign(CampaignConfig{}));
    PromptBundle wrong_stage = b;
    wrong_stage.stage = PromptStage::Translate;
    EXPECT_FALSE(validate_prompt(wrong_stage, g).accepted);

    PromptBundle altered = b;
    altered.context.replace(altered.context.find("Perform reconnaissance"), 7, "Execute");
    EXPECT_FALSE(validate_prompt(recompose(altered), g).accepted);

    PromptBundle inconsistent = b;
    inconsistent.setup = "something else";
    EXPECT_FALSE(validate_prompt(inconsistent, g).accepted);
}

TEST(Grammar, UserTemplatesExtendTheGrammar) {
    auto t = builtin_templates();
    t.branches[Tactic::Exploit] = "Perform exploitation: Output one metasploit module and its options.";
    auto g = PromptGrammar::builtin(t);
    PromptEngine engine(t);
    auto s = new_campaign(CampaignConfig{});
    s = record_step(s, step(0, "nmap 172.16.2.3", "21/tcp open ftp"));
    s.tactic = Tactic::Exploit;
    EXPECT_TRUE(validate_prompt(engine.compose_execution(s), g).accepted);
    EXPECT_FALSE(validate_prompt(PromptEngine().compose_execution(s), g).accepted);
}
