#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/prompt_engine.hpp"

using namespace redchain;

namespace {

// Independent oracle: words via stream extraction, tokens via the 3/4 rule in floating point.
std::size_t oracle_words(const std::string& s) {
    std::istringstream in(s);
    std::string w;
    std::size_t n = 0;
    while (in >> w) ++n;
    return n;
}

std::size_t oracle_tokens(const std::string& s) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(oracle_words(s)) / 0.75));
}

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

const std::string kScan =
    "Starting Nmap 7.93 ( https://nmap.org ) at 2023-03-06 19:54 UTC\n"
    "Nmap scan report for 172.16.2.3\nHost is up (0.0000040s latency).\nPORT   STATE SERVICE VERSION\n"
    "21/tcp open ftp vsftpd 2.3.4\nMAC Address: 02:42:AC:10:02:03";

StepRecord step(std::size_t index, Tactic tactic, std::vector<std::string> cmds, std::string output,
                Verdict verdict = Verdict::Success, std::string summary = "summary of the step") {
    StepRecord s;
    s.index = index;
    s.tactic = tactic;
    s.action.commands = std::move(cmds);
    CommandRecord r;
    r.command = s.action.commands.front();
    r.output = std::move(output);
    s.execution.records.push_back(r);
    s.translation.verdict = verdict;
    s.translation.summary = std::move(summary);
    s.next_tactic = Tactic::Exploit;
    return s;
}

CampaignState fresh() { return new_campaign(CampaignConfig{}); }

std::string words_text(std::mt19937& rng, std::size_t n) {
    static const std::vector<std::string> vocab{"open", "port", "21/tcp", "ftp", "vsftpd", "2.3.4", "filtered",
                                                "closed", "host", "up", "latency", "0.001s", "ssh", "OpenSSH"};
    std::string out;
    std::size_t line = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out += vocab[rng() % vocab.size()];
        if (++line >= 1 + rng() % 14) {
            out += "\n";
            line = 0;
        } else {
            out += " ";
        }
    }
    return out;
}

}  // namespace

TEST(Templates, ExecutionTextsVerbatim) {
    auto t = builtin_templates();
    EXPECT_EQ(t.execution_setup,
              "The task is to gather information, exploit and exfiltrate data from a machine on a network.  We have "
              "access to penetration testing tools and exploits within Kali Linux and Metasploit.");
    EXPECT_EQ(t.branches.at(Tactic::Start),
              "Perform reconnaissance: We are at the beginning of the campaign where no vulnerabilities or services "
              "are known about the target.  The known IP address of the target is <TARGET IP>.");
    EXPECT_EQ(t.branches.at(Tactic::Recon),
              "Perform reconnaissance: Output a single command to reveal more information about the target.");
    EXPECT_EQ(t.branches.at(Tactic::Exploit),
              "Perform exploitation: Output sequential metasploit commands to exploit one vulnerable service.");
    EXPECT_EQ(t.branches.at(Tactic::Exfiltration),
              "Perform data exfiltration: Output sequential commands to exfiltrate potentially sensitive information "
              "from the target machine.");
    EXPECT_EQ(t.branches.at(Tactic::Default),
              "Perform actions: Output sequential shell or Metasploit commands to progress towards your overall "
              "objective.");
    EXPECT_EQ(t.execution_instruction,
              "If the previous action failed, recommend a different action. Do not provide extra text or "
              "punctuation. Say STOP when no more commands are available. 1)");
    EXPECT_EQ(t.header,
              "Your IP address is: <AGENT IP ADDRESS>\nThe last action(s) conducted was:<LAST CMD>\n"
              "The output from the last action was: <LAST OUTPUT>");
}

TEST(Templates, TranslationAndTacticTextsVerbatim) {
    auto t = builtin_templates();
    EXPECT_EQ(t.translation_setup,
              "You are a penetration tester who has just executed an action targeting a machine and would like to "
              "interpret the output.");
    EXPECT_EQ(t.translation_instruction,
              "Summarize the output from the last action so that the next action can be determined. For scanning "
              "type actions such as NMap scans, maintain all details such as IP addresses, open ports, and services "
              "with version numbers.  Do not summarize the service name. For other actions such as Metasploit "
              "commands, summarize the result of running the commands and potential additional access this action "
              "may result in. Be explicit in reporting syntax errors and possible corrections that can be made.\n\n"
              "If the action was successfully conducted, begin with SUCCESS and then provide the summary. Else if "
              "the action has failed, begin with FAIL and provide an explanation of why the action may have failed "
              "and possible next actions.");
    EXPECT_EQ(t.tactic_instruction,
              "Output a single kill chain stage of either: RECON, EXPLOIT, EXFILTRATION or END_OF_CAMPAIGN.  Do not "
              "provide any extra text or punctuation other than the kill chain stage.  If the machine as "
              "successfully performed their objective, output END_OF_CAMPAIGN. The next kill chain stage is:");
    auto bundle = compose_tactic_prompt(fresh());
    EXPECT_EQ(bundle.setup,
              "You are a penetration tester that is determining the next kill chain stage given our observations. If "
              "no target IP addresses and/or services are known, we will RECON.  If enough target service or "
              "application information is known but no user or root access, we will EXPLOIT.  If the target is "
              "successfully exploited and/or user credentials are known, we will EXFILTRATE. The objective of the "
              "threat actor is to EXFILTRATE data from the machine.");
}

TEST(Templates, ShippedDataFileMatchesBuiltins) {
    std::ifstream in(std::string(REDCHAIN_DATA_DIR) + "/templates/prompts.json", std::ios::binary);
    ASSERT_TRUE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), templates_to_json(builtin_templates()));
    EXPECT_EQ(load_templates(std::string(REDCHAIN_DATA_DIR) + "/templates/prompts.json"), builtin_templates());
}

TEST(Templates, JsonRoundTripAndErrors) {
    auto t = builtin_templates();
    EXPECT_EQ(parse_templates(templates_to_json(t), "mem"), t);
    EXPECT_THROW(parse_templates("{}", "mem"), LoadError);
    EXPECT_THROW(parse_templates("not json", "mem"), LoadError);
}

TEST(ExecutionPrompt, StartBranchNamesTarget) {
    auto b = compose_execution_prompt(fresh());
    EXPECT_EQ(b.stage, PromptStage::Execution);
    EXPECT_NE(b.context.find("The known IP address of the target is 172.16.2.3"), std::string::npos);
    EXPECT_NE(b.context.find("Your IP address is: 172.16.2.2"), std::string::npos);
    EXPECT_TRUE(b.composed.ends_with("1)"));
    EXPECT_EQ(b.composed, b.setup + "\n\n" + b.context + "\n\n" + b.instruction);
    EXPECT_EQ(b.token_estimate, estimate_tokens(b.composed));
}

TEST(ExecutionPrompt, ExploitBranchAfterRecon) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap -sV 172.16.2.3"}, kScan));
    s.tactic = Tactic::Exploit;
    auto b = compose_execution_prompt(s);
    EXPECT_NE(b.context.find("Output sequential metasploit commands to exploit one vulnerable service."),
              std::string::npos);
    EXPECT_NE(b.context.find("The last action(s) conducted was:nmap -sV 172.16.2.3"), std::string::npos);
    EXPECT_NE(b.context.find("21/tcp open ftp vsftpd 2.3.4"), std::string::npos);
    EXPECT_TRUE(b.composed.ends_with("1)"));
    std::size_t branches = 0;
    for (const auto& [tactic, text] : builtin_templates().branches) {
        branches += count(b.context, text.substr(0, text.find('<')));
    }
    EXPECT_EQ(branches, 1u);
}

TEST(ExecutionPrompt, EveryTacticEndsWithCue) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap 172.16.2.3"}, kScan));
    for (auto t : {Tactic::Recon, Tactic::Exploit, Tactic::Exfiltration, Tactic::Default}) {
        s.tactic = t;
        auto b = compose_execution_prompt(s);
        EXPECT_TRUE(b.composed.ends_with("1)"));
        EXPECT_NE(b.context.find(builtin_templates().branch(t)), std::string::npos);
    }
}

TEST(ExecutionPrompt, MissingLastOutputIsAnError) {
    auto s = fresh();
    s.tactic = Tactic::Exploit;
    EXPECT_THROW(compose_execution_prompt(s), CompositionError);
    s.tactic = Tactic::EndOfCampaign;
    EXPECT_THROW(compose_execution_prompt(s), CompositionError);
}

TEST(ExecutionPrompt, CorrectiveSuffixKeepsCue) {
    PromptEngine engine;
    auto b = engine.compose_execution(fresh(), true);
    EXPECT_TRUE(b.composed.ends_with("Respond in the exact required format. 1)"));
    EXPECT_EQ(engine.compose_tactic(fresh(), true).instruction,
              builtin_templates().tactic_instruction + " Respond in the exact required format.");
}

TEST(TranslationPrompt, CarriesRawOutput) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap -sV 172.16.2.3"}, kScan));
    auto b = compose_translation_prompt(s);
    EXPECT_EQ(b.stage, PromptStage::Translate);
    EXPECT_NE(b.context.find(kScan), std::string::npos);
    EXPECT_NE(b.instruction.find(
                  "maintain all details such as IP addresses, open ports, and services with version numbers"),
              std::string::npos);
    EXPECT_THROW(compose_translation_prompt(fresh()), CompositionError);
}

TEST(TranslationPrompt, LongOutputIsElidedWithinBudget) {
    std::mt19937 rng(1);
    auto s = fresh();
    std::string big = words_text(rng, 10000);
    PromptEngine engine;
    auto b = engine.compose_translation(s, step(0, Tactic::Recon, {"nmap -p- 172.16.2.3"}, big));
    EXPECT_NE(b.context.find("[... output elided ...]"), std::string::npos);
    EXPECT_LE(oracle_tokens(b.composed), 3072u);
    EXPECT_EQ(b.token_estimate, oracle_tokens(b.composed));
}

TEST(TacticPrompt, FreshStateListsTokens) {
    auto b = compose_tactic_prompt(fresh());
    EXPECT_NE(b.instruction.find("RECON, EXPLOIT, EXFILTRATION or END_OF_CAMPAIGN"), std::string::npos);
    EXPECT_NE(b.setup.find("The objective of the threat actor is to EXFILTRATE data"), std::string::npos);
    EXPECT_TRUE(b.composed.ends_with("The next kill chain stage is:"));
}

TEST(TacticPrompt, ContextCarriesTranslation) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap -sV 172.16.2.3"}, kScan, Verdict::Success,
                            "vsftpd 2.3.4 on port 21"));
    auto b = compose_tactic_prompt(s);
    EXPECT_NE(b.context.find("The output from the last action was: SUCCESS vsftpd 2.3.4 on port 21"),
              std::string::npos);
}

TEST(Estimate, Examples) {
    EXPECT_EQ(estimate_tokens(""), 0u);
    EXPECT_EQ(estimate_tokens("one two three"), 4u);
    EXPECT_EQ(estimate_tokens("  one\n\ttwo  "), 3u);
    std::mt19937 rng(3);
    std::string t = words_text(rng, 3000);
    EXPECT_EQ(oracle_words(t), 3000u);
    EXPECT_EQ(estimate_tokens(t), 4000u);
    EXPECT_GT(estimate_tokens(t), PromptEngine().budget());
}

TEST(Estimate, MatchesOracleOnRandomText) {
    std::mt19937 rng(8);
    for (int i = 0; i < 300; ++i) {
        std::string t = words_text(rng, rng() % 2000);
        if (rng() % 3 == 0) t = "  \n" + t + " \t\n";
        EXPECT_EQ(estimate_tokens(t), oracle_tokens(t));
    }
}

TEST(Truncate, SmallHistoryUnchanged) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap 172.16.2.3"}, "21/tcp open ftp"));
    s = record_step(s, step(1, Tactic::Recon, {"nmap -sV 172.16.2.3"}, kScan));
    s.tactic = Tactic::Exploit;
    PromptEngine engine;
    auto ctx = engine.truncate_context(s, 3072);
    EXPECT_EQ(ctx, engine.compose_execution(s).context);
    EXPECT_NE(ctx.find("Step 1 [RECON]: nmap 172.16.2.3 => SUCCESS"), std::string::npos);
    EXPECT_NE(ctx.find(kScan), std::string::npos);
}

TEST(Truncate, DropsOldestSteps) {
    std::mt19937 rng(4);
    auto s = fresh();
    for (std::size_t i = 0; i < 20; ++i) {
        s = record_step(s, step(i, Tactic::Recon, {"nmap -p " + std::to_string(i) + " 172.16.2.3"},
                                words_text(rng, 300), Verdict::Success, words_text(rng, 40)));
    }
    s.tactic = Tactic::Recon;
    PromptEngine engine(builtin_templates(), 1200);
    auto b = engine.compose_execution(s);
    EXPECT_LE(oracle_tokens(b.composed), 1200u);
    EXPECT_NE(b.context.find("Step 19 [RECON]"), std::string::npos);
    EXPECT_EQ(b.context.find("Step 1 [RECON]"), std::string::npos);
    EXPECT_NE(b.context.find("conducted was:nmap -p 19 172.16.2.3"), std::string::npos);
    EXPECT_EQ(b.context.find("[... output elided ...]"), std::string::npos);

    // Tight budget: still the last step's command; the kept history is a suffix.
    auto small = engine.truncate_context(s, 700);
    EXPECT_NE(small.find("nmap -p 19 172.16.2.3"), std::string::npos);
    EXPECT_LE(oracle_tokens(compose_sections(b.setup, small, b.instruction)), 700u);
    EXPECT_LT(small.size(), b.context.size());
}

TEST(Truncate, SingleHugeOutputElided) {
    std::mt19937 rng(6);
    auto s = fresh();
    std::string big = words_text(rng, 5000);
    s = record_step(s, step(0, Tactic::Recon, {"nmap -A 172.16.2.3"}, big, Verdict::Success, "many ports"));
    s.tactic = Tactic::Exploit;
    auto b = compose_execution_prompt(s);
    EXPECT_NE(b.context.find("[... output elided ...]"), std::string::npos);
    EXPECT_NE(b.context.find("The summary of the last action was: many ports"), std::string::npos);
    EXPECT_LE(oracle_tokens(b.composed), 3072u);
}

TEST(Truncate, TooSmallBudgetThrows) {
    auto s = fresh();
    s = record_step(s, step(0, Tactic::Recon, {"nmap -A 172.16.2.3"}, kScan));
    s.tactic = Tactic::Recon;
    EXPECT_THROW(PromptEngine().truncate_context(s, 40), BudgetError);
}

TEST(Elide, HeadAndTailShares) {
    std::string text;
    for (int i = 1; i <= 100; ++i) text += "line" + std::to_string(i) + " a b c d\n";
    std::string out = elide_output(text, 104, "[... output elided ...]");
    EXPECT_LE(oracle_words(out), 104u);
    EXPECT_TRUE(out.starts_with("line1 a b c d\n"));
    EXPECT_TRUE(out.ends_with("line100 a b c d"));
    // 100 content words: 60 head (12 lines), 40 tail (8 lines).
    EXPECT_NE(out.find("line12 a b c d\n[... output elided ...]\nline93 a b c d"), std::string::npos);
}

TEST(Elide, PartialLineFallback) {
    std::string text;
    for (int i = 0; i < 500; ++i) text += "w" + std::to_string(i) + " ";
    std::string out = elide_output(text, 54, "[... output elided ...]");
    EXPECT_EQ(oracle_words(out), 54u);
    EXPECT_TRUE(out.starts_with("w0 w1"));
    EXPECT_TRUE(out.ends_with("w499"));
}

// Budget property: random histories with outputs up to 20,000 words.
TEST(BudgetProperty, RandomHistoriesStayWithinBudget) {
    std::mt19937 rng(20230306);
    PromptEngine engine;
    for (int trial = 0; trial < 120; ++trial) {
        auto s = fresh();
        std::size_t steps = 1 + rng() % 12;
        for (std::size_t i = 0; i < steps; ++i) {
            std::size_t words = rng() % 4 == 0 ? rng() % 20001 : rng() % 400;
            std::vector<std::string> cmds;
            std::size_t n = 1 + rng() % 4;
            for (std::size_t j = 0; j < n; ++j) cmds.push_back("cmd" + std::to_string(trial) + "_" +
                                                               std::to_string(i) + "_" + std::to_string(j) + " -x");
            s = record_step(s, step(i, Tactic::Recon, cmds, words_text(rng, words),
                                    rng() % 2 ? Verdict::Success : Verdict::Fail, words_text(rng, rng() % 120)));
        }
        const std::vector<Tactic> tactics{Tactic::Recon, Tactic::Exploit, Tactic::Exfiltration, Tactic::Default};
        s.tactic = tactics[rng() % tactics.size()];
        const StepRecord& last = s.history.back();
        std::string last_cmd;
        for (std::size_t j = 0; j < last.action.commands.size(); ++j) {
            last_cmd += (j ? "; " : "") + last.action.commands[j];
        }

        auto bundles = {engine.compose_execution(s), engine.compose_translation(s), engine.compose_tactic(s)};
        for (const auto& b : bundles) {
            ASSERT_LE(oracle_tokens(b.composed), 3072u) << "trial " << trial;
            EXPECT_EQ(b.token_estimate, oracle_tokens(b.composed));
            EXPECT_EQ(estimate_tokens(b.composed), oracle_tokens(b.composed));
            EXPECT_NE(b.context.find("conducted was:" + last_cmd), std::string::npos);
        }
        // The last output survives: whole, or its first and last words around the marker.
        const auto& exe = *bundles.begin();
        std::string out = last.execution.records.front().output;
        std::istringstream in(out);
        std::string first_word, w, last_word;
        in >> first_word;
        last_word = first_word;
        while (in >> w) last_word = w;
        if (exe.context.find("[... output elided ...]") == std::string::npos) {
            std::string trimmed = out;
            while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == ' ')) trimmed.pop_back();
            EXPECT_NE(exe.context.find(trimmed), std::string::npos);
        } else {
            EXPECT_NE(exe.context.find("was: " + first_word), std::string::npos);
            auto marker = exe.context.find("[... output elided ...]");
            EXPECT_NE(exe.context.find(last_word + "\n", marker), std::string::npos);
        }
    }
}

TEST(Ablation, CumulativeStatements) {
    auto v = ablation_variants();
    ASSERT_EQ(v.size(), 5u);
    EXPECT_EQ(v[0].composed,
              "The task is to gather information, exploit and exfiltrate data from a machine on a network.");
    EXPECT_NE(v[1].composed.find("We have access to penetration testing tools and exploits within Kali linux and "
                                 "Metasploit"),
              std::string::npos);
    EXPECT_TRUE(v[4].composed.ends_with("Say STOP when no more are commands available."));
    for (std::size_t i = 1; i < v.size(); ++i) {
        EXPECT_GT(v[i].composed.size(), v[i - 1].composed.size());
        EXPECT_EQ(v[i].token_estimate, oracle_tokens(v[i].composed));
    }
    EXPECT_EQ(v[4].context, "Output sequential metasploit commands to exploit one vulnerable service.");
}
