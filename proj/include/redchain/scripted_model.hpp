#pragma once

// Deterministic stand-in for the live model. A script is an ordered list of
// rules matched against the composed prompt text; first match wins.
// File format: docs/script-format.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "redchain/gateway.hpp"

namespace redchain {

enum class StageMatcher { Any, Execution, Translation, Tactic };

struct WeightedResponse {
    double weight = 1.0;
    std::string text;

    bool operator==(const WeightedResponse&) const = default;
};

struct ScriptRule {
    std::string name;
    std::size_t line = 0;
    StageMatcher stage = StageMatcher::Any;
    std::vector<std::string> contains;   // all must occur
    std::vector<std::string> excludes;   // none may occur
    std::vector<std::string> patterns;   // glob, matched anywhere in the prompt
    std::optional<std::string> response;
    std::vector<WeightedResponse> options;
    std::vector<std::string> sequence;

    bool matches(const PromptBundle& bundle) const;
    bool operator==(const ScriptRule&) const = default;
};

struct ScenarioScript {
    std::uint64_t seed = 0;
    std::vector<ScriptRule> rules;

    bool operator==(const ScenarioScript&) const = default;
};

ScenarioScript parse_script(std::string_view text, const std::string& source);
ScenarioScript load_script(const std::filesystem::path& path);

/// '*' matches any run, '?' any one byte; the pattern may occur anywhere.
bool glob_search(std::string_view pattern, std::string_view text);

/// Index drawn from `options` by one 53-bit uniform from `rng`.
std::size_t weighted_pick(std::mt19937_64& rng, const std::vector<WeightedResponse>& options);

class ScriptedModel : public ModelGateway {
public:
    explicit ScriptedModel(ScenarioScript script, std::optional<std::uint64_t> seed = std::nullopt);

    std::string complete(const PromptBundle& bundle, const CompletionParams& params) override;

    /// Rule names in the order they answered, for diagnostics.
    std::vector<std::string> answered() const;
    const ScenarioScript& script() const noexcept { return script_; }

private:
    ScenarioScript script_;
    mutable std::mutex mu_;
    std::mt19937_64 rng_;
    std::map<std::string, std::size_t> positions_;
    std::vector<std::string> answered_;
};

/// ${LAST_OUTPUT} / ${LAST_CMD} expansion against the prompt's CONTEXT header.
std::string expand_response(std::string_view response, const PromptBundle& bundle);

}  // namespace redchain
