#pragma once

// Strict extraction of structured results from model text. Pure functions;
// nothing here interprets command semantics.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redchain/domain.hpp"

namespace redchain {

/// Either a parsed value or a failure reason plus the offending excerpt.
/// A failure never carries a partial value.
template <typename T>
class ParseOutcome {
public:
    static ParseOutcome success(T value) {
        ParseOutcome out;
        out.value_ = std::move(value);
        return out;
    }

    static ParseOutcome failure(std::string reason, std::string excerpt) {
        ParseOutcome out;
        out.reason_ = std::move(reason);
        out.excerpt_ = std::move(excerpt);
        return out;
    }

    bool ok() const noexcept { return value_.has_value(); }
    explicit operator bool() const noexcept { return ok(); }
    const T& value() const { return value_.value(); }
    const std::string& reason() const noexcept { return reason_; }
    const std::string& excerpt() const noexcept { return excerpt_; }

private:
    ParseOutcome() = default;

    std::optional<T> value_;
    std::string reason_;
    std::string excerpt_;
};

struct ParserOptions {
    std::vector<std::string> refusal_markers{"I'm sorry", "I cannot assist", "As an AI language model"};
};

ParseOutcome<ActionBlock> parse_enumerated_commands(std::string_view text, const ParserOptions& options = {});
ParseOutcome<Tactic> parse_tactic(std::string_view text);
ParseOutcome<TranslationReport> parse_translation(std::string_view text);

struct PlaceholderSpan {
    std::size_t command_index = 0;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::string text;

    bool operator==(const PlaceholderSpan&) const = default;
};

/// Angle-bracketed tokens such as <USERNAME> or <attacker IP address>.
std::vector<PlaceholderSpan> detect_placeholders(const ActionBlock& block);

/// "1) cmd\n2) cmd" (plus a STOP line when requested).
std::string render_enumerated(const ActionBlock& block);

}  // namespace redchain
