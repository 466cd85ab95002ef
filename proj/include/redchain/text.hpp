#pragma once

// Small string helpers shared across modules.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace redchain::text {

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b) noexcept;
bool icontains(std::string_view haystack, std::string_view needle);
bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept;

/// Split on '\n', dropping a trailing '\r' from each line.
std::vector<std::string_view> split_lines(std::string_view s);
/// Split on runs of whitespace.
std::vector<std::string_view> split_words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of maximal non-whitespace runs.
std::size_t count_words(std::string_view s) noexcept;

/// Collapse whitespace runs to one space and trim.
std::string collapse_spaces(std::string_view s);

/// Text safe to embed in a prompt section: CRLF normalised, trailing whitespace
/// stripped per line, blank lines removed (blank lines separate prompt sections).
std::string sanitize_block(std::string_view s);
/// Single-line rendering: every whitespace run (including newlines) becomes one space.
std::string sanitize_line(std::string_view s);

/// First `n` words of `s`, joined by single spaces.
std::string first_words(std::string_view s, std::size_t n);
/// Last `n` words of `s`, joined by single spaces.
std::string last_words(std::string_view s, std::size_t n);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace redchain::text
