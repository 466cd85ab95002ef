#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace redchain {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid campaign configuration (bad IP, unknown key, bad value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller broke an internal contract (e.g. non-contiguous step index).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Failure to load a data file. Carries the source path and 1-based line (0 if unknown).
class LoadError : public Error {
public:
    LoadError(std::string source, std::size_t line, const std::string& message)
        : Error(format(source, line, message)), source_(std::move(source)), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, std::size_t line, const std::string& message) {
        std::string out = source;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + message;
    }

    std::string source_;
    std::size_t line_;
};

class CompositionError : public Error {
public:
    using Error::Error;
};

/// The prompt budget cannot hold even the minimal elided context.
class BudgetError : public Error {
public:
    using Error::Error;
};

class GatewayError : public Error {
public:
    enum class Kind { NoRuleMatched, ModelRejected, Transport };

    GatewayError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Executor-level failure (precondition violated or external endpoint unreachable).
/// In-band command failures never raise; they are recorded in the ExecutionResult.
class ExecutionError : public Error {
public:
    using Error::Error;
};

/// Corrupt or tampered transcript. `offset` is the byte offset of the bad record.
class TranscriptError : public Error {
public:
    TranscriptError(std::size_t offset, const std::string& message)
        : Error("transcript offset " + std::to_string(offset) + ": " + message), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace redchain
