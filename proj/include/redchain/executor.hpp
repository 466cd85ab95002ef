#pragma once

// Execution contract. The simulator executor is the default; the external
// adapter speaks the line protocol in docs/remote-shell-protocol.md and is
// only ever built from an explicit, acknowledged configuration.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include "redchain/domain.hpp"
#include "redchain/netsim.hpp"

namespace redchain {

class Executor {
public:
    virtual ~Executor() = default;
    /// Runs every command of `block` in order. `cancel` is checked between commands.
    /// Throws ExecutionError for a stop-only block or an unreachable endpoint.
    virtual ExecutionResult execute(const ActionBlock& block, const std::atomic<bool>* cancel = nullptr) = 0;
    virtual std::string describe() const = 0;
};

class SimExecutor : public Executor {
public:
    explicit SimExecutor(SimEnv env, SessionState initial = {});

    ExecutionResult execute(const ActionBlock& block, const std::atomic<bool>* cancel = nullptr) override;
    std::string describe() const override;

    const SessionState& state() const noexcept { return state_; }

private:
    SimEnv env_;
    SessionState state_;
};

struct ExternalEndpoint {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string token;
    std::chrono::milliseconds command_timeout{120000};
    std::chrono::milliseconds connect_timeout{5000};
    std::size_t head_cap = 256 * 1024;
    std::size_t tail_cap = 16 * 1024;
};

class ExternalExecutor : public Executor {
public:
    explicit ExternalExecutor(ExternalEndpoint endpoint);
    ~ExternalExecutor() override;

    ExecutionResult execute(const ActionBlock& block, const std::atomic<bool>* cancel = nullptr) override;
    std::string describe() const override;

private:
    void connect();
    void disconnect();

    ExternalEndpoint ep_;
    int fd_ = -1;
};

inline constexpr std::string_view kOutputCapMarker = "[... output truncated by executor ...]";

/// Keep the first `head` and last `tail` bytes, with a marker line between.
std::string cap_output(std::string text, std::size_t head, std::size_t tail);

/// Sim unless config.executor == "external" and config.external_acknowledged.
/// Throws ConfigError when external is requested without acknowledgment.
std::unique_ptr<Executor> make_executor(const CampaignConfig& config, std::shared_ptr<const NetworkModel> model);

}  // namespace redchain
