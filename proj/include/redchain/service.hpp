#pragma once

// HTTP service for operator consoles: create and watch campaigns, answer
// assisted-mode approvals, stop campaigns, browse saved transcripts.
// Endpoint reference: docs/service-api.md.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redchain/controller.hpp"

namespace redchain {

struct ServiceOptions {
    std::filesystem::path base_dir;        // relative paths in request configs resolve here
    std::filesystem::path config_dir;      // "config_file" names are looked up here
    std::filesystem::path transcript_dir;  // finished transcripts are written here (empty: not saved)
    std::filesystem::path static_dir;      // optional console assets mounted at /
    std::string token;                     // empty: no auth
    std::chrono::milliseconds approval_timeout{std::chrono::minutes(10)};
    bool wall_clock = false;               // logical clock by default, so transcripts are reproducible
};

/// Outcome of submitting a decision, mapped to an HTTP status by the server.
struct DecisionResult {
    int status = 200;       // 200, 400, 404, 409, 422
    nlohmann::json body;
};

/// The campaign registry without the HTTP layer; the server is a thin shell over it.
class CampaignHub {
public:
    explicit CampaignHub(ServiceOptions options);
    ~CampaignHub();
    CampaignHub(const CampaignHub&) = delete;
    CampaignHub& operator=(const CampaignHub&) = delete;

    /// Starts a campaign thread. Throws ConfigError / LoadError on bad input.
    std::string create(const nlohmann::json& request);
    std::optional<nlohmann::json> state(const std::string& id) const;
    nlohmann::json list() const;
    std::optional<std::string> transcript_text(const std::string& id) const;

    /// Events with seq >= from, waiting up to `wait` for at least one when none
    /// are available yet. `finished` is set once the campaign has stopped and
    /// every event has been returned. nullopt for an unknown campaign.
    std::optional<std::vector<StepEvent>> events_since(const std::string& id, std::uint64_t from,
                                                       std::chrono::milliseconds wait, bool& finished) const;

    DecisionResult decide(const std::string& id, const nlohmann::json& decision);
    bool stop(const std::string& id);
    /// Blocks until the campaign has finished. False for an unknown id or on timeout.
    bool wait(const std::string& id, std::chrono::milliseconds timeout) const;
    void shutdown();

    std::vector<std::string> saved_transcripts() const;
    std::optional<std::string> saved_transcript(const std::string& name) const;

    const ServiceOptions& options() const noexcept { return options_; }

private:
    struct Live;
    std::shared_ptr<Live> find(const std::string& id) const;

    ServiceOptions options_;
    struct Registry;
    std::unique_ptr<Registry> reg_;
};

class ApiServer {
public:
    explicit ApiServer(ServiceOptions options);
    ~ApiServer();

    /// Binds; port 0 picks a free port. Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(). Call after bind().
    bool listen();
    void stop();

    CampaignHub& hub() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace redchain
