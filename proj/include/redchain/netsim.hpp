#pragma once

// Simulated cyber range. A NetworkModel is declarative scenario data; the
// emulators below (scan tool, exploit console, remote shell) are pure
// functions of (model, session state, command). Schema: docs/scenario-schema.md.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "redchain/domain.hpp"

namespace redchain {

enum class ExploitEffect { RootShell, UserShell, CredentialLeak, None };

std::string_view to_string(ExploitEffect effect);
std::optional<ExploitEffect> parse_exploit_effect(std::string_view text);

struct Service {
    int port = 0;
    std::string protocol = "tcp";
    std::string name;     // nmap service column: ftp, ssh, netbios-ssn, ...
    std::string product;  // vsftpd
    std::string version;  // 2.3.4
    std::vector<std::string> vulnerabilities;

    bool operator==(const Service&) const = default;
};

struct SimFile {
    std::string path;
    std::string content;
    bool root_only = false;

    bool operator==(const SimFile&) const = default;
};

struct Host {
    std::string name;
    std::string ip;
    std::string mac;
    std::string os = "Linux";
    std::vector<Service> services;
    std::vector<SimFile> files;

    const Service* service_on(int port) const;
    const SimFile* file(std::string_view path) const;
    bool operator==(const Host&) const = default;
};

struct ExploitEntry {
    std::string module;   // full path, e.g. exploit/unix/ftp/vsftpd_234_backdoor
    std::string product;  // predicate: product, case-insensitive
    std::string version;  // predicate: exact, or prefix when ending in '*'
    int default_port = 0;
    std::vector<std::string> payloads;
    ExploitEffect effect = ExploitEffect::None;
    std::string vulnerability;  // may be empty
    std::string user = "root";  // shell user for UserShell
    std::string credential;     // leaked text for CredentialLeak

    bool matches(const Service& service) const;
    bool is_auxiliary() const;
    bool operator==(const ExploitEntry&) const = default;
};

struct ExfilListener {
    std::string ip;
    int port = 0;
    std::string protocol;  // informational

    bool operator==(const ExfilListener&) const = default;
};

struct Vulnerability {
    std::string id;
    std::string description;

    bool operator==(const Vulnerability&) const = default;
};

struct NetworkModel {
    std::string name;  // report label, e.g. "vsftpd 2.3.4"
    std::string description;
    std::vector<Vulnerability> vulnerabilities;
    std::vector<Host> hosts;
    std::vector<ExploitEntry> exploits;
    std::vector<ExfilListener> exfil_listeners;
    /// Vulnerability ids no exploit entry references (filled by validation).
    std::vector<std::string> orphan_vulnerabilities;

    const Host* host_by_ip(std::string_view ip) const;
    const Host* host_by_name_or_ip(std::string_view target) const;
    const ExploitEntry* exploit(std::string_view module) const;
    bool listener(std::string_view ip, int port) const;
    bool operator==(const NetworkModel&) const = default;
};

/// Checks the model invariants and fills orphan_vulnerabilities. Throws LoadError.
void validate_network(NetworkModel& model, const std::string& source = "scenario");

NetworkModel parse_network(std::string_view json_text, const std::string& source);
/// A file path, or "builtin:NAME".
NetworkModel load_network(const std::string& spec);
NetworkModel load_network(const std::filesystem::path& path);
std::string network_to_json(const NetworkModel& model);

/// metasploitable-like, single-service:<svc>, no-ports
NetworkModel builtin_network(std::string_view name);
std::vector<std::string> builtin_network_names();
/// Keys accepted by single-service:<key>, in evaluation-report order.
std::vector<std::string> single_service_keys();

// ---- session state -------------------------------------------------------

enum class ConsoleMode { Local, Console, Shell };

struct SimSession {
    int id = 0;
    std::string host_ip;
    std::string privilege;  // "root" or "user"
    std::string user;
    std::string cwd = "/";
    std::string kind = "shell";  // shell | meterpreter
    bool open = true;

    bool operator==(const SimSession&) const = default;
};

struct SessionState {
    std::map<int, SimSession> sessions;
    int next_session_id = 1;
    ConsoleMode mode = ConsoleMode::Local;
    int active_session = 0;
    std::string module;
    std::map<std::string, std::string> options;  // upper-cased names
    std::map<std::string, std::string> globals;
    /// Files written during the campaign (archives), keyed by host ip then path.
    std::map<std::string, std::map<std::string, std::string>> created;

    bool operator==(const SessionState&) const = default;
};

struct SimEnv {
    std::shared_ptr<const NetworkModel> model;
    std::string agent_ip = "172.16.2.2";
};

/// Result of one command line.
struct SimCommandResult {
    std::string output;
    int exit_status = 0;
    CommandFailure failure = CommandFailure::None;
    std::vector<SessionEvent> events;
};

/// Is this line a recognised scan invocation (nmap ...)?
bool is_scan_command(std::string_view command);

/// Scan report for an nmap-style command line against the model.
std::string sim_scan(const NetworkModel& model, std::string_view command);

/// One command in whatever mode `state` is in. Never throws for command content.
SimCommandResult sim_command(const SimEnv& env, SessionState& state, std::string_view command);

struct ConsoleOutcome {
    std::string output;
    SessionState state;
    std::vector<SimCommandResult> results;
};

/// Pure fold of sim_command over `commands`.
ConsoleOutcome sim_console(const SimEnv& env, SessionState state, const std::vector<std::string>& commands);

/// Read `path` through an open session (privilege rules applied).
SimCommandResult sim_shell_read(const NetworkModel& model, const SimSession& session, std::string_view path,
                                const SessionState* state = nullptr);

}  // namespace redchain
