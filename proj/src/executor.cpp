#include "redchain/executor.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "redchain/error.hpp"

namespace redchain {

namespace {

using Clock = std::chrono::steady_clock;

void require_commands(const ActionBlock& block) {
    if (block.commands.empty()) throw ExecutionError("nothing to execute: the action block has no commands");
}

CommandRecord not_run(const std::string& command) {
    CommandRecord r;
    r.command = command;
    r.not_run = true;
    r.exit_status = -1;
    return r;
}

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

// Reads protocol lines and payloads from a socket against a deadline.
class Reader {
public:
    explicit Reader(int fd) : fd_(fd) {}

    enum class Status { Ok, Timeout, Closed };

    Status line(std::string& out, Clock::time_point deadline) {
        while (true) {
            auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                out = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                return Status::Ok;
            }
            if (auto s = fill(deadline); s != Status::Ok) return s;
        }
    }

    Status bytes(std::size_t n, std::string& out, Clock::time_point deadline) {
        while (buf_.size() < n) {
            if (auto s = fill(deadline); s != Status::Ok) return s;
        }
        out = buf_.substr(0, n);
        buf_.erase(0, n);
        return Status::Ok;
    }

private:
    Status fill(Clock::time_point deadline) {
        pollfd p{fd_, POLLIN, 0};
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc == 0) return Status::Timeout;
        if (rc < 0) return errno == EINTR ? Status::Ok : Status::Closed;
        char chunk[8192];
        ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n <= 0) return Status::Closed;
        buf_.append(chunk, static_cast<std::size_t>(n));
        return Status::Ok;
    }

    int fd_;
    std::string buf_;
};

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

std::string cap_output(std::string text, std::size_t head, std::size_t tail) {
    if (text.size() <= head + tail) return text;
    std::string out = text.substr(0, head);
    out += "\n";
    out += kOutputCapMarker;
    out += "\n";
    out += text.substr(text.size() - tail);
    return out;
}

// ---- sim -------------------------------------------------------------------

SimExecutor::SimExecutor(SimEnv env, SessionState initial) : env_(std::move(env)), state_(std::move(initial)) {
    if (!env_.model) throw ExecutionError("simulator executor needs a network model");
}

ExecutionResult SimExecutor::execute(const ActionBlock& block, const std::atomic<bool>* cancel) {
    require_commands(block);
    ExecutionResult result;
    for (const auto& command : block.commands) {
        if (cancel && cancel->load()) {
            result.records.push_back(not_run(command));
            continue;
        }
        SimCommandResult r = is_scan_command(command) && state_.mode != ConsoleMode::Shell
                                 ? SimCommandResult{sim_scan(*env_.model, command), 0, CommandFailure::None, {}}
                                 : sim_command(env_, state_, command);
        CommandRecord rec;
        rec.command = command;
        rec.exit_status = r.exit_status;
        rec.output = std::move(r.output);
        rec.failure = r.failure;
        rec.timed_out = r.failure == CommandFailure::Timeout;
        result.records.push_back(std::move(rec));
        for (auto& e : r.events) result.session_events.push_back(std::move(e));
        if (result.records.back().timed_out) {
            // the rest of the block would have waited on the hung command
            for (std::size_t i = result.records.size(); i < block.commands.size(); ++i) {
                result.records.push_back(not_run(block.commands[i]));
            }
            break;
        }
    }
    return result;
}

std::string SimExecutor::describe() const { return "sim:" + env_.model->name; }

// ---- external --------------------------------------------------------------

ExternalExecutor::ExternalExecutor(ExternalEndpoint endpoint) : ep_(std::move(endpoint)) {}

ExternalExecutor::~ExternalExecutor() { disconnect(); }

std::string ExternalExecutor::describe() const { return "external:" + ep_.host + ":" + std::to_string(ep_.port); }

void ExternalExecutor::disconnect() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void ExternalExecutor::connect() {
    if (fd_ >= 0) return;
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string port = std::to_string(ep_.port);
    if (int rc = ::getaddrinfo(ep_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
        throw ExecutionError("external endpoint " + describe() + ": " + gai_strerror(rc));
    }
    std::string last = "no address";
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) continue;
        int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            pollfd p{fd, POLLOUT, 0};
            rc = ::poll(&p, 1, static_cast<int>(ep_.connect_timeout.count()));
            int err = 0;
            socklen_t len = sizeof err;
            if (rc == 1 && ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0) {
                rc = 0;
            } else {
                last = rc == 0 ? "connect timed out" : std::strerror(err ? err : errno);
                rc = -1;
            }
        } else if (rc < 0) {
            last = std::strerror(errno);
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw ExecutionError("external endpoint " + describe() + " unreachable: " + last);

    Reader rd(fd_);
    auto deadline = Clock::now() + ep_.connect_timeout;
    std::string line;
    if (rd.line(line, deadline) != Reader::Status::Ok || !line.starts_with("READY ")) {
        disconnect();
        throw ExecutionError("external endpoint " + describe() + " did not greet");
    }
    if (!send_all(fd_, "AUTH " + ep_.token + "\n") || rd.line(line, deadline) != Reader::Status::Ok || line != "OK") {
        disconnect();
        throw ExecutionError("external endpoint " + describe() + " rejected authentication");
    }
}

ExecutionResult ExternalExecutor::execute(const ActionBlock& block, const std::atomic<bool>* cancel) {
    require_commands(block);
    connect();
    ExecutionResult result;
    bool stop = false;
    for (const auto& command : block.commands) {
        if (stop || (cancel && cancel->load())) {
            result.records.push_back(not_run(command));
            continue;
        }
        if (command.find('\n') != std::string::npos) throw ExecutionError("command contains a newline");
        CommandRecord rec;
        rec.command = command;
        auto started = Clock::now();
        auto deadline = started + ep_.command_timeout;
        if (!send_all(fd_, "EXEC " + command + "\n")) {
            disconnect();
            throw ExecutionError("external endpoint " + describe() + " closed the connection");
        }
        // a fresh reader per command is fine: the server never sends ahead
        Reader rd(fd_);
        std::string output;
        std::string line;
        while (true) {
            auto s = rd.line(line, deadline);
            if (s == Reader::Status::Timeout) {
                rec.timed_out = true;
                rec.exit_status = 124;
                rec.failure = CommandFailure::Timeout;
                break;
            }
            if (s == Reader::Status::Closed) {
                disconnect();
                throw ExecutionError("external endpoint " + describe() + " closed the connection");
            }
            if (line.starts_with("OUT ")) {
                std::size_t n = std::strtoull(line.c_str() + 4, nullptr, 10);
                std::string chunk;
                auto bs = rd.bytes(n, chunk, deadline);
                if (bs == Reader::Status::Timeout) {
                    rec.timed_out = true;
                    rec.exit_status = 124;
                    rec.failure = CommandFailure::Timeout;
                    break;
                }
                if (bs == Reader::Status::Closed) {
                    disconnect();
                    throw ExecutionError("external endpoint " + describe() + " closed the connection");
                }
                output += chunk;
                // hold at most head + tail (+ slack) in memory
                if (output.size() > 2 * (ep_.head_cap + ep_.tail_cap)) output = cap_output(output, ep_.head_cap, ep_.tail_cap);
            } else if (line.starts_with("EXIT ")) {
                rec.exit_status = std::atoi(line.c_str() + 5);
                if (rec.exit_status == 127) rec.failure = CommandFailure::UnknownCommand;
                else if (rec.exit_status != 0) rec.failure = CommandFailure::Runtime;
                break;
            } else {
                disconnect();
                throw ExecutionError("external endpoint " + describe() + " sent a malformed line");
            }
        }
        rec.output = cap_output(std::move(output), ep_.head_cap, ep_.tail_cap);
        rec.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
        if (rec.timed_out) {
            disconnect();  // the endpoint is still busy with this command
            stop = true;
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

std::unique_ptr<Executor> make_executor(const CampaignConfig& config, std::shared_ptr<const NetworkModel> model) {
    if (config.executor == "sim") return std::make_unique<SimExecutor>(SimEnv{std::move(model), config.agent_ip});
    if (config.executor != "external") throw ConfigError("executor: unknown kind '" + config.executor + "'");
    if (!config.external_acknowledged) {
        throw ConfigError("executor: external requires external_acknowledged = true");
    }
    if (config.external_port <= 0) throw ConfigError("external_port: required for the external executor");
    ExternalEndpoint ep;
    ep.host = config.external_host;
    ep.port = config.external_port;
    ep.command_timeout = std::chrono::milliseconds(config.command_timeout_ms);
    if (!config.external_token_env.empty()) {
        const char* tok = std::getenv(config.external_token_env.c_str());
        if (!tok) throw ConfigError("external_token_env: variable " + config.external_token_env + " is not set");
        ep.token = tok;
    }
    return std::make_unique<ExternalExecutor>(ep);
}

}  // namespace redchain
