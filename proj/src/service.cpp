#include "redchain/service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "redchain/campaign.hpp"
#include "redchain/error.hpp"
#include "redchain/json_io.hpp"
#include "redchain/parsers.hpp"

namespace redchain {

using nlohmann::json;
using namespace std::chrono_literals;

struct CampaignHub::Live {
    std::string id;
    CampaignSetup setup;
    std::unique_ptr<Clock> clock;

    mutable std::mutex mu;
    mutable std::condition_variable cv;
    std::vector<StepEvent> events;
    std::optional<std::pair<std::size_t, ActionBlock>> pending;
    std::optional<ApprovalDecision> mailbox;
    std::atomic<bool> cancel{false};
    bool finished = false;
    std::optional<CampaignState> final_state;
    std::string error;

    // running summary, folded from events
    Tactic tactic = Tactic::Start;
    std::optional<PromptStage> stage;
    std::size_t steps = 0;
    std::size_t total_actions = 0;

    std::thread thread;
};

struct CampaignHub::Registry {
    mutable std::mutex mu;
    std::map<std::string, std::shared_ptr<Live>> by_id;
    std::vector<std::string> order;
    std::atomic<bool> closing{false};
};

namespace {

// One consumer: the campaign thread. Decisions are dropped into the mailbox by
// CampaignHub::decide; pending is set by the event sink so it becomes visible
// together with the ActionPendingApproval event.
template <typename L>
class MailboxGate : public ApprovalGate {
public:
    MailboxGate(L& live, std::chrono::milliseconds timeout) : live_(live), timeout_(timeout) {}

    ApprovalDecision decide(std::size_t, const ActionBlock&) override {
        std::unique_lock lock(live_.mu);
        bool got = live_.cv.wait_for(lock, timeout_, [&] { return live_.mailbox.has_value() || live_.cancel.load(); });
        live_.pending.reset();
        if (got && live_.mailbox) {
            ApprovalDecision d = std::move(*live_.mailbox);
            live_.mailbox.reset();
            return d;
        }
        ApprovalDecision d;
        d.verdict = ApprovalVerdict::Deny;
        d.note = live_.cancel ? "campaign stopped while awaiting approval" : "approval timeout";
        return d;
    }

private:
    L& live_;
    std::chrono::milliseconds timeout_;
};

std::string value_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config: values must be strings, numbers or booleans");
}

json placeholder_json(const std::vector<PlaceholderSpan>& spans) {
    json out = json::array();
    for (const auto& s : spans) {
        out.push_back({{"command_index", s.command_index}, {"offset", s.offset}, {"length", s.length}, {"text", s.text}});
    }
    return out;
}

DecisionResult fail(int status, const std::string& kind, const std::string& message, json extra = json::object()) {
    extra["error"] = kind;
    extra["message"] = message;
    return {status, std::move(extra)};
}

bool safe_name(const std::string& name) {
    return !name.empty() && name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
           name != "." && name != "..";
}

}  // namespace

CampaignHub::CampaignHub(ServiceOptions options) : options_(std::move(options)), reg_(std::make_unique<Registry>()) {}

CampaignHub::~CampaignHub() { shutdown(); }

std::shared_ptr<CampaignHub::Live> CampaignHub::find(const std::string& id) const {
    std::lock_guard lock(reg_->mu);
    auto it = reg_->by_id.find(id);
    return it == reg_->by_id.end() ? nullptr : it->second;
}

std::string CampaignHub::create(const json& request) {
    if (reg_->closing) throw ConsistencyError("service is shutting down");
    if (!request.is_object()) throw ConfigError("request: expected a JSON object");
    CampaignConfig config;
    if (request.contains("config_file")) {
        auto name = request.at("config_file").get<std::string>();
        if (!safe_name(name)) throw ConfigError("config_file: must be a plain file name");
        config = load_config(options_.config_dir / name);
    }
    if (request.contains("config")) {
        const auto& over = request.at("config");
        if (!over.is_object()) throw ConfigError("config: expected an object of key/value settings");
        for (const auto& [key, value] : over.items()) {
            apply_config_value(config, key, value_text(value), options_.base_dir);
        }
    }

    auto live = std::make_shared<Live>();
    live->setup = prepare_campaign(config);
    if (options_.wall_clock) {
        live->clock = std::make_unique<WallClock>();
    } else {
        live->clock = std::make_unique<LogicalClock>();
    }

    {
        std::lock_guard lock(reg_->mu);
        std::string base = request.contains("id") ? request.at("id").get<std::string>() : derive_campaign_id(config);
        if (!safe_name(base)) throw ConfigError("id: must be a plain name");
        std::string id = base;
        for (int n = 2; reg_->by_id.count(id); ++n) id = base + "-" + std::to_string(n);
        live->id = id;
        reg_->by_id[id] = live;
        reg_->order.push_back(id);
    }

    Live* l = live.get();
    l->thread = std::thread([this, l] {
        MailboxGate<Live> gate(*l, options_.approval_timeout);
        RunOptions run;
        run.gate = &gate;
        run.cancel = &l->cancel;
        run.clock = l->clock.get();
        run.campaign_id = l->id;
        run.sink = [l](const StepEvent& e) {
            std::lock_guard lock(l->mu);
            if (e.kind == StepEventKind::ActionPendingApproval) {
                l->pending = std::make_pair(e.step, e.payload.at("action").get<ActionBlock>());
            }
            if (e.stage) l->stage = e.stage;
            if (e.kind == StepEventKind::StepRecorded) {
                ++l->steps;
                l->total_actions += e.payload.at("record").at("action").at("commands").size();
            }
            if (e.kind == StepEventKind::TacticSelected) {
                if (auto t = parse_tactic_name(e.payload.value("tactic", ""))) l->tactic = *t;
            }
            l->events.push_back(e);
            l->cv.notify_all();
        };
        std::optional<Transcript> transcript;
        try {
            auto out = run_prepared(l->setup, run);
            std::lock_guard lock(l->mu);
            l->final_state = out.state;
            l->tactic = out.state.tactic;
            l->total_actions = out.state.total_actions;
            transcript = std::move(out.transcript);
        } catch (const std::exception& e) {
            std::lock_guard lock(l->mu);
            l->error = e.what();
        }
        if (transcript && !options_.transcript_dir.empty()) {
            try {
                std::filesystem::create_directories(options_.transcript_dir);
                save_transcript(options_.transcript_dir / (l->id + ".jsonl"), *transcript);
            } catch (const std::exception& e) {
                std::lock_guard lock(l->mu);
                l->error = e.what();
            }
        }
        std::lock_guard lock(l->mu);
        l->finished = true;
        l->cv.notify_all();
    });
    return l->id;
}

std::optional<json> CampaignHub::state(const std::string& id) const {
    auto l = find(id);
    if (!l) return std::nullopt;
    std::lock_guard lock(l->mu);
    json j{{"id", l->id},
           {"mode", to_string(l->setup.config.mode)},
           {"scenario", l->setup.config.scenario},
           {"tactic", to_string(l->tactic)},
           {"stage", l->stage ? json(to_string(*l->stage)) : json(nullptr)},
           {"steps", l->steps},
           {"total_actions", l->total_actions},
           {"events", l->events.size()}};
    std::string status = l->finished ? "stopped" : (l->pending ? "awaiting_approval" : "running");
    j["status"] = status;
    j["pending"] = l->pending ? json{{"step", l->pending->first}, {"action", l->pending->second}} : json(nullptr);
    j["stop_reason"] = l->final_state && l->final_state->terminated ? json(to_string(*l->final_state->terminated))
                                                                     : json(nullptr);
    j["error"] = l->error.empty() ? json(nullptr) : json(l->error);
    return j;
}

json CampaignHub::list() const {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(reg_->mu);
        ids = reg_->order;
    }
    json out = json::array();
    for (const auto& id : ids) {
        if (auto s = state(id)) out.push_back(*s);
    }
    return out;
}

std::optional<std::string> CampaignHub::transcript_text(const std::string& id) const {
    auto l = find(id);
    if (!l) return std::nullopt;
    std::lock_guard lock(l->mu);
    Transcript t;
    t.campaign_id = l->id;
    t.config = config_snapshot(l->setup.config);
    t.events = l->events;
    if (l->finished && l->final_state) t.stop_reason = l->final_state->terminated;
    return serialize_transcript(t);
}

std::optional<std::vector<StepEvent>> CampaignHub::events_since(const std::string& id, std::uint64_t from,
                                                                std::chrono::milliseconds wait,
                                                                bool& finished) const {
    auto l = find(id);
    if (!l) return std::nullopt;
    std::unique_lock lock(l->mu);
    l->cv.wait_for(lock, wait, [&] { return l->events.size() > from || l->finished || reg_->closing.load(); });
    std::vector<StepEvent> out;
    for (std::size_t i = from; i < l->events.size(); ++i) out.push_back(l->events[i]);
    finished = l->finished;
    return out;
}

DecisionResult CampaignHub::decide(const std::string& id, const json& body) {
    auto l = find(id);
    if (!l) return fail(404, "not_found", "no campaign " + id);
    if (!body.is_object()) return fail(400, "bad_request", "expected a JSON object");

    ApprovalDecision d;
    try {
        auto verdict = parse_approval_verdict(body.value("verdict", ""));
        if (!verdict) return fail(400, "bad_request", "verdict must be Approve, Deny, Edit or TakeOver");
        d.verdict = *verdict;
        d.note = body.value("note", "");

        if (d.verdict == ApprovalVerdict::Edit) {
            if (body.contains("commands")) {
                d.replacement.commands = body.at("commands").get<std::vector<std::string>>();
            } else if (body.contains("text")) {
                auto parsed = parse_enumerated_commands(body.at("text").get<std::string>());
                if (!parsed) {
                    return fail(422, "unparseable", parsed.reason(), {{"excerpt", parsed.excerpt()}});
                }
                d.replacement = parsed.value();
                d.replacement.stop_requested = false;
            }
            if (d.replacement.commands.empty()) return fail(422, "empty", "replacement action has no commands");
            for (const auto& c : d.replacement.commands) {
                if (c.find_first_not_of(" \t") == std::string::npos) {
                    return fail(422, "empty", "replacement contains a blank command");
                }
            }
            if (auto spans = detect_placeholders(d.replacement); !spans.empty()) {
                return fail(422, "placeholder", "replacement contains unresolved placeholder " + spans.front().text,
                            {{"placeholders", placeholder_json(spans)}});
            }
        } else if (d.verdict == ApprovalVerdict::TakeOver) {
            for (const auto& m : body.value("manual", json::array())) {
                CommandRecord r;
                r.command = m.at("command").get<std::string>();
                r.output = m.value("output", "");
                r.exit_status = m.value("exit_status", 0);
                if (r.command.empty()) return fail(422, "empty", "manual command is empty");
                d.manual.push_back(std::move(r));
            }
            if (d.manual.empty()) return fail(422, "empty", "take-over needs at least one manual command");
        }
    } catch (const json::exception& e) {
        return fail(400, "bad_request", e.what());
    }

    std::lock_guard lock(l->mu);
    if (l->finished) return fail(409, "conflict", "campaign has stopped");
    if (!l->pending || l->mailbox) return fail(409, "conflict", "no action is awaiting approval");
    if (body.contains("step") && body.at("step").get<std::size_t>() != l->pending->first) {
        return fail(409, "conflict",
                    "step " + body.at("step").dump() + " is not pending (pending: " +
                        std::to_string(l->pending->first) + ")");
    }
    std::size_t step = l->pending->first;
    l->mailbox = std::move(d);
    l->pending.reset();
    l->cv.notify_all();
    return {200, {{"accepted", true}, {"step", step}}};
}

bool CampaignHub::stop(const std::string& id) {
    auto l = find(id);
    if (!l) return false;
    std::lock_guard lock(l->mu);
    l->cancel = true;
    l->cv.notify_all();
    return true;
}

bool CampaignHub::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    auto l = find(id);
    if (!l) return false;
    std::unique_lock lock(l->mu);
    return l->cv.wait_for(lock, timeout, [&] { return l->finished; });
}

void CampaignHub::shutdown() {
    reg_->closing = true;
    std::vector<std::shared_ptr<Live>> all;
    {
        std::lock_guard lock(reg_->mu);
        for (auto& [id, l] : reg_->by_id) all.push_back(l);
    }
    for (auto& l : all) {
        {
            std::lock_guard lock(l->mu);
            l->cancel = true;
            l->cv.notify_all();
        }
        if (l->thread.joinable()) l->thread.join();
    }
}

std::vector<std::string> CampaignHub::saved_transcripts() const {
    std::vector<std::string> out;
    std::error_code ec;
    if (options_.transcript_dir.empty() || !std::filesystem::is_directory(options_.transcript_dir, ec)) return out;
    for (const auto& entry : std::filesystem::directory_iterator(options_.transcript_dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            out.push_back(entry.path().filename().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<std::string> CampaignHub::saved_transcript(const std::string& name) const {
    if (options_.transcript_dir.empty() || !safe_name(name)) return std::nullopt;
    std::ifstream in(options_.transcript_dir / name, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- HTTP -----------------------------------------------------------------

struct ApiServer::Impl {
    explicit Impl(ServiceOptions o) : hub(std::move(o)) {}

    CampaignHub hub;
    httplib::Server svr;
    std::atomic<bool> stopping{false};

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
    }
    static void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& msg) {
        send_json(res, status, {{"error", kind}, {"message", msg}});
    }

    static void send_transcript(const httplib::Request& req, httplib::Response& res, const std::string& text) {
        if (req.get_param_value("format") == "narrative") {
            try {
                res.set_content(render_narrative(parse_transcript(text), req.get_param_value("prompts") != "0"),
                                "text/plain; charset=utf-8");
            } catch (const TranscriptError& e) {
                send_error(res, 422, "corrupt_transcript", e.what());
            }
            return;
        }
        res.set_content(text, "application/x-ndjson");
    }

    void routes() {
        const std::string token = hub.options().token;
        svr.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
            if (token.empty() || req.path == "/healthz") return httplib::Server::HandlerResponse::Unhandled;
            bool api = req.path.rfind("/campaigns", 0) == 0 || req.path.rfind("/transcripts", 0) == 0;
            if (!api) return httplib::Server::HandlerResponse::Unhandled;
            // EventSource cannot set headers, hence the query fallback
            if (req.get_header_value("Authorization") == "Bearer " + token || req.get_param_value("token") == token) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            send_error(res, 401, "unauthorized", "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        });
        svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            } catch (...) {
                send_error(res, 500, "internal", "unknown error");
            }
        });

        svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

        svr.Post("/campaigns", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = req.body.empty() ? json::object() : json::parse(req.body);
            } catch (const json::parse_error& e) {
                return send_error(res, 400, "bad_request", e.what());
            }
            try {
                auto id = hub.create(body);
                send_json(res, 201, *hub.state(id));
            } catch (const ConfigError& e) {
                send_error(res, 400, "config", e.what());
            } catch (const LoadError& e) {
                send_error(res, 400, "load", e.what());
            } catch (const json::exception& e) {
                send_error(res, 400, "bad_request", e.what());
            } catch (const ConsistencyError& e) {
                send_error(res, 503, "unavailable", e.what());
            }
        });

        svr.Get("/campaigns", [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, hub.list()); });

        svr.Get(R"(/campaigns/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = hub.state(req.matches[1]);
            if (!s) return send_error(res, 404, "not_found", "no campaign " + std::string(req.matches[1]));
            send_json(res, 200, *s);
        });

        svr.Get(R"(/campaigns/([^/]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
            auto t = hub.transcript_text(req.matches[1]);
            if (!t) return send_error(res, 404, "not_found", "no campaign " + std::string(req.matches[1]));
            send_transcript(req, res, *t);
        });

        svr.Get(R"(/campaigns/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            std::string id = req.matches[1];
            if (!hub.state(id)) return send_error(res, 404, "not_found", "no campaign " + id);
            std::uint64_t from = 0;
            try {
                if (req.has_header("Last-Event-ID")) {
                    from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
                } else if (req.has_param("from")) {
                    from = std::stoull(req.get_param_value("from"));
                }
            } catch (const std::exception&) {
                return send_error(res, 400, "bad_request", "resume position must be a sequence number");
            }
            auto next = std::make_shared<std::uint64_t>(from);
            auto idle = std::make_shared<int>(0);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, id, next, idle](std::size_t, httplib::DataSink& sink) {
                    if (stopping) return false;
                    bool finished = false;
                    auto evs = hub.events_since(id, *next, 250ms, finished);
                    if (!evs) {
                        sink.done();
                        return true;
                    }
                    for (const auto& e : *evs) {
                        std::string line = serialize_event(e);
                        line.pop_back();
                        std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " +
                                            std::string(to_string(e.kind)) + "\ndata: " + line + "\n\n";
                        if (!sink.write(frame.data(), frame.size())) return false;
                        *next = e.seq + 1;
                    }
                    if (finished) {
                        static const std::string end = "event: end\ndata: {}\n\n";
                        sink.write(end.data(), end.size());
                        sink.done();
                        return true;
                    }
                    if (evs->empty() && ++*idle >= 60) {
                        *idle = 0;
                        static const std::string ping = ": keepalive\n\n";
                        if (!sink.write(ping.data(), ping.size())) return false;
                    }
                    return true;
                });
        });

        svr.Post(R"(/campaigns/([^/]+)/decisions)", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error& e) {
                return send_error(res, 400, "bad_request", e.what());
            }
            auto r = hub.decide(req.matches[1], body);
            send_json(res, r.status, r.body);
        });

        svr.Post(R"(/campaigns/([^/]+)/stop)", [this](const httplib::Request& req, httplib::Response& res) {
            if (!hub.stop(req.matches[1])) {
                return send_error(res, 404, "not_found", "no campaign " + std::string(req.matches[1]));
            }
            send_json(res, 202, {{"stopping", true}});
        });

        svr.Get("/transcripts", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, hub.saved_transcripts());
        });

        svr.Get(R"(/transcripts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto t = hub.saved_transcript(req.matches[1]);
            if (!t) return send_error(res, 404, "not_found", "no transcript " + std::string(req.matches[1]));
            send_transcript(req, res, *t);
        });

        if (!hub.options().static_dir.empty()) svr.set_mount_point("/", hub.options().static_dir.string());
    }
};

ApiServer::ApiServer(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) { impl_->routes(); }

ApiServer::~ApiServer() {
    stop();
    impl_->hub.shutdown();
}

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->svr.bind_to_any_port(host);
    return impl_->svr.bind_to_port(host, port) ? port : -1;
}

bool ApiServer::listen() { return impl_->svr.listen_after_bind(); }

void ApiServer::stop() {
    impl_->stopping = true;
    impl_->svr.stop();
}

CampaignHub& ApiServer::hub() noexcept { return impl_->hub; }

}  // namespace redchain
