#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "redchain/netsim.hpp"
#include "redchain/text.hpp"

namespace redchain {

namespace {

const char* kScanStart = "Starting Nmap 7.93 ( https://nmap.org ) at 2023-03-06 19:54 UTC";
const char* kLatency = "Host is up (0.0000040s latency).";
const char* kSessionStamp = "2023-03-06 19:55:01 +0000";
const char* kUnameAll = "Linux target1 2.6.24-16-server #1 SMP Thu Apr 10 13:58:00 UTC 2008 i686 GNU/Linux";

using Result = SimCommandResult;

Result ok(std::string out) { return Result{std::move(out), 0, CommandFailure::None, {}}; }
Result fail(std::string out, CommandFailure f, int status = 1) { return Result{std::move(out), status, f, {}}; }

// ---- tokenising ------------------------------------------------------------

struct Token {
    std::string text;
    bool op = false;  // | ; && || < > >>
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::string cur;
    bool have = false;
    auto flush = [&] {
        if (have) out.push_back({cur, false});
        cur.clear();
        have = false;
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\'' || c == '"') {
            have = true;
            auto end = s.find(c, i + 1);
            if (end == std::string_view::npos) end = s.size();
            cur.append(s.substr(i + 1, end - i - 1));
            i = end;
        } else if (c == '\\' && i + 1 < s.size()) {
            cur += s[++i];
            have = true;
        } else if (text::is_space(c)) {
            flush();
        } else if (c == '>' && have && (cur == "1" || cur == "2") ) {
            // fd redirections (2>&1, 2>/dev/null) are accepted and ignored
            cur.clear();
            have = false;
            std::size_t j = i + 1;
            if (j < s.size() && s[j] == '&') {
                j += 2;
            } else {
                while (j < s.size() && text::is_space(s[j])) ++j;
                while (j < s.size() && !text::is_space(s[j])) ++j;
            }
            i = j - 1;
        } else if (c == '|' || c == ';' || c == '&' || c == '<' || c == '>') {
            flush();
            std::string op(1, c);
            if (i + 1 < s.size() && (s[i + 1] == c) && c != ';' && c != '<') op += s[++i];
            out.push_back({op, true});
        } else {
            cur += c;
            have = true;
        }
    }
    flush();
    return out;
}

std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> w;
    for (auto& t : lex(s)) w.push_back(t.text);
    return w;
}

std::optional<int> to_int(std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string join_words(const std::vector<std::string>& w, std::size_t from) {
    std::vector<std::string> rest(w.begin() + static_cast<std::ptrdiff_t>(std::min(from, w.size())), w.end());
    return text::join(rest, " ");
}

// ---- scan -----------------------------------------------------------------

std::optional<std::uint32_t> ipv4(std::string_view s) {
    std::uint32_t v = 0;
    int parts = 0;
    std::size_t i = 0;
    while (i <= s.size()) {
        auto dot = s.find('.', i);
        auto part = s.substr(i, dot == std::string_view::npos ? std::string_view::npos : dot - i);
        auto n = to_int(part);
        if (!n || *n < 0 || *n > 255 || part.empty()) return std::nullopt;
        v = (v << 8) | static_cast<std::uint32_t>(*n);
        ++parts;
        if (dot == std::string_view::npos) break;
        i = dot + 1;
    }
    if (parts != 4) return std::nullopt;
    return v;
}

struct TargetSet {
    std::vector<const Host*> hosts;
    std::uint64_t addresses = 0;
    std::vector<std::string> unresolved;
};

void add_target(const NetworkModel& model, std::string_view spec, TargetSet& out) {
    auto slash = spec.find('/');
    if (slash != std::string_view::npos) {
        auto base = ipv4(spec.substr(0, slash));
        auto bits = to_int(spec.substr(slash + 1));
        if (base && bits && *bits >= 0 && *bits <= 32) {
            std::uint32_t mask = *bits == 0 ? 0 : ~std::uint32_t{0} << (32 - *bits);
            out.addresses += std::uint64_t{1} << (32 - *bits);
            for (const auto& h : model.hosts) {
                auto hip = ipv4(h.ip);
                if (hip && (*hip & mask) == (*base & mask)) out.hosts.push_back(&h);
            }
            return;
        }
    }
    auto dash = spec.rfind('-');
    auto last_dot = spec.rfind('.');
    if (dash != std::string_view::npos && last_dot != std::string_view::npos && dash > last_dot) {
        auto lo_ip = ipv4(spec.substr(0, dash));
        auto hi = to_int(spec.substr(dash + 1));
        if (lo_ip && hi && *hi <= 255 && static_cast<std::uint32_t>(*hi) >= (*lo_ip & 0xff)) {
            std::uint32_t lo = *lo_ip & 0xff;
            out.addresses += static_cast<std::uint32_t>(*hi) - lo + 1;
            for (const auto& h : model.hosts) {
                auto hip = ipv4(h.ip);
                if (hip && (*hip & ~0xffu) == (*lo_ip & ~0xffu) && (*hip & 0xff) >= lo &&
                    (*hip & 0xff) <= static_cast<std::uint32_t>(*hi)) {
                    out.hosts.push_back(&h);
                }
            }
            return;
        }
    }
    if (const Host* h = model.host_by_name_or_ip(spec)) {
        out.hosts.push_back(h);
        out.addresses += 1;
        return;
    }
    if (is_valid_ip(spec)) {
        out.addresses += 1;
        return;
    }
    out.unresolved.emplace_back(spec);
}

std::optional<std::set<int>> parse_ports(std::string_view spec, bool& all) {
    std::set<int> ports;
    if (spec == "-") {
        all = true;
        return ports;
    }
    std::size_t i = 0;
    while (i <= spec.size()) {
        auto comma = spec.find(',', i);
        auto item = spec.substr(i, comma == std::string_view::npos ? std::string_view::npos : comma - i);
        if (item.starts_with("T:")) item.remove_prefix(2);
        if (item.starts_with("U:")) {
            // UDP ranges are accepted and scan nothing
        } else if (auto d = item.find('-'); d != std::string_view::npos) {
            auto lo = d == 0 ? std::optional<int>(1) : to_int(item.substr(0, d));
            auto hi = d + 1 == item.size() ? std::optional<int>(65535) : to_int(item.substr(d + 1));
            if (!lo || !hi || *lo > *hi || *lo < 1 || *hi > 65535) return std::nullopt;
            for (int p = *lo; p <= *hi; ++p) ports.insert(p);
        } else {
            auto p = to_int(item);
            if (!p || *p < 1 || *p > 65535) return std::nullopt;
            ports.insert(*p);
        }
        if (comma == std::string_view::npos) break;
        i = comma + 1;
    }
    return ports;
}

const std::set<std::string> kNmapValueFlags{"-p", "-oN", "-oX", "-oG", "-oA", "-oS", "-e", "--top-ports", "--script",
                                            "--script-args", "--max-retries", "--host-timeout", "-S", "-D", "-g",
                                            "--source-port", "--min-rate", "--max-rate", "-iL", "--exclude",
                                            "--version-intensity", "--stats-every"};

std::string service_line(const Service& s, bool version) {
    std::string line = std::to_string(s.port) + "/" + s.protocol + " open " + s.name;
    if (version) {
        if (!s.product.empty()) line += " " + s.product;
        if (!s.version.empty()) line += " " + s.version;
    }
    return line;
}

// ---- filesystem view -------------------------------------------------------

std::string normalize_path(std::string_view cwd, std::string_view path) {
    std::string joined = path.starts_with("/") ? std::string(path) : std::string(cwd) + "/" + std::string(path);
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i <= joined.size()) {
        auto slash = joined.find('/', i);
        std::string part = joined.substr(i, slash == std::string::npos ? std::string::npos : slash - i);
        if (part == "..") {
            if (!parts.empty()) parts.pop_back();
        } else if (!part.empty() && part != ".") {
            parts.push_back(part);
        }
        if (slash == std::string::npos) break;
        i = slash + 1;
    }
    return "/" + text::join(parts, "/");
}

std::string parent_of(const std::string& p) {
    auto s = p.rfind('/');
    return s == 0 || s == std::string::npos ? "/" : p.substr(0, s);
}

struct FsView {
    const Host& host;
    const std::map<std::string, std::string>* created;

    std::set<std::string> dirs() const {
        std::set<std::string> d{"/", "/bin", "/dev", "/etc", "/home", "/root", "/tmp", "/usr", "/var", "/var/lib",
                                "/var/log", "/var/www"};
        auto add = [&](std::string p) {
            while (p != "/") {
                p = parent_of(p);
                d.insert(p);
            }
        };
        for (const auto& f : host.files) add(f.path);
        if (created) {
            for (const auto& [p, _] : *created) add(p);
        }
        return d;
    }

    bool is_dir(const std::string& p) const { return dirs().count(p) > 0; }

    // content + root_only, or nullopt when absent
    std::optional<std::pair<std::string, bool>> file(const std::string& p) const {
        if (const SimFile* f = host.file(p)) return std::make_pair(f->content, f->root_only);
        if (created) {
            if (auto it = created->find(p); it != created->end()) return std::make_pair(it->second, false);
        }
        return std::nullopt;
    }

    std::vector<std::string> children(const std::string& dir) const {
        std::set<std::string> names;
        std::string prefix = dir == "/" ? "/" : dir + "/";
        auto consider = [&](const std::string& p) {
            if (p.size() <= prefix.size() || !p.starts_with(prefix)) return;
            auto rest = p.substr(prefix.size());
            names.insert(rest.substr(0, rest.find('/')));
        };
        for (const auto& d : dirs()) consider(d);
        for (const auto& f : host.files) consider(f.path);
        if (created) {
            for (const auto& [p, _] : *created) consider(p);
        }
        return {names.begin(), names.end()};
    }

    std::vector<std::string> files_under(const std::string& dir) const {
        std::vector<std::string> out;
        std::string prefix = dir == "/" ? "/" : dir + "/";
        for (const auto& f : host.files) {
            if (f.path.starts_with(prefix)) out.push_back(f.path);
        }
        if (created) {
            for (const auto& [p, _] : *created) {
                if (p.starts_with(prefix)) out.push_back(p);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

bool root_only_dir(const std::string& p) { return p == "/root" || p.starts_with("/root/"); }

std::string home_of(const Host& host, const std::string& user) {
    if (user == "root") return "/root";
    if (const SimFile* f = host.file("/etc/passwd")) {
        for (auto line : text::split_lines(f->content)) {
            std::vector<std::string> fields;
            std::size_t i = 0;
            while (true) {
                auto c = line.find(':', i);
                fields.emplace_back(line.substr(i, c == std::string_view::npos ? std::string_view::npos : c - i));
                if (c == std::string_view::npos) break;
                i = c + 1;
            }
            if (fields.size() >= 6 && fields[0] == user) return fields[5];
        }
    }
    return "/home/" + user;
}

std::string id_line(const Host& host, const std::string& user) {
    if (user == "root") return "uid=0(root) gid=0(root)";
    if (const SimFile* f = host.file("/etc/passwd")) {
        for (auto line : text::split_lines(f->content)) {
            auto parts = std::vector<std::string>{};
            std::size_t i = 0;
            while (true) {
                auto c = line.find(':', i);
                parts.emplace_back(line.substr(i, c == std::string_view::npos ? std::string_view::npos : c - i));
                if (c == std::string_view::npos) break;
                i = c + 1;
            }
            if (parts.size() >= 4 && parts[0] == user) {
                return "uid=" + parts[2] + "(" + user + ") gid=" + parts[3] + "(" + user + ") groups=" + parts[3] + "(" +
                       user + ")";
            }
        }
    }
    return "uid=1000(" + user + ") gid=1000(" + user + ")";
}

bool may_write(const Host& host, const SimSession& s, const std::string& path) {
    if (s.privilege == "root") return true;
    return path.starts_with("/tmp/") || path.starts_with(home_of(host, s.user) + "/");
}

// ---- network clients -------------------------------------------------------

struct Endpoint {
    std::string host;
    int port = 0;
    bool listen = false;
};

std::optional<Endpoint> url_endpoint(std::string_view url, int fallback_port) {
    Endpoint ep;
    ep.port = fallback_port;
    auto scheme = url.find("://");
    if (scheme != std::string_view::npos) {
        auto s = url.substr(0, scheme);
        if (s == "ftp") ep.port = 21;
        else if (s == "http") ep.port = 80;
        else if (s == "https") ep.port = 443;
        else if (s == "sftp" || s == "scp") ep.port = 22;
        else if (s == "tftp") ep.port = 69;
        url.remove_prefix(scheme + 3);
    }
    url = url.substr(0, url.find('/'));
    if (auto at = url.rfind('@'); at != std::string_view::npos) url.remove_prefix(at + 1);
    if (auto colon = url.rfind(':'); colon != std::string_view::npos) {
        if (auto p = to_int(url.substr(colon + 1))) ep.port = *p;
        url = url.substr(0, colon);
    }
    if (url.empty()) return std::nullopt;
    ep.host = std::string(url);
    return ep;
}

std::optional<Endpoint> client_endpoint(const std::string& tool, const std::vector<std::string>& w) {
    std::vector<std::string> pos;
    Endpoint ep;
    if (tool == "nc" || tool == "ncat" || tool == "netcat") {
        const std::set<std::string> value_flags{"-p", "-w", "-q", "-e", "-s", "-i", "-c"};
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i].starts_with("-")) {
                if (w[i].find('l') != std::string::npos && !value_flags.count(w[i])) ep.listen = true;
                if (value_flags.count(w[i])) ++i;
                continue;
            }
            pos.push_back(w[i]);
        }
        if (ep.listen) return ep;
        if (pos.size() < 2) return std::nullopt;
        auto p = to_int(pos[1]);
        if (!p) return std::nullopt;
        ep.host = pos[0];
        ep.port = *p;
        return ep;
    }
    if (tool == "curl" || tool == "wget") {
        const std::set<std::string> value_flags{"-T", "-o", "-O", "-u", "-X", "-d", "-H", "--upload-file", "--user",
                                                "--post-file", "-P", "--output-document"};
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i].starts_with("-")) {
                if (value_flags.count(w[i])) ++i;
                continue;
            }
            return url_endpoint(w[i], 80);
        }
        return std::nullopt;
    }
    if (tool == "scp") {
        ep.port = 22;
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i] == "-P" && i + 1 < w.size()) {
                if (auto p = to_int(w[++i])) ep.port = *p;
                continue;
            }
            if (w[i].starts_with("-")) continue;
            auto colon = w[i].find(':');
            if (colon == std::string::npos) continue;
            std::string host = w[i].substr(0, colon);
            if (auto at = host.rfind('@'); at != std::string::npos) host = host.substr(at + 1);
            ep.host = host;
            return ep;
        }
        return std::nullopt;
    }
    std::map<std::string, int> defaults{{"ftp", 21}, {"ssh", 22}, {"telnet", 23}, {"rlogin", 513},
                                        {"mysql", 3306}, {"psql", 5432}, {"ping", 0}};
    ep.port = defaults.at(tool);
    for (std::size_t i = 1; i < w.size(); ++i) {
        const std::string& a = w[i];
        if (tool == "mysql" || tool == "psql") {
            if (a == "-h" && i + 1 < w.size()) {
                ep.host = w[++i];
            } else if (a.starts_with("-h") && a.size() > 2) {
                ep.host = a.substr(2);
            } else if (a.starts_with("--host=")) {
                ep.host = a.substr(7);
            } else if ((a == "-P" && tool == "mysql") || (a == "-p" && tool == "psql")) {
                if (i + 1 < w.size()) {
                    if (auto p = to_int(w[++i])) ep.port = *p;
                }
            } else if (a == "-u" || a == "-U" || a == "-d") {
                ++i;
            }
            continue;
        }
        if ((a == "-p" && tool == "ssh") || (a == "-l" && (tool == "ssh" || tool == "rlogin")) ||
            (a == "-c" && tool == "ping") || a == "-i" || a == "-W") {
            if (a == "-p" && i + 1 < w.size()) {
                if (auto p = to_int(w[i + 1])) ep.port = *p;
            }
            ++i;
            continue;
        }
        if (a.starts_with("-")) continue;
        if (ep.host.empty()) {
            ep.host = a;
            if (auto at = ep.host.rfind('@'); at != std::string::npos) ep.host = ep.host.substr(at + 1);
        } else if (tool == "ftp" || tool == "telnet") {
            if (auto p = to_int(a)) ep.port = *p;
        }
    }
    if (ep.host.empty()) return std::nullopt;
    return ep;
}

std::string refused_text(const std::string& tool, const std::string& h, int p, const std::string& why) {
    std::string ps = std::to_string(p);
    if (tool == "nc" || tool == "ncat" || tool == "netcat") return "nc: connect to " + h + " port " + ps + " (tcp) failed: " + why;
    if (tool == "ftp") return "ftp: connect: " + why;
    if (tool == "curl") return "curl: (7) Failed to connect to " + h + " port " + ps + " after 0 ms: " + why;
    if (tool == "wget") return "Connecting to " + h + ":" + ps + "... failed: " + why + ".";
    if (tool == "scp") return "ssh: connect to host " + h + " port " + ps + ": " + why + "\nlost connection";
    if (tool == "ssh") return "ssh: connect to host " + h + " port " + ps + ": " + why;
    if (tool == "telnet") return "Trying " + h + "...\ntelnet: Unable to connect to remote host: " + why;
    if (tool == "mysql") return "ERROR 2003 (HY000): Can't connect to MySQL server on '" + h + "' (111)";
    if (tool == "psql") return "psql: error: connection to server at \"" + h + "\", port " + ps + " failed: " + why;
    return h + ": " + why;
}

std::string banner(const Service& s) {
    if (text::iequals(s.product, "vsftpd")) return "220 (vsFTPd " + s.version + ")";
    std::string b = s.product;
    if (!s.version.empty()) b += " " + s.version;
    return b.empty() ? s.name : b;
}

Result network_client(const SimEnv& env, const std::string& from_ip, const std::vector<std::string>& w,
                      std::size_t stdin_bytes) {
    const NetworkModel& model = *env.model;
    const std::string& tool = w[0];
    auto ep = client_endpoint(tool, w);
    if (!ep) return fail(tool + ": missing or malformed destination", CommandFailure::Syntax, 1);
    if (ep->listen) {
        // a listener on our own side never receives anything in the range
        return fail("listening on [any] ...", CommandFailure::Timeout, 124);
    }
    const Host* host = model.host_by_name_or_ip(ep->host);
    std::string ip = host ? host->ip : ep->host;
    bool reachable = host || ip == env.agent_ip || ip == from_ip || ip == "127.0.0.1" || ip == "localhost";

    if (tool == "ping") {
        if (!reachable) {
            return fail("PING " + ip + " (" + ip + ") 56(84) bytes of data.\nFrom " + from_ip +
                            " icmp_seq=1 Destination Host Unreachable\n\n--- " + ip +
                            " ping statistics ---\n4 packets transmitted, 0 received, +1 errors, 100% packet loss",
                        CommandFailure::Runtime);
        }
        std::string out = "PING " + ip + " (" + ip + ") 56(84) bytes of data.\n";
        for (int i = 1; i <= 4; ++i) {
            out += "64 bytes from " + ip + ": icmp_seq=" + std::to_string(i) + " ttl=64 time=0.04" + std::to_string(i) + " ms\n";
        }
        out += "\n--- " + ip + " ping statistics ---\n4 packets transmitted, 4 received, 0% packet loss, time 3004ms";
        return ok(out);
    }

    if (host && host->ip != from_ip) {
        const Service* svc = host->service_on(ep->port);
        if (!svc) return fail(refused_text(tool, ip, ep->port, "Connection refused"), CommandFailure::Runtime);
        // the service answers, but no credentials are available to this client
        if (tool == "nc" || tool == "ncat" || tool == "netcat") return ok(banner(*svc));
        if (tool == "ftp") {
            return fail("Connected to " + ip + ".\n" + banner(*svc) + "\nName (" + ip + ":root): \n530 Login incorrect.\nLogin failed.",
                        CommandFailure::Runtime);
        }
        if (tool == "ssh" || tool == "scp") {
            return fail(ip + ": Permission denied (publickey,password)." + std::string(tool == "scp" ? "\nlost connection" : ""),
                        CommandFailure::Runtime, 255);
        }
        if (tool == "curl" || tool == "wget") {
            if (svc->name == "http") {
                return ok("<html><head><title>" + host->name + "</title></head><body>It works!</body></html>");
            }
            return fail(tool + ": server at " + ip + ":" + std::to_string(ep->port) + " did not speak the expected protocol",
                        CommandFailure::Runtime);
        }
        return fail("Connected to " + ip + ".\n" + banner(*svc) + "\nConnection closed: no interactive terminal available.",
                    CommandFailure::Runtime);
    }
    if (model.listener(ip, ep->port)) {
        return ok("(" + std::to_string(stdin_bytes) + " bytes delivered to " + ip + ":" + std::to_string(ep->port) + ")");
    }
    return fail(refused_text(tool, ip, ep->port, reachable ? "Connection refused" : "No route to host"),
                CommandFailure::Runtime);
}

const std::set<std::string> kClients{"nc", "ncat", "netcat", "ftp", "curl", "wget", "scp", "ssh", "telnet"};
const std::set<std::string> kLocalClients{"mysql", "psql", "rlogin", "ping"};
const std::set<std::string> kConsoleVerbs{"use", "set", "setg", "unset", "unsetg", "show", "info", "search",
                                          "back", "exploit", "run", "sessions", "check"};

// ---- console ---------------------------------------------------------------

std::string opt(const SessionState& st, const std::string& name) {
    if (auto it = st.options.find(name); it != st.options.end()) return it->second;
    if (auto it = st.globals.find(name); it != st.globals.end()) return it->second;
    return {};
}

std::string option_name(std::string n) {
    n = text::to_upper(n);
    if (n == "RHOST") n = "RHOSTS";
    return n;
}

const ExploitEntry* resolve_module(const NetworkModel& model, const std::string& name) {
    if (const auto* e = model.exploit(name)) return e;
    for (const char* prefix : {"exploit/", "auxiliary/", "exploits/"}) {
        if (const auto* e = model.exploit(prefix + name)) return e;
    }
    return nullptr;
}

std::string basename_of(std::string_view module) {
    auto s = module.rfind('/');
    return std::string(s == std::string_view::npos ? module : module.substr(s + 1));
}

bool wants_reverse(const std::string& payload) { return payload.find("reverse") != std::string::npos; }

Result open_session(const SimEnv& env, SessionState& st, const Host& host, const ExploitEntry& e, const Service& svc,
                    const std::string& payload, bool interact, std::string out) {
    SimSession s;
    s.id = st.next_session_id++;
    s.host_ip = host.ip;
    s.privilege = e.effect == ExploitEffect::RootShell ? "root" : "user";
    s.user = e.effect == ExploitEffect::RootShell ? "root" : e.user;
    s.cwd = s.privilege == "root" ? "/" : home_of(host, s.user);
    s.kind = payload.find("meterpreter") != std::string::npos ? "meterpreter" : "shell";
    st.sessions[s.id] = s;
    std::string lhost = opt(st, "LHOST").empty() ? env.agent_ip : opt(st, "LHOST");
    std::string lport = opt(st, "LPORT").empty() ? "4444" : opt(st, "LPORT");
    out += std::string(s.kind == "meterpreter" ? "[*] Meterpreter" : "[*] Command shell") + " session " +
           std::to_string(s.id) + " opened (" + lhost + ":" + lport + " -> " + host.ip + ":" +
           std::to_string(svc.port) + ") at " + kSessionStamp + "\n";
    if (interact) {
        st.mode = ConsoleMode::Shell;
        st.active_session = s.id;
    }
    Result r = ok(out);
    r.events.push_back({SessionEventKind::Opened, s.id, host.ip, s.privilege, e.module});
    return r;
}

Result run_module(const SimEnv& env, SessionState& st, const std::vector<std::string>& w) {
    const NetworkModel& model = *env.model;
    if (st.module.empty()) return fail("[-] No module selected.", CommandFailure::Syntax);
    const ExploitEntry* e = model.exploit(st.module);
    if (!e) return fail("[-] No module selected.", CommandFailure::Syntax);
    bool interact = std::find(w.begin(), w.end(), "-z") == w.end() && !e->is_auxiliary();

    std::string rhosts = opt(st, "RHOSTS");
    if (rhosts.empty() || (!is_valid_ip(rhosts) && !model.host_by_name_or_ip(rhosts))) {
        return fail("[-] Msf::OptionValidateError One or more options failed to validate: RHOSTS.", CommandFailure::Syntax);
    }
    std::string rport_text = opt(st, "RPORT");
    int rport = e->default_port;
    if (!rport_text.empty()) {
        auto p = to_int(rport_text);
        if (!p || *p < 1 || *p > 65535) {
            return fail("[-] Msf::OptionValidateError One or more options failed to validate: RPORT.", CommandFailure::Syntax);
        }
        rport = *p;
    }
    std::string payload = opt(st, "PAYLOAD");
    if (!e->is_auxiliary()) {
        if (payload.empty() && !e->payloads.empty()) payload = e->payloads.front();
        if (std::find(e->payloads.begin(), e->payloads.end(), payload) == e->payloads.end()) {
            return fail("[-] Exploit failed: " + payload + " is not a compatible payload.", CommandFailure::Syntax);
        }
    }
    std::string out;
    std::string lhost = opt(st, "LHOST").empty() ? env.agent_ip : opt(st, "LHOST");
    std::string lport = opt(st, "LPORT").empty() ? "4444" : opt(st, "LPORT");
    if (wants_reverse(payload)) out += "[*] Started reverse TCP handler on " + lhost + ":" + lport + "\n";

    const Host* host = model.host_by_name_or_ip(rhosts);
    std::string target = (host ? host->ip : rhosts) + ":" + std::to_string(rport);
    if (!host) {
        out += "[-] " + target + " - Exploit failed [unreachable]: Rex::ConnectionTimeout The connection with (" + target +
               ") timed out.\n";
        out += e->is_auxiliary() ? "[*] Auxiliary module execution completed" : "[*] Exploit completed, but no session was created.";
        return fail(out, CommandFailure::Runtime);
    }
    const Service* svc = host->service_on(rport);
    if (!svc) {
        out += "[-] " + target + " - Exploit failed [unreachable]: Rex::ConnectionRefused The connection was refused by the remote host (" +
               target + ").\n";
        out += e->is_auxiliary() ? "[*] Auxiliary module execution completed" : "[*] Exploit completed, but no session was created.";
        return fail(out, CommandFailure::Runtime);
    }
    out += "[*] " + target + " - Connected: " + banner(*svc) + "\n";
    bool hit = e->matches(*svc);
    if (hit && (e->effect == ExploitEffect::RootShell || e->effect == ExploitEffect::UserShell)) {
        out += e->is_auxiliary() ? "[+] " + target + " - Login Successful: " + e->user + "\n"
                                 : "[+] " + target + " - Exploit succeeded, shell as " +
                                       (e->effect == ExploitEffect::RootShell ? std::string("root") : e->user) + "\n";
        Result r = open_session(env, st, *host, *e, *svc, payload, interact, out);
        if (e->is_auxiliary()) r.output += "[*] Scanned 1 of 1 hosts (100% complete)\n[*] Auxiliary module execution completed";
        while (!r.output.empty() && r.output.back() == '\n') r.output.pop_back();
        return r;
    }
    if (hit && e->effect == ExploitEffect::CredentialLeak) {
        out += "[+] " + target + " - Success: '" + e->credential + "'\n";
        out += "[*] Scanned 1 of 1 hosts (100% complete)\n[*] Auxiliary module execution completed";
        Result r = ok(out);
        r.events.push_back({SessionEventKind::CredentialLeak, 0, host->ip, "", e->credential});
        return r;
    }
    if (e->is_auxiliary()) {
        out += "[-] " + target + " - LOGIN FAILED\n[*] Scanned 1 of 1 hosts (100% complete)\n[*] Auxiliary module execution completed";
    } else {
        out += "[-] " + target + " - The target does not appear to be vulnerable.\n[*] Exploit completed, but no session was created.";
    }
    return fail(out, CommandFailure::Runtime);
}

Result sessions_cmd(SessionState& st, const std::vector<std::string>& w) {
    auto pick = [&](const std::string& arg) -> int {
        if (arg == "-1") {
            int last = 0;
            for (const auto& [id, s] : st.sessions) {
                if (s.open) last = id;
            }
            return last;
        }
        auto n = to_int(arg);
        return n ? *n : -1;
    };
    if (w.size() == 1 || w[1] == "-l") {
        std::string out = "Active sessions\n===============\n";
        bool any = false;
        for (const auto& [id, s] : st.sessions) {
            if (!s.open) continue;
            if (!any) out += "  Id  Type  Information\n  --  ----  -----------\n";
            any = true;
            out += "  " + std::to_string(id) + "   " + s.kind + "  " + s.user + " @ " + s.host_ip + "\n";
        }
        if (!any) out += "No active sessions.";
        while (out.back() == '\n') out.pop_back();
        return ok(out);
    }
    bool kill = w[1] == "-k";
    std::string arg = w[1] == "-i" || kill ? (w.size() > 2 ? w[2] : "") : w[1];
    int id = pick(arg);
    auto it = st.sessions.find(id);
    if (it == st.sessions.end() || !it->second.open) {
        return fail("[-] Invalid session identifier: " + arg, CommandFailure::Runtime);
    }
    if (kill) {
        it->second.open = false;
        if (st.active_session == id) st.active_session = 0;
        Result r = ok("[*] Killing session " + std::to_string(id) + "\n[*] " + it->second.host_ip + " - Command shell session " +
                      std::to_string(id) + " closed.");
        r.events.push_back({SessionEventKind::Closed, id, it->second.host_ip, it->second.privilege, "killed"});
        return r;
    }
    st.mode = ConsoleMode::Shell;
    st.active_session = id;
    return ok("[*] Starting interaction with " + std::to_string(id) + "...");
}

Result local_command(const SimEnv& env, SessionState& st, std::string_view line);

Result console_command(const SimEnv& env, SessionState& st, std::string_view line) {
    const NetworkModel& model = *env.model;
    auto w = words_of(line);
    if (w.empty()) return ok("");
    const std::string verb = text::to_lower(w[0]);

    if (verb == "use") {
        if (w.size() < 2) return fail("Usage: use <name|term|index>", CommandFailure::Syntax);
        const ExploitEntry* e = resolve_module(model, w[1]);
        if (!e) {
            std::string base = basename_of(w[1]);
            bool misplaced = std::any_of(model.exploits.begin(), model.exploits.end(),
                                         [&](const ExploitEntry& x) { return basename_of(x.module) == base; });
            return fail("[-] No results from search\n[-] Failed to load module: " + w[1],
                        misplaced ? CommandFailure::Syntax : CommandFailure::UnknownModule);
        }
        if (st.module != e->module) st.options.clear();
        st.module = e->module;
        if (!e->is_auxiliary() && !e->payloads.empty() && opt(st, "PAYLOAD").empty()) {
            return ok("[*] No payload configured, defaulting to " + e->payloads.front());
        }
        return ok("");
    }
    if (verb == "set" || verb == "setg") {
        if (w.size() < 3) return fail("[-] Usage: " + verb + " [option] [value]", CommandFailure::Syntax);
        std::string name = option_name(w[1]);
        std::string value = join_words(w, 2);
        if (verb == "set" && st.module.empty()) {
            return fail("[-] No module selected; use a module before setting " + name + ".", CommandFailure::Syntax);
        }
        (verb == "set" ? st.options : st.globals)[name] = value;
        return ok((name == "PAYLOAD" ? std::string("payload") : name) + " => " + value);
    }
    if (verb == "unset" || verb == "unsetg") {
        if (w.size() < 2) return fail("[-] Usage: " + verb + " [option]", CommandFailure::Syntax);
        std::string name = option_name(w[1]);
        (verb == "unset" ? st.options : st.globals).erase(name);
        return ok("Unsetting " + name + "...");
    }
    if (verb == "back") {
        st.module.clear();
        st.options.clear();
        return ok("");
    }
    if (verb == "exploit" || verb == "run") return run_module(env, st, w);
    if (verb == "check") {
        if (st.module.empty()) return fail("[-] No module selected.", CommandFailure::Syntax);
        const ExploitEntry* e = model.exploit(st.module);
        const Host* host = model.host_by_name_or_ip(opt(st, "RHOSTS"));
        if (!host) return fail("[-] Msf::OptionValidateError One or more options failed to validate: RHOSTS.", CommandFailure::Syntax);
        int rport = opt(st, "RPORT").empty() ? e->default_port : to_int(opt(st, "RPORT")).value_or(e->default_port);
        const Service* svc = host->service_on(rport);
        std::string target = host->ip + ":" + std::to_string(rport);
        if (svc && e->matches(*svc)) return ok("[+] " + target + " - The target appears to be vulnerable.");
        return ok("[*] " + target + " - The target is not exploitable.");
    }
    if (verb == "sessions") return sessions_cmd(st, w);
    if (verb == "search") {
        if (w.size() < 2) return fail("Usage: search [keywords]", CommandFailure::Syntax);
        std::string term = join_words(w, 1);
        // drop "type:" style qualifiers, keep the free text
        std::vector<std::string> keys;
        for (std::size_t i = 1; i < w.size(); ++i) {
            auto c = w[i].find(':');
            keys.push_back(text::to_lower(c == std::string::npos ? w[i] : w[i].substr(c + 1)));
        }
        std::vector<const ExploitEntry*> hits;
        for (const auto& e : model.exploits) {
            std::string hay = text::to_lower(e.module + " " + e.product + " " + e.version);
            if (std::all_of(keys.begin(), keys.end(), [&](const std::string& k) { return hay.find(k) != std::string::npos; })) {
                hits.push_back(&e);
            }
        }
        if (hits.empty()) return ok("[-] No results from search");
        std::string out = "Matching Modules\n================\n   #  Name  Target\n   -  ----  ------\n";
        for (std::size_t i = 0; i < hits.size(); ++i) {
            out += "   " + std::to_string(i) + "  " + hits[i]->module + "  " + hits[i]->product +
                   (hits[i]->version.empty() ? "" : " " + hits[i]->version) + "\n";
        }
        out.pop_back();
        return ok(out);
    }
    if (verb == "show" || verb == "info") {
        std::string what = w.size() > 1 ? text::to_lower(w[1]) : (verb == "info" ? "info" : "");
        if (what == "sessions") return sessions_cmd(st, {"sessions", "-l"});
        if (st.module.empty()) {
            if (what == "options" || what == "payloads" || what == "info") return fail("[-] No module selected.", CommandFailure::Syntax);
            return fail("[-] Invalid parameter \"" + what + "\"", CommandFailure::Syntax);
        }
        const ExploitEntry* e = model.exploit(st.module);
        if (what == "payloads") {
            std::string out = "Compatible Payloads\n===================\n";
            for (std::size_t i = 0; i < e->payloads.size(); ++i) out += "   " + std::to_string(i) + "  payload/" + e->payloads[i] + "\n";
            out.pop_back();
            return ok(out);
        }
        std::string rport = opt(st, "RPORT").empty() ? std::to_string(e->default_port) : opt(st, "RPORT");
        std::string out = "Module options (" + e->module + "):\n   Name    Current Setting\n   ----    ---------------\n";
        out += "   RHOSTS  " + opt(st, "RHOSTS") + "\n   RPORT   " + rport + "\n";
        if (!e->is_auxiliary()) {
            std::string p = opt(st, "PAYLOAD").empty() && !e->payloads.empty() ? e->payloads.front() : opt(st, "PAYLOAD");
            out += "   PAYLOAD " + p + "\n";
            if (wants_reverse(p)) {
                out += "   LHOST   " + (opt(st, "LHOST").empty() ? env.agent_ip : opt(st, "LHOST")) + "\n   LPORT   " +
                       (opt(st, "LPORT").empty() ? std::string("4444") : opt(st, "LPORT")) + "\n";
            }
        }
        if (what == "info") {
            out = "       Name: " + basename_of(e->module) + "\n     Module: " + e->module + "\n\n" + out;
        }
        out.pop_back();
        return ok(out);
    }
    if (verb == "exit" || verb == "quit") {
        st.mode = ConsoleMode::Local;
        return ok("");
    }
    if (verb == "msfconsole" || verb == "banner") return ok("");
    // the console runs system commands it does not know itself
    if (verb == "nmap" || verb == "db_nmap" || kClients.count(verb) || kLocalClients.count(verb) || verb == "whoami" ||
        verb == "id" || verb == "pwd" || verb == "ls" || verb == "cat" || verb == "echo" || verb == "uname" ||
        verb == "hostname") {
        std::string cmd(line);
        if (verb == "db_nmap") cmd = "nmap" + cmd.substr(7);
        Result r = local_command(env, st, cmd);
        st.mode = ConsoleMode::Console;
        r.output = "[*] exec: " + cmd + "\n\n" + r.output;
        return r;
    }
    return fail("[-] Unknown command: " + w[0] + ".", CommandFailure::UnknownCommand);
}

// ---- remote shell ----------------------------------------------------------

struct ShellCtx {
    const SimEnv& env;
    SessionState& st;
    SimSession& sess;
    const Host& host;
};

Result shell_simple(ShellCtx& c, const std::vector<std::string>& w, const std::string& input) {
    const std::string& verb = w[0];
    FsView fs{c.host, c.st.created.count(c.host.ip) ? &c.st.created[c.host.ip] : nullptr};
    auto resolve = [&](const std::string& p) { return normalize_path(c.sess.cwd, p); };

    if (verb == "whoami" || verb == "getuid") {
        return ok(verb == "getuid" ? "Server username: " + c.sess.user : c.sess.user);
    }
    if (verb == "id") return ok(id_line(c.host, c.sess.user));
    if (verb == "pwd") return ok(c.sess.cwd);
    if (verb == "hostname") return ok(c.host.name);
    if (verb == "uname") {
        if (w.size() > 1 && w[1] == "-a") return ok(kUnameAll);
        if (w.size() > 1 && w[1] == "-r") return ok("2.6.24-16-server");
        return ok("Linux");
    }
    if (verb == "echo") return ok(join_words(w, 1));
    if (verb == "cd") {
        std::string target = w.size() > 1 ? resolve(w[1]) : home_of(c.host, c.sess.user);
        if (!fs.is_dir(target) || (root_only_dir(target) && c.sess.privilege != "root")) {
            return fail("sh: 1: cd: can't cd to " + (w.size() > 1 ? w[1] : target), CommandFailure::Runtime, 2);
        }
        c.sess.cwd = target;
        return ok("");
    }
    if (verb == "cat") {
        if (w.size() < 2) return ok(input);
        std::string out;
        Result r = ok("");
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i].starts_with("-")) continue;
            Result one = sim_shell_read(*c.env.model, c.sess, w[i], &c.st);
            if (!out.empty() && !one.output.empty()) out += "\n";
            out += one.output;
            if (one.failure != CommandFailure::None) {
                r.failure = one.failure;
                r.exit_status = one.exit_status;
            }
        }
        while (!out.empty() && out.back() == '\n') out.pop_back();
        r.output = out;
        return r;
    }
    if (verb == "ls") {
        bool all = false, longf = false;
        std::vector<std::string> paths;
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i].starts_with("-")) {
                all = all || w[i].find('a') != std::string::npos;
                longf = longf || w[i].find('l') != std::string::npos;
            } else {
                paths.push_back(w[i]);
            }
        }
        if (paths.empty()) paths.push_back(".");
        std::string out;
        Result r = ok("");
        for (const auto& raw : paths) {
            std::string p = resolve(raw);
            std::string section;
            if (fs.file(p)) {
                section = raw;
            } else if (!fs.is_dir(p)) {
                section = "ls: cannot access '" + raw + "': No such file or directory";
                r.failure = CommandFailure::Runtime;
                r.exit_status = 2;
            } else if (root_only_dir(p) && c.sess.privilege != "root") {
                section = "ls: cannot open directory '" + raw + "': Permission denied";
                r.failure = CommandFailure::Runtime;
                r.exit_status = 2;
            } else {
                std::vector<std::string> lines;
                for (const auto& name : fs.children(p)) {
                    if (!all && name.starts_with(".")) continue;
                    std::string full = p == "/" ? "/" + name : p + "/" + name;
                    if (!longf) {
                        lines.push_back(name);
                        continue;
                    }
                    auto f = fs.file(full);
                    std::string perms = !f ? "drwxr-xr-x" : (f->second ? "-rw-------" : "-rw-r--r--");
                    std::string size = f ? std::to_string(f->first.size()) : "4096";
                    lines.push_back(perms + " 1 root root " + size + " Mar  6 19:54 " + name);
                }
                section = text::join(lines, longf ? "\n" : "  ");
                if (paths.size() > 1) section = raw + ":\n" + section;
            }
            if (!out.empty()) out += "\n";
            out += section;
        }
        r.output = out;
        return r;
    }
    if (verb == "tar") {
        std::string flags;
        std::string archive;
        std::vector<std::string> members;
        for (std::size_t i = 1; i < w.size(); ++i) {
            std::string a = w[i];
            bool flag_word = a.starts_with("-") || (i == 1 && a.find_first_not_of("cxtzvfjJp") == std::string::npos);
            if (flag_word) {
                if (a.starts_with("--")) continue;
                flags += a.substr(a.starts_with("-") ? 1 : 0);
                if (a.find('f') != std::string::npos && archive.empty() && i + 1 < w.size()) archive = w[++i];
                continue;
            }
            members.push_back(a);
        }
        bool create = flags.find('c') != std::string::npos;
        bool list = flags.find('t') != std::string::npos;
        if (archive.empty() || (!create && !list && flags.find('x') == std::string::npos)) {
            return fail("tar: You must specify one of the '-Acdtrux', '--delete' or '--test-label' options\nTry 'tar --help' for more information.",
                        CommandFailure::Syntax, 2);
        }
        std::string apath = resolve(archive);
        if (!create) {
            auto f = fs.file(apath);
            if (!f) return fail("tar: " + archive + ": Cannot open: No such file or directory", CommandFailure::Runtime, 2);
            return ok(list ? f->first : "");
        }
        if (members.empty()) return fail("tar: Cowardly refusing to create an empty archive", CommandFailure::Syntax, 2);
        std::vector<std::string> out_lines;
        std::vector<std::string> listed;
        bool errors = false;
        bool stripped = false;
        for (const auto& m : members) {
            std::string p = resolve(m);
            std::vector<std::string> paths;
            if (fs.file(p)) {
                paths.push_back(p);
            } else if (fs.is_dir(p)) {
                paths = fs.files_under(p);
            } else {
                out_lines.push_back("tar: " + m + ": Cannot stat: No such file or directory");
                errors = true;
                continue;
            }
            for (const auto& f : paths) {
                auto file = fs.file(f);
                if (file && file->second && c.sess.privilege != "root") {
                    out_lines.push_back("tar: " + f + ": Cannot open: Permission denied");
                    errors = true;
                    continue;
                }
                stripped = true;
                listed.push_back(f.substr(1));
            }
        }
        if (!may_write(c.host, c.sess, apath) || !fs.is_dir(parent_of(apath))) {
            return fail("tar: " + archive + ": Cannot open: Permission denied\ntar: Error is not recoverable: exiting now",
                        CommandFailure::Runtime, 2);
        }
        if (stripped) out_lines.insert(out_lines.begin(), "tar: Removing leading `/' from member names");
        for (const auto& l : listed) out_lines.push_back(l);
        c.st.created[c.host.ip][apath] = text::join(listed, "\n");
        if (errors) {
            out_lines.push_back("tar: Exiting with failure status due to previous errors");
            return fail(text::join(out_lines, "\n"), CommandFailure::Runtime, 2);
        }
        return ok(text::join(out_lines, "\n"));
    }
    if (verb == "sysinfo" && c.sess.kind == "meterpreter") {
        return ok("Computer     : " + c.host.name + "\nOS           : Linux 2.6.24-16-server\nMeterpreter  : x86/linux");
    }
    if (verb == "shell" && c.sess.kind == "meterpreter") return ok("Process 4120 created.\nChannel 1 created.");
    if (kClients.count(verb)) return network_client(c.env, c.host.ip, w, input.size());
    return fail("sh: 1: " + verb + ": not found", CommandFailure::UnknownCommand, 127);
}

// Sequences (; && ||), pipelines and < > redirections over the simple commands.
Result shell_command(const SimEnv& env, SessionState& st, std::string_view line) {
    auto it = st.sessions.find(st.active_session);
    if (it == st.sessions.end() || !it->second.open) {
        st.mode = ConsoleMode::Console;
        return fail("[-] Session " + std::to_string(st.active_session) + " is not open.", CommandFailure::Runtime);
    }
    SimSession& sess = it->second;
    const Host* host = env.model->host_by_ip(sess.host_ip);
    if (!host) return fail("[-] Session host vanished.", CommandFailure::Runtime);

    auto tokens = lex(line);
    if (tokens.empty()) return ok("");
    const std::string first = tokens[0].text;
    if (tokens.size() == 1 && (first == "exit" || first == "logout" || first == "quit")) {
        sess.open = false;
        st.active_session = 0;
        st.mode = ConsoleMode::Console;
        Result r = ok("[*] " + sess.host_ip + " - Command shell session " + std::to_string(sess.id) +
                      " closed.  Reason: User exit");
        r.events.push_back({SessionEventKind::Closed, sess.id, sess.host_ip, sess.privilege, "User exit"});
        return r;
    }
    if (tokens.size() == 1 && (first == "background" || first == "bg")) {
        st.mode = ConsoleMode::Console;
        return ok("[*] Backgrounding session " + std::to_string(sess.id) + "...");
    }

    ShellCtx ctx{env, st, sess, *host};
    Result total = ok("");
    std::string out;
    std::size_t i = 0;
    bool skip = false;
    while (i < tokens.size()) {
        // one pipeline up to ; && ||
        std::string input;
        Result last = ok("");
        bool any = false;
        std::string redirect_out;
        bool append = false;
        while (i < tokens.size() && !(tokens[i].op && (tokens[i].text == ";" || tokens[i].text == "&&" ||
                                                        tokens[i].text == "||" || tokens[i].text == "&"))) {
            std::vector<std::string> w;
            std::string stdin_file;
            while (i < tokens.size() && !(tokens[i].op && tokens[i].text != "<" && tokens[i].text != ">" &&
                                         tokens[i].text != ">>")) {
                if (tokens[i].op) {
                    std::string op = tokens[i].text;
                    if (i + 1 < tokens.size() && !tokens[i + 1].op) {
                        if (op == "<") stdin_file = tokens[i + 1].text;
                        else {
                            redirect_out = tokens[i + 1].text;
                            append = op == ">>";
                        }
                        i += 2;
                    } else {
                        ++i;
                    }
                    continue;
                }
                w.push_back(tokens[i].text);
                ++i;
            }
            if (i < tokens.size() && tokens[i].op && tokens[i].text == "|") ++i;
            if (w.empty()) continue;
            if (!stdin_file.empty()) {
                Result rd = sim_shell_read(*env.model, sess, stdin_file, &st);
                if (rd.failure != CommandFailure::None) {
                    std::string name = stdin_file;
                    rd.output = "sh: 1: cannot open " + name + ": " +
                                (rd.output.find("Permission") != std::string::npos ? "Permission denied" : "No such file");
                    last = rd;
                    any = true;
                    input.clear();
                    continue;
                }
                input = rd.output;
            }
            if (!skip) last = shell_simple(ctx, w, input);
            any = true;
            input = last.output;
        }
        if (!redirect_out.empty() && any && !skip) {
            std::string p = normalize_path(sess.cwd, redirect_out);
            FsView fs{*host, st.created.count(host->ip) ? &st.created[host->ip] : nullptr};
            if (!may_write(*host, sess, p) || !fs.is_dir(parent_of(p)) || host->file(p)) {
                last = fail("sh: 1: cannot create " + redirect_out + ": Permission denied", CommandFailure::Runtime, 2);
            } else {
                auto& slot = st.created[host->ip][p];
                slot = append ? slot + last.output + "\n" : last.output + "\n";
                last.output.clear();
            }
        }
        if (any && !skip) {
            if (!last.output.empty()) {
                if (!out.empty()) out += "\n";
                out += last.output;
            }
            total.exit_status = last.exit_status;
            if (last.failure != CommandFailure::None) total.failure = last.failure;
            for (auto& e : last.events) total.events.push_back(e);
        }
        skip = false;
        if (i < tokens.size()) {
            const std::string sep = tokens[i].text;
            if (sep == "&&" && last.exit_status != 0) skip = true;
            if (sep == "||" && last.exit_status == 0) skip = true;
            ++i;
        }
    }
    total.output = out;
    return total;
}

// ---- attack box ------------------------------------------------------------

Result local_command(const SimEnv& env, SessionState& st, std::string_view line) {
    auto w = words_of(line);
    if (w.empty()) return ok("");
    if (w[0] == "sudo" && w.size() > 1) {
        w.erase(w.begin());
        std::string rest = text::join(w, " ");
        return local_command(env, st, rest);
    }
    const std::string verb = w[0];
    if (verb == "nmap") return ok(sim_scan(*env.model, line));
    if (verb == "msfconsole") {
        st.mode = ConsoleMode::Console;
        bool quiet = false;
        std::string script;
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (w[i] == "-q" || w[i] == "--quiet") quiet = true;
            else if ((w[i] == "-x" || w[i] == "--execute-command") && i + 1 < w.size()) script = w[++i];
        }
        Result r = ok(quiet ? "" : "[*] Starting the Metasploit Framework console...");
        if (!script.empty()) {
            std::size_t pos = 0;
            while (pos <= script.size()) {
                auto semi = script.find(';', pos);
                std::string one(text::trim(script.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos)));
                if (!one.empty()) {
                    Result sub = sim_command(env, st, one);
                    if (!sub.output.empty()) r.output += (r.output.empty() ? "" : "\n") + sub.output;
                    if (sub.failure != CommandFailure::None) {
                        r.failure = sub.failure;
                        r.exit_status = sub.exit_status;
                    }
                    for (auto& e : sub.events) r.events.push_back(e);
                }
                if (semi == std::string::npos) break;
                pos = semi + 1;
            }
        }
        return r;
    }
    if (kConsoleVerbs.count(text::to_lower(verb))) {
        // console verbs typed at the prompt: the console is started implicitly
        st.mode = ConsoleMode::Console;
        return console_command(env, st, line);
    }
    if (kClients.count(verb) || kLocalClients.count(verb)) return network_client(env, env.agent_ip, w, 0);
    if (verb == "whoami") return ok("root");
    if (verb == "id") return ok("uid=0(root) gid=0(root) groups=0(root)");
    if (verb == "pwd") return ok("/root");
    if (verb == "hostname") return ok("kali");
    if (verb == "uname") return ok(w.size() > 1 && w[1] == "-a" ? "Linux kali 6.1.0-kali5-amd64 #1 SMP PREEMPT_DYNAMIC x86_64 GNU/Linux" : "Linux");
    if (verb == "echo") return ok(join_words(w, 1));
    if (verb == "ls" || verb == "cd" || verb == "clear") return ok("");
    if (verb == "cat") {
        std::string p = w.size() > 1 ? w[1] : "";
        return fail("cat: " + p + ": No such file or directory", CommandFailure::Runtime);
    }
    return fail("bash: " + verb + ": command not found", CommandFailure::UnknownCommand, 127);
}

}  // namespace

bool is_scan_command(std::string_view command) {
    auto w = text::split_words(command);
    std::size_t i = 0;
    if (!w.empty() && w[0] == "sudo") ++i;
    return i < w.size() && (w[i] == "nmap" || w[i] == "db_nmap");
}

std::string sim_scan(const NetworkModel& model, std::string_view command) {
    auto w = words_of(command);
    bool version = false, all_ports = false;
    std::optional<std::set<int>> ports;
    TargetSet targets;
    std::size_t i = 0;
    if (i < w.size() && w[i] == "sudo") ++i;
    ++i;  // nmap
    for (; i < w.size(); ++i) {
        const std::string& a = w[i];
        if (a == "-sV" || a == "-A" || a.starts_with("-sCV") || a == "-sVC") {
            version = true;
        } else if (a.starts_with("-p") && a.size() > 2) {
            ports = parse_ports(std::string_view(a).substr(2), all_ports);
            if (!ports) return "Error #487: Your port specifications are illegal.  Example of proper form: \"-100,200-1024,T:3000-4000,U:60000-\"\nQUITTING!";
        } else if (a == "-p" && i + 1 < w.size()) {
            ports = parse_ports(w[++i], all_ports);
            if (!ports) return "Error #487: Your port specifications are illegal.  Example of proper form: \"-100,200-1024,T:3000-4000,U:60000-\"\nQUITTING!";
        } else if (kNmapValueFlags.count(a)) {
            ++i;
        } else if (a.starts_with("-")) {
            continue;
        } else {
            add_target(model, a, targets);
        }
    }

    std::vector<std::string> lines{kScanStart};
    for (const auto& u : targets.unresolved) lines.push_back("Failed to resolve \"" + u + "\".");
    if (targets.addresses == 0) {
        lines.push_back("WARNING: No targets were specified, so 0 hosts scanned.");
        lines.push_back("Nmap done: 0 IP addresses (0 hosts up) scanned in 0.04 seconds");
        return text::join(lines, "\n");
    }
    std::size_t scanned = all_ports ? 65535 : (ports ? ports->size() : 1000);
    std::set<const Host*> seen;
    std::size_t up = 0;
    for (const Host* h : targets.hosts) {
        if (!seen.insert(h).second) continue;
        ++up;
        lines.push_back("Nmap scan report for " + h->name + " (" + h->ip + ")");
        lines.push_back(kLatency);
        std::vector<const Service*> open;
        for (const auto& s : h->services) {
            if (all_ports || !ports || ports->count(s.port)) open.push_back(&s);
        }
        if (open.empty()) {
            lines.push_back("All " + std::to_string(scanned) + " scanned ports on " + h->name + " (" + h->ip +
                            ") are in ignored states.");
            lines.push_back("Not shown: " + std::to_string(scanned) + " closed tcp ports (reset)");
        } else {
            if (scanned > open.size()) {
                lines.push_back("Not shown: " + std::to_string(scanned - open.size()) + " closed tcp ports (reset)");
            }
            lines.push_back(version ? "PORT STATE SERVICE VERSION" : "PORT STATE SERVICE");
            for (const Service* s : open) lines.push_back(service_line(*s, version));
        }
        lines.push_back("MAC Address: " + h->mac + " (Unknown)");
        if (version && !open.empty()) lines.push_back("Service Info: OS: " + h->os + "; CPE: cpe:/o:linux:linux_kernel");
    }
    if (up == 0) lines.push_back("Note: Host seems down. If it is really up, but blocking our ping probes, try -Pn");
    if (version && up > 0) {
        lines.push_back("");
        lines.push_back("Service detection performed. Please report any incorrect results at https://nmap.org/submit/ .");
    }
    std::string addr = std::to_string(targets.addresses) + (targets.addresses == 1 ? " IP address" : " IP addresses");
    std::string hosts = std::to_string(up) + (up == 1 ? " host up" : " hosts up");
    std::string secs = up == 0 ? "3.04" : (version ? "153.07" : "13.10");
    lines.push_back("Nmap done: " + addr + " (" + hosts + ") scanned in " + secs + " seconds");
    return text::join(lines, "\n");
}

SimCommandResult sim_shell_read(const NetworkModel& model, const SimSession& session, std::string_view path,
                                const SessionState* state) {
    const Host* host = model.host_by_ip(session.host_ip);
    if (!host) return fail("cat: " + std::string(path) + ": No such file or directory", CommandFailure::Runtime);
    const std::map<std::string, std::string>* created = nullptr;
    if (state) {
        if (auto it = state->created.find(host->ip); it != state->created.end()) created = &it->second;
    }
    FsView fs{*host, created};
    std::string p = normalize_path(session.cwd, path);
    std::string shown(path);
    if (auto f = fs.file(p)) {
        if ((f->second || root_only_dir(p)) && session.privilege != "root") {
            return fail("cat: " + shown + ": Permission denied", CommandFailure::Runtime);
        }
        std::string content = f->first;
        while (!content.empty() && content.back() == '\n') content.pop_back();
        return ok(content);
    }
    if (fs.is_dir(p)) return fail("cat: " + shown + ": Is a directory", CommandFailure::Runtime);
    if (root_only_dir(p) && session.privilege != "root") {
        return fail("cat: " + shown + ": Permission denied", CommandFailure::Runtime);
    }
    return fail("cat: " + shown + ": No such file or directory", CommandFailure::Runtime);
}

SimCommandResult sim_command(const SimEnv& env, SessionState& state, std::string_view command) {
    auto line = text::trim(command);
    if (line.empty()) return ok("");
    switch (state.mode) {
        case ConsoleMode::Local: return local_command(env, state, line);
        case ConsoleMode::Console: return console_command(env, state, line);
        case ConsoleMode::Shell: return shell_command(env, state, line);
    }
    return ok("");
}

ConsoleOutcome sim_console(const SimEnv& env, SessionState state, const std::vector<std::string>& commands) {
    ConsoleOutcome out;
    for (const auto& c : commands) {
        auto r = sim_command(env, state, c);
        if (!r.output.empty()) {
            if (!out.output.empty()) out.output += "\n";
            out.output += r.output;
        }
        out.results.push_back(std::move(r));
    }
    out.state = std::move(state);
    return out;
}

}  // namespace redchain
