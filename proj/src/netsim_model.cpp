#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "redchain/error.hpp"
#include "redchain/netsim.hpp"
#include "redchain/text.hpp"

namespace redchain {

namespace {

using json = nlohmann::json;

constexpr std::string_view kSchema = "redchain.scenario/1";

// Seeded contents are synthetic; the shapes follow the standard file formats.
const char* kPasswd =
    "root:x:0:0:root:/root:/bin/bash\n"
    "daemon:x:1:1:daemon:/usr/sbin:/bin/sh\n"
    "bin:x:2:2:bin:/bin:/bin/sh\n"
    "sys:x:3:3:sys:/dev:/bin/sh\n"
    "sync:x:4:65534:sync:/bin:/bin/sync\n"
    "ftp:x:107:65534::/home/ftp:/bin/false\n"
    "postgres:x:108:117:PostgreSQL administrator,,,:/var/lib/postgresql:/bin/bash\n"
    "mysql:x:109:118:MySQL Server,,,:/var/lib/mysql:/bin/false\n"
    "msfadmin:x:1000:1000:msfadmin,,,:/home/msfadmin:/bin/bash\n"
    "user:x:1001:1001:just a user,111,,:/home/user:/bin/bash\n"
    "service:x:1002:1002:,,,:/home/service:/bin/bash\n"
    "nobody:x:65534:65534:nobody:/nonexistent:/bin/sh\n";

const char* kShadow =
    "root:$1$simroot0$Qk9uZVJlYWxIYXNoMDAw.:19057:0:99999:7:::\n"
    "daemon:*:14684:0:99999:7:::\n"
    "bin:*:14684:0:99999:7:::\n"
    "sys:$1$simsys00$U3ludGhldGljU3lzMDAw.:14742:0:99999:7:::\n"
    "sync:*:14684:0:99999:7:::\n"
    "ftp:*:14684:0:99999:7:::\n"
    "postgres:$1$simpg000$U3ludGhldGljUGcwMDAw:14685:0:99999:7:::\n"
    "mysql:!:14685:0:99999:7:::\n"
    "msfadmin:$1$simmsf00$U3ludGhldGljTXNmMDAw:14684:0:99999:7:::\n"
    "user:$1$simusr00$U3ludGhldGljVXNyMDAw:14699:0:99999:7:::\n"
    "service:$1$simsvc00$U3ludGhldGljU3ZjMDAw:14715:0:99999:7:::\n"
    "nobody:*:14684:0:99999:7:::\n";

const char* kAuthLog =
    "Mar  6 19:40:02 target1 sshd[4512]: Accepted password for msfadmin from 172.16.2.10 port 51522 ssh2\n"
    "Mar  6 19:41:17 target1 sudo: msfadmin : TTY=pts/0 ; PWD=/home/msfadmin ; USER=root ; COMMAND=/bin/bash\n"
    "Mar  6 19:47:55 target1 sshd[4630]: Failed password for root from 172.16.2.10 port 51530 ssh2\n";

const char* kRootHistory =
    "cd /root\n"
    "vi reset_logs.sh\n"
    "mysql -u root\n"
    "tar -czf /root/backup.tgz /var/www\n";

const char* kUserHistory =
    "ls -la\n"
    "sudo su\n"
    "cat notes.txt\n";

std::vector<SimFile> standard_files() {
    return {
        {"/etc/passwd", kPasswd, false},
        {"/etc/shadow", kShadow, true},
        {"/etc/hostname", "target1\n", false},
        {"/var/log/auth.log", kAuthLog, true},
        {"/root/.bash_history", kRootHistory, true},
        {"/home/msfadmin/.bash_history", kUserHistory, false},
        {"/home/msfadmin/notes.txt", "db backup runs nightly from /root/backup.tgz\n", false},
        {"/home/user/.profile", "# ~/.profile: executed by the command interpreter for login shells.\n", false},
    };
}

struct ServiceSpec {
    std::string key;    // single-service:<key>
    std::string label;  // report row label
    Service service;
};

std::vector<Vulnerability> catalog() {
    return {
        {"vsftpd-234-backdoor", "vsftpd 2.3.4 source backdoor opens a root shell on port 6200"},
        {"ssh-weak-password", "weak account passwords over SSH; needs credential guessing"},
        {"telnet-default-login", "default credentials shown in the telnet banner; needs a login"},
        {"web-app-flaws", "vulnerable web applications behind Apache; needs page-level attacks"},
        {"unrealircd-3281-backdoor", "UnrealIRCd 3.2.8.1 trojaned source executes commands"},
        {"samba-usermap-script", "Samba username map script command injection"},
        {"mysql-empty-root", "MySQL root account with an empty password"},
        {"postgres-weak-default", "PostgreSQL postgres/postgres default login allows payload upload"},
        {"rlogin-root-trust", "rlogind trusts remote root without a password"},
    };
}

std::vector<ServiceSpec> table_services() {
    return {
        {"vsftpd", "vsftpd 2.3.4", {21, "tcp", "ftp", "vsftpd", "2.3.4", {"vsftpd-234-backdoor"}}},
        {"openssh", "OpenSSH 4.7", {22, "tcp", "ssh", "OpenSSH", "4.7p1 Debian 8ubuntu1", {"ssh-weak-password"}}},
        {"telnet", "Telnet", {23, "tcp", "telnet", "Linux telnetd", "", {"telnet-default-login"}}},
        {"apache", "Apache 2.2.8", {80, "tcp", "http", "Apache httpd", "2.2.8", {"web-app-flaws"}}},
        {"unrealircd", "UnrealIRC", {6667, "tcp", "irc", "UnrealIRCd", "3.2.8.1", {"unrealircd-3281-backdoor"}}},
        {"samba", "Samba 4.X", {139, "tcp", "netbios-ssn", "Samba smbd", "3.X - 4.X", {"samba-usermap-script"}}},
        {"mysql", "MySQL 5.0.51", {3306, "tcp", "mysql", "MySQL", "5.0.51a-3ubuntu5", {"mysql-empty-root"}}},
        {"postgresql",
         "PostgreSQL 8.3.7",
         {5432, "tcp", "postgresql", "PostgreSQL DB", "8.3.0 - 8.3.7", {"postgres-weak-default"}}},
        {"rlogin", "Port 513 \"Login\"", {513, "tcp", "login", "OpenBSD or Solaris rlogind", "", {"rlogin-root-trust"}}},
        {"smtp", "SMTP", {25, "tcp", "smtp", "Postfix smtpd", "", {}}},
    };
}

// Module paths follow the framework's directory layout; effects are chosen so
// that each service's qualitative outcome is reachable.
std::vector<ExploitEntry> exploit_db() {
    using E = ExploitEffect;
    return {
        {"exploit/unix/ftp/vsftpd_234_backdoor", "vsftpd", "2.3.4", 21, {"cmd/unix/interact"}, E::RootShell,
         "vsftpd-234-backdoor", "root", ""},
        {"exploit/multi/ssh/sshexec", "OpenSSH", "*", 22, {"linux/x86/meterpreter/reverse_tcp", "cmd/unix/reverse"},
         E::None, "", "root", ""},
        {"exploit/multi/http/php_cgi_arg_injection", "Apache httpd", "2.2.8", 80,
         {"php/meterpreter/reverse_tcp", "php/reverse_php"}, E::None, "", "root", ""},
        {"exploit/unix/irc/unreal_ircd_3281_backdoor", "UnrealIRCd", "3.2.8.1", 6667,
         {"cmd/unix/reverse", "cmd/unix/bind_perl", "cmd/unix/reverse_perl"}, E::RootShell, "unrealircd-3281-backdoor",
         "root", ""},
        {"exploit/multi/samba/usermap_script", "Samba smbd", "3.X - 4.X", 139,
         {"cmd/unix/reverse", "cmd/unix/reverse_netcat", "cmd/unix/bind_netcat"}, E::RootShell, "samba-usermap-script",
         "root", ""},
        {"auxiliary/scanner/mysql/mysql_login", "MySQL", "5.0.51*", 3306, {}, E::CredentialLeak, "mysql-empty-root",
         "root", "root:"},
        {"exploit/linux/mysql/mysql_yassl_getname", "MySQL", "5.0.45*", 3306, {"linux/x86/shell_reverse_tcp"}, E::RootShell,
         "", "root", ""},
        {"exploit/linux/postgres/postgres_payload", "PostgreSQL DB", "8.3.0 - 8.3.7", 5432,
         {"linux/x86/meterpreter/reverse_tcp", "linux/x86/shell/reverse_tcp"}, E::UserShell, "postgres-weak-default",
         "postgres", ""},
        {"auxiliary/scanner/rservices/rlogin_login", "OpenBSD or Solaris rlogind", "", 513, {}, E::RootShell,
         "rlogin-root-trust", "root", ""},
        {"exploit/unix/smtp/exim4_string_format", "Exim smtpd", "4.6*", 25, {"cmd/unix/reverse_perl"}, E::RootShell, "",
         "root", ""},
        {"exploit/unix/misc/distcc_exec", "distccd", "*", 3632, {"cmd/unix/reverse", "cmd/unix/bind_perl"},
         E::RootShell, "", "daemon", ""},
    };
}

Host target_host(std::vector<Service> services) {
    Host h;
    h.name = "target1";
    h.ip = "172.16.2.3";
    h.mac = "02:42:AC:10:02:03";
    h.os = "Linux";
    h.services = std::move(services);
    std::sort(h.services.begin(), h.services.end(), [](const Service& a, const Service& b) { return a.port < b.port; });
    h.files = standard_files();
    return h;
}

NetworkModel base_model(std::string name, std::string description, std::vector<Service> services) {
    NetworkModel m;
    m.name = std::move(name);
    m.description = std::move(description);
    m.vulnerabilities = catalog();
    m.hosts.push_back(target_host(std::move(services)));
    m.exploits = exploit_db();
    validate_network(m, "builtin:" + m.name);
    return m;
}

bool valid_mac(std::string_view mac) {
    if (mac.size() != 17) return false;
    for (std::size_t i = 0; i < mac.size(); ++i) {
        if (i % 3 == 2) {
            if (mac[i] != ':') return false;
        } else if (!std::isxdigit(static_cast<unsigned char>(mac[i]))) {
            return false;
        }
    }
    return true;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->get<T>();
}

}  // namespace

std::string_view to_string(ExploitEffect effect) {
    switch (effect) {
        case ExploitEffect::RootShell: return "RootShell";
        case ExploitEffect::UserShell: return "UserShell";
        case ExploitEffect::CredentialLeak: return "CredentialLeak";
        case ExploitEffect::None: return "None";
    }
    return "None";
}

std::optional<ExploitEffect> parse_exploit_effect(std::string_view text) {
    for (auto e : {ExploitEffect::RootShell, ExploitEffect::UserShell, ExploitEffect::CredentialLeak,
                   ExploitEffect::None}) {
        if (text == to_string(e)) return e;
    }
    return std::nullopt;
}

const Service* Host::service_on(int port) const {
    for (const auto& s : services) {
        if (s.port == port) return &s;
    }
    return nullptr;
}

const SimFile* Host::file(std::string_view path) const {
    for (const auto& f : files) {
        if (f.path == path) return &f;
    }
    return nullptr;
}

bool ExploitEntry::matches(const Service& service) const {
    if (!text::iequals(product, service.product)) return false;
    if (!version.empty() && version.back() == '*') {
        std::string_view prefix(version.data(), version.size() - 1);
        return std::string_view(service.version).substr(0, prefix.size()) == prefix;
    }
    return version == service.version;
}

bool ExploitEntry::is_auxiliary() const { return module.starts_with("auxiliary/"); }

const Host* NetworkModel::host_by_ip(std::string_view ip) const {
    for (const auto& h : hosts) {
        if (h.ip == ip) return &h;
    }
    return nullptr;
}

const Host* NetworkModel::host_by_name_or_ip(std::string_view target) const {
    if (const Host* h = host_by_ip(target)) return h;
    for (const auto& h : hosts) {
        if (text::iequals(h.name, target)) return &h;
    }
    return nullptr;
}

const ExploitEntry* NetworkModel::exploit(std::string_view module) const {
    for (const auto& e : exploits) {
        if (e.module == module) return &e;
    }
    return nullptr;
}

bool NetworkModel::listener(std::string_view ip, int port) const {
    return std::any_of(exfil_listeners.begin(), exfil_listeners.end(),
                       [&](const ExfilListener& l) { return l.ip == ip && l.port == port; });
}

void validate_network(NetworkModel& model, const std::string& source) {
    std::set<std::string> vuln_ids;
    for (const auto& v : model.vulnerabilities) {
        if (v.id.empty()) throw LoadError(source, 0, "vulnerability with an empty id");
        if (!vuln_ids.insert(v.id).second) throw LoadError(source, 0, "duplicate vulnerability '" + v.id + "'");
    }
    std::set<std::string> ips, names;
    for (const auto& h : model.hosts) {
        if (!is_valid_ip(h.ip)) throw LoadError(source, 0, "host '" + h.name + "' has invalid IP '" + h.ip + "'");
        if (!ips.insert(h.ip).second) throw LoadError(source, 0, "duplicate IP " + h.ip + " (host '" + h.name + "')");
        if (h.name.empty()) throw LoadError(source, 0, "host " + h.ip + " has no name");
        if (!names.insert(text::to_lower(h.name)).second) throw LoadError(source, 0, "duplicate host name '" + h.name + "'");
        if (!valid_mac(h.mac)) throw LoadError(source, 0, "host '" + h.name + "' has invalid MAC '" + h.mac + "'");
        std::set<int> ports;
        for (const auto& s : h.services) {
            if (s.port <= 0 || s.port > 65535) {
                throw LoadError(source, 0, "host '" + h.name + "' service port " + std::to_string(s.port) + " out of range");
            }
            if (!ports.insert(s.port).second) {
                throw LoadError(source, 0, "duplicate port " + std::to_string(s.port) + " on host '" + h.name + "'");
            }
            for (const auto& v : s.vulnerabilities) {
                if (!vuln_ids.count(v)) {
                    throw LoadError(source, 0, "service " + h.name + ":" + std::to_string(s.port) +
                                                   " references unknown vulnerability '" + v + "'");
                }
            }
        }
        std::set<std::string> paths;
        for (const auto& f : h.files) {
            if (f.path.empty() || f.path.front() != '/') {
                throw LoadError(source, 0, "host '" + h.name + "' file path '" + f.path + "' is not absolute");
            }
            if (!paths.insert(f.path).second) {
                throw LoadError(source, 0, "duplicate file " + f.path + " on host '" + h.name + "'");
            }
        }
    }
    std::set<std::string> modules;
    std::map<std::string, std::string> referenced;
    for (const auto& e : model.exploits) {
        if (e.module.empty() || e.module.find('/') == std::string::npos) {
            throw LoadError(source, 0, "exploit module '" + e.module + "' is not a module path");
        }
        if (!modules.insert(e.module).second) throw LoadError(source, 0, "duplicate exploit module '" + e.module + "'");
        if (e.vulnerability.empty()) continue;
        if (!vuln_ids.count(e.vulnerability)) {
            throw LoadError(source, 0, "exploit '" + e.module + "' references unknown vulnerability '" + e.vulnerability + "'");
        }
        auto [it, fresh] = referenced.emplace(e.vulnerability, e.module);
        if (!fresh) {
            throw LoadError(source, 0, "vulnerability '" + e.vulnerability + "' is referenced by both '" + it->second +
                                           "' and '" + e.module + "'");
        }
    }
    for (const auto& l : model.exfil_listeners) {
        if (!is_valid_ip(l.ip)) throw LoadError(source, 0, "exfil listener has invalid IP '" + l.ip + "'");
        if (l.port <= 0 || l.port > 65535) throw LoadError(source, 0, "exfil listener port out of range");
    }
    model.orphan_vulnerabilities.clear();
    for (const auto& v : model.vulnerabilities) {
        if (!referenced.count(v.id)) model.orphan_vulnerabilities.push_back(v.id);
    }
}

NetworkModel parse_network(std::string_view json_text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        // json reports a byte offset; turn it into a line for the message
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, json_text.size()); ++i) line += json_text[i] == '\n';
        throw LoadError(source, line, e.what());
    }
    NetworkModel m;
    try {
        if (get_or<std::string>(doc, "schema", "") != kSchema) {
            throw LoadError(source, 0, "schema must be \"" + std::string(kSchema) + "\"");
        }
        m.name = doc.at("name").get<std::string>();
        m.description = get_or<std::string>(doc, "description", "");
        for (const auto& v : doc.value("vulnerabilities", json::array())) {
            m.vulnerabilities.push_back({v.at("id").get<std::string>(), get_or<std::string>(v, "description", "")});
        }
        for (const auto& hj : doc.at("hosts")) {
            Host h;
            h.name = hj.at("name").get<std::string>();
            h.ip = hj.at("ip").get<std::string>();
            h.mac = hj.at("mac").get<std::string>();
            h.os = get_or<std::string>(hj, "os", "Linux");
            for (const auto& sj : hj.value("services", json::array())) {
                Service s;
                s.port = sj.at("port").get<int>();
                s.protocol = get_or<std::string>(sj, "protocol", "tcp");
                s.name = sj.at("name").get<std::string>();
                s.product = get_or<std::string>(sj, "product", "");
                s.version = get_or<std::string>(sj, "version", "");
                s.vulnerabilities = sj.value("vulnerabilities", std::vector<std::string>{});
                h.services.push_back(std::move(s));
            }
            for (const auto& fj : hj.value("files", json::array())) {
                h.files.push_back({fj.at("path").get<std::string>(), get_or<std::string>(fj, "content", ""),
                                   get_or<bool>(fj, "root_only", false)});
            }
            m.hosts.push_back(std::move(h));
        }
        for (const auto& ej : doc.value("exploits", json::array())) {
            ExploitEntry e;
            e.module = ej.at("module").get<std::string>();
            e.product = ej.at("product").get<std::string>();
            e.version = get_or<std::string>(ej, "version", "");
            e.default_port = get_or<int>(ej, "port", 0);
            e.payloads = ej.value("payloads", std::vector<std::string>{});
            auto effect = parse_exploit_effect(get_or<std::string>(ej, "effect", "None"));
            if (!effect) throw LoadError(source, 0, "exploit '" + e.module + "' has unknown effect");
            e.effect = *effect;
            e.vulnerability = get_or<std::string>(ej, "vulnerability", "");
            e.user = get_or<std::string>(ej, "user", "root");
            e.credential = get_or<std::string>(ej, "credential", "");
            m.exploits.push_back(std::move(e));
        }
        for (const auto& lj : doc.value("exfil_listeners", json::array())) {
            m.exfil_listeners.push_back(
                {lj.at("ip").get<std::string>(), lj.at("port").get<int>(), get_or<std::string>(lj, "protocol", "")});
        }
    } catch (const json::exception& e) {
        throw LoadError(source, 0, std::string("scenario field error: ") + e.what());
    }
    validate_network(m, source);
    return m;
}

NetworkModel load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path.string(), 0, "cannot open scenario file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str(), path.string());
}

NetworkModel load_network(const std::string& spec) {
    if (spec.starts_with("builtin:")) return builtin_network(std::string_view(spec).substr(8));
    return load_network(std::filesystem::path(spec));
}

std::string network_to_json(const NetworkModel& m) {
    json doc;
    doc["schema"] = kSchema;
    doc["name"] = m.name;
    doc["description"] = m.description;
    doc["vulnerabilities"] = json::array();
    for (const auto& v : m.vulnerabilities) doc["vulnerabilities"].push_back({{"id", v.id}, {"description", v.description}});
    doc["hosts"] = json::array();
    for (const auto& h : m.hosts) {
        json hj = {{"name", h.name}, {"ip", h.ip}, {"mac", h.mac}, {"os", h.os}};
        hj["services"] = json::array();
        for (const auto& s : h.services) {
            hj["services"].push_back({{"port", s.port},
                                      {"protocol", s.protocol},
                                      {"name", s.name},
                                      {"product", s.product},
                                      {"version", s.version},
                                      {"vulnerabilities", s.vulnerabilities}});
        }
        hj["files"] = json::array();
        for (const auto& f : h.files) {
            hj["files"].push_back({{"path", f.path}, {"content", f.content}, {"root_only", f.root_only}});
        }
        doc["hosts"].push_back(std::move(hj));
    }
    doc["exploits"] = json::array();
    for (const auto& e : m.exploits) {
        doc["exploits"].push_back({{"module", e.module},
                                   {"product", e.product},
                                   {"version", e.version},
                                   {"port", e.default_port},
                                   {"payloads", e.payloads},
                                   {"effect", std::string(to_string(e.effect))},
                                   {"vulnerability", e.vulnerability},
                                   {"user", e.user},
                                   {"credential", e.credential}});
    }
    doc["exfil_listeners"] = json::array();
    for (const auto& l : m.exfil_listeners) {
        doc["exfil_listeners"].push_back({{"ip", l.ip}, {"port", l.port}, {"protocol", l.protocol}});
    }
    return doc.dump(2) + "\n";
}

std::vector<std::string> single_service_keys() {
    std::vector<std::string> keys;
    for (const auto& s : table_services()) keys.push_back(s.key);
    return keys;
}

std::vector<std::string> builtin_network_names() {
    std::vector<std::string> names{"metasploitable-like"};
    for (const auto& k : single_service_keys()) names.push_back("single-service:" + k);
    names.push_back("no-ports");
    return names;
}

NetworkModel builtin_network(std::string_view name) {
    if (name == "metasploitable-like") {
        std::vector<Service> all;
        for (const auto& s : table_services()) all.push_back(s.service);
        return base_model("metasploitable-like", "one target exposing all ten evaluated services", std::move(all));
    }
    if (name == "no-ports") return base_model("No Ports Open", "target reachable but every port closed", {});
    if (name.starts_with("single-service:")) {
        auto key = name.substr(15);
        for (const auto& s : table_services()) {
            if (s.key == key) return base_model(s.label, "only " + s.service.product + " exposed", {s.service});
        }
    }
    throw LoadError("builtin:" + std::string(name), 0, "unknown built-in scenario");
}

}  // namespace redchain
