#include "selfdbg/config.hpp"
#include "selfdbg/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace selfdbg {

std::string_view to_string(SwitchMethod m) noexcept {
    switch (m) {
        case SwitchMethod::SegvLoadStore: return "segv-rw";
        case SwitchMethod::SegvExec: return "segv-x";
        case SwitchMethod::Trap: return "trap";
    }
    return "?";
}

std::optional<SwitchMethod> method_from_string(std::string_view s) noexcept {
    if (s == "segv-rw") return SwitchMethod::SegvLoadStore;
    if (s == "segv-x") return SwitchMethod::SegvExec;
    if (s == "trap") return SwitchMethod::Trap;
    return std::nullopt;
}

FaultKind fault_kind_of(SwitchMethod m) noexcept {
    switch (m) {
        case SwitchMethod::SegvLoadStore: return FaultKind::SegvLoadStore;
        case SwitchMethod::SegvExec: return FaultKind::SegvExec;
        case SwitchMethod::Trap: return FaultKind::TrapReference;
    }
    return FaultKind::SegvLoadStore;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void syntax(std::size_t line, const std::string& what) {
    throw Error(Errc::ConfigSyntax, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        const auto item = trim(v.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(tmp.c_str(), &end, 0);
    if (errno != 0 || end == tmp.c_str() || *end != '\0') return std::nullopt;
    return v;
}

std::optional<bool> parse_bool(std::string_view s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    return std::nullopt;
}

struct Entry {
    std::string value;
    std::size_t line;
};

std::map<std::string, Entry> parse_entries(std::string_view text) {
    std::map<std::string, Entry> out;
    std::string section;
    std::size_t lineno = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') syntax(lineno, "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) syntax(lineno, "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) syntax(lineno, "expected key = value");
        const auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) syntax(lineno, "empty key");
        if (value.size() >= 2 && value.front() == '"') {
            if (value.back() != '"') syntax(lineno, "unterminated string");
            value = value.substr(1, value.size() - 2);
        }
        const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
        if (out.count(full)) syntax(lineno, "duplicate key " + full);
        out[full] = Entry{std::string(value), lineno};
    }
    return out;
}

std::vector<AddressRange> parse_ranges(const Entry& e) {
    std::vector<AddressRange> out;
    for (const auto& item : split_list(e.value)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) syntax(e.line, "range must be base:length");
        const auto base = parse_u64(std::string_view(item).substr(0, colon));
        const auto len = parse_u64(std::string_view(item).substr(colon + 1));
        if (!base || !len || *len == 0) syntax(e.line, "bad range " + item);
        out.push_back({*base, *len});
    }
    if (out.empty()) syntax(e.line, "empty range list");
    return out;
}

sim::Scenario parse_scenario(const std::string& name, const std::map<std::string, Entry>& entries) {
    sim::Scenario sc;
    sc.name = name;
    const std::string prefix = "scenario." + name + ".";
    for (const auto& [key, e] : entries) {
        if (key.rfind(prefix, 0) != 0) continue;
        const std::string field = key.substr(prefix.size());
        if (field == "program") {
            for (const auto& step : split_list(e.value)) {
                if (step == "switch") sc.program.push_back(sim::Step::Switch);
                else if (step == "exit") sc.program.push_back(sim::Step::Exit);
                else if (step == "fault") sc.program.push_back(sim::Step::GenuineFault);
                else syntax(e.line, "unknown program step " + step);
            }
        } else if (field == "inject") {
            for (const auto& item : split_list(e.value)) {
                const auto at = item.find('@');
                if (at == std::string::npos) syntax(e.line, "injection must be SIGNAL@target");
                const std::string what = item.substr(0, at);
                const std::string target = item.substr(at + 1);
                sim::Injection inj;
                if (target == "app") inj.target = sim::Target::App;
                else if (target == "selfdebugger") inj.target = sim::Target::SelfDebugger;
                else if (target == "catcher") inj.target = sim::Target::Catcher;
                else if (target == "thrower") inj.target = sim::Target::Thrower;
                else if (target == "both") inj.target = sim::Target::Both;
                else syntax(e.line, "unknown target " + target);
                if (what == "fault") {
                    inj.kind = sim::Injection::Kind::CatcherFault;
                } else if (auto sig = sim::sig_from_string(what)) {
                    inj.signal = *sig;
                } else {
                    syntax(e.line, "unknown signal " + what);
                }
                sc.injections.push_back(inj);
            }
        } else if (field == "suppress_child_notices" || field == "block_when_catcher" || field == "exitkill") {
            const auto b = parse_bool(e.value);
            if (!b) syntax(e.line, "expected boolean");
            if (field == "suppress_child_notices") sc.policy.suppress_child_notices = *b;
            else if (field == "block_when_catcher") sc.policy.block_when_catcher = *b;
            else sc.policy.exitkill = *b;
        } else if (field == "expect") {
            if (e.value == "Deadlock") sc.expected = sim::VerdictKind::Deadlock;
            else if (e.value == "DeadlockFree") sc.expected = sim::VerdictKind::DeadlockFree;
            else syntax(e.line, "expect must be Deadlock or DeadlockFree");
        } else {
            syntax(e.line, "unknown scenario field " + field);
        }
    }
    if (sc.program.empty()) throw Error(Errc::ConfigSyntax, "scenario " + name + " has no program");
    if (sc.injections.size() > 16) throw Error(Errc::ConfigSyntax, "scenario " + name + " has too many injections");
    return sc;
}

}  // namespace

std::map<std::string, std::string> parse_config_entries(std::string_view text) {
    std::map<std::string, std::string> out;
    for (auto& [k, e] : parse_entries(text)) out[k] = e.value;
    return out;
}

ProtectionConfig parse_config(std::string_view text, ProtectionConfig cfg) {
    const auto entries = parse_entries(text);
    std::vector<std::string> scenario_names;

    auto u64 = [](const Entry& e) {
        const auto v = parse_u64(e.value);
        if (!v) syntax(e.line, "expected integer, got '" + e.value + "'");
        return *v;
    };
    auto boolean = [](const Entry& e) {
        const auto v = parse_bool(e.value);
        if (!v) syntax(e.line, "expected boolean, got '" + e.value + "'");
        return *v;
    };

    for (const auto& [key, e] : entries) {
        if (key.rfind("scenario.", 0) == 0) {
            const auto rest = key.substr(9);
            const auto dot = rest.find('.');
            if (dot == std::string::npos) syntax(e.line, "scenario keys need a name");
            const auto name = rest.substr(0, dot);
            if (scenario_names.empty() || scenario_names.back() != name) scenario_names.push_back(name);
            continue;
        }
        if (key == "namespace.load_store") cfg.ns.load_store = parse_ranges(e);
        else if (key == "namespace.exec") cfg.ns.exec = parse_ranges(e);
        else if (key == "codec.mask") cfg.mask = u64(e);
        else if (key == "codec.key") cfg.key = u64(e);
        else if (key == "codec.seed") cfg.seed = u64(e);
        else if (key == "bootstrap.probe") cfg.probe = boolean(e);
        else if (key == "bootstrap.probe_samples") cfg.probe_samples = u64(e);
        else if (key == "bootstrap.handshake_timeout_ms") cfg.handshake_timeout = std::chrono::milliseconds(u64(e));
        else if (key == "bootstrap.reciprocal") cfg.reciprocal = boolean(e);
        else if (key == "bootstrap.attach_all_threads") cfg.attach_all_threads = boolean(e);
        else if (key == "bootstrap.suppress_child_notices") cfg.suppress_child_notices = boolean(e);
        else if (key == "bootstrap.event_fd") cfg.event_fd = static_cast<int>(u64(e));
        else if (key == "sites.method") {
            const auto m = method_from_string(e.value);
            if (!m) syntax(e.line, "method must be segv-rw, segv-x or trap");
            cfg.method = *m;
        } else if (key == "sites.flavor") {
            if (e.value == "inline") cfg.flavor = SiteFlavor::Inline;
            else if (e.value == "reused") cfg.flavor = SiteFlavor::ReusedCode;
            else syntax(e.line, "flavor must be inline or reused");
        } else if (key == "bench.switch_iterations") cfg.bench.switch_iterations = u64(e);
        else if (key == "bench.init_iterations") cfg.bench.init_iterations = u64(e);
        else if (key == "bench.memory_iterations") cfg.bench.memory_iterations = u64(e);
        else if (key == "bench.warmup") cfg.bench.warmup = u64(e);
        else syntax(e.line, "unknown key " + key);
    }
    for (const auto& name : scenario_names) cfg.scenarios.push_back(parse_scenario(name, entries));
    return cfg;
}

ProtectionConfig load_config_file(const std::string& path, ProtectionConfig base) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigSyntax, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

ProtectionConfig ProtectionConfig::from_environment() {
    ProtectionConfig cfg;
    if (const char* path = std::getenv("SELFDBG_CONFIG"); path && *path) cfg = load_config_file(path, cfg);
    if (const char* fd = std::getenv("SELFDBG_EVENT_FD"); fd && *fd) {
        if (auto v = parse_u64(fd)) cfg.event_fd = static_cast<int>(*v);
    }
    return cfg;
}

}  // namespace selfdbg
