// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes or fails only where listed
// with --expected-fail; an expected failure still prints FAIL.

#include "attacks.hpp"
#include "process.hpp"
#include "reports.hpp"

#include "selfdbg/kernel_sim.hpp"
#include "selfdbg/target_codec.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <sys/ptrace.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace {

using harness::Millis;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int term_signal(const harness::RunResult& r) { return WIFSIGNALED(r.status) ? WTERMSIG(r.status) : 0; }

struct DemoPair {
    std::unique_ptr<harness::Child> child;
    pid_t app = 0;
    pid_t selfdebugger = 0;
};

std::optional<DemoPair> start_demo(const std::vector<std::string>& argv, bool pipe_stdin) {
    harness::SpawnOptions so;
    so.argv = argv;
    so.pipe_stdin = pipe_stdin;
    DemoPair p;
    p.child = std::make_unique<harness::Child>(so);
    const auto line = p.child->read_line(Millis(5000));
    if (!line) return std::nullopt;
    p.app = static_cast<pid_t>(harness::field_of(*line, "app").value_or(0));
    p.selfdebugger = static_cast<pid_t>(harness::field_of(*line, "selfdebugger").value_or(0));
    if (p.app <= 0 || p.selfdebugger <= 0) return std::nullopt;
    return p;
}

void stop_demo(DemoPair& p) {
    for (pid_t pid : {p.app, p.selfdebugger})
        if (harness::process_alive(pid)) kill(pid, SIGKILL);
    p.child->wait(Millis(2000));
    harness::sweep({p.app, p.selfdebugger});
}

Outcome ac1(const std::string& demo) {
    const auto t0 = Clock::now();
    auto p = start_demo({demo, "idle"}, false);
    if (!p) return {false, "demo did not start"};
    bool ok = true;
    std::string d;
    for (const auto& [pid, other] : {std::pair{p->app, p->selfdebugger}, std::pair{p->selfdebugger, p->app}}) {
        const auto tracer = harness::tracer_pid(pid);
        d += fmt("TracerPid(%d)=%d ", pid, tracer.value_or(-1));
        ok = ok && tracer == other;
        errno = 0;
        const bool attached = ptrace(PTRACE_ATTACH, pid, nullptr, nullptr) == 0;
        if (attached) {
            int st = 0;
            waitpid(pid, &st, __WALL);
            ptrace(PTRACE_DETACH, pid, nullptr, nullptr);
        }
        d += fmt("attach(%d)=%s ", pid, attached ? "ok" : "denied");
        ok = ok && !attached;
    }
    stop_demo(*p);
    const double s = seconds_since(t0);
    d += fmt("%.2fs", s);
    return {ok && s < 5.0, d};
}

Outcome ac2(const std::string& demo) {
    harness::AttackOptions o;
    o.demo_path = demo;
    bool ok = true;
    std::string d;
    for (auto s : {harness::AttackScenario::KillSelfDebugger, harness::AttackScenario::KillApp}) {
        const auto r = harness::run_attack(s, o);
        d += fmt("%s=%s in %.1fms orphans=%zu ", std::string(harness::to_string(s)).c_str(),
                 std::string(harness::to_string(r.observed)).c_str(), r.elapsed_ms, r.orphans);
        ok = ok && r.observed == harness::AttackOutcome::BothDead && r.elapsed_ms < 1000 && r.orphans == 0;
    }
    return {ok, d};
}

Outcome ac3(const std::string& demo) {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string d;
    for (const char* fragments : {"0", "3", "10"}) {
        const std::vector<std::string> base{demo, "run", "--inputs", "120", "--seed", "17", "--fragments", fragments};
        auto plain = base;
        plain.push_back("--unprotected");
        const auto a = harness::run_capture(base, Millis(60000));
        const auto b = harness::run_capture(plain, Millis(60000));
        std::size_t lines = 0;
        for (char c : a.out) lines += c == '\n';
        const bool same = a.exited_ok() && b.exited_ok() && a.out == b.out && lines >= 100;
        d += fmt("fragments=%s lines=%zu %s ", fragments, lines, same ? "identical" : "DIFFERENT");
        ok = ok && same;
    }
    const double s = seconds_since(t0);
    d += fmt("%.2fs", s);
    return {ok && s < 60.0, d};
}

Outcome ac4(const std::string& demo) {
    bool ok = true;
    std::string d;
    for (const char* kind : {"null", "noncanonical", "jump"}) {
        const std::vector<std::string> base{demo, "crash", "--crash-kind", kind, "--fragments", "3"};
        auto plain = base;
        plain.push_back("--unprotected");
        const int a = term_signal(harness::run_capture(base, Millis(10000)));
        const int b = term_signal(harness::run_capture(plain, Millis(10000)));
        d += fmt("%s: protected=%d unprotected=%d ", kind, a, b);
        ok = ok && a == b && b != 0;
    }
    return {ok, d};
}

Outcome ac5() {
    const auto t0 = Clock::now();
    const auto runs = harness::simulate(selfdbg::sim::scenario_catalog(), 24);
    std::size_t passed = 0;
    std::string d;
    for (const auto& r : runs) {
        if (r.passed()) ++passed;
        else d += r.scenario.name + "=" + std::string(to_string(r.verdict.value)) + " ";
    }
    const double s = seconds_since(t0);
    d += fmt("%zu/%zu scenarios as expected, deterministic, %.2fs", passed, runs.size(), s);
    return {runs.size() == 8 && passed == 8 && s < 30.0, d};
}

Outcome ac6(const std::string& demo) {
    using namespace selfdbg::sim;
    bool ok = true;
    std::string d;

    const auto term_model = explore(find_scenario("SigtermBroadcast"));
    harness::AttackOptions o;
    o.demo_path = demo;
    const auto term = harness::run_attack(harness::AttackScenario::SigtermBroadcast, o);
    const bool term_ok = term_model.value == VerdictKind::DeadlockFree && term_model.all_terminal_exited &&
                         term_model.cleanup_at_most_once && term.passed();
    d += fmt("SigtermBroadcast model=%s runtime=%s; ", std::string(to_string(term_model.value)).c_str(),
             std::string(harness::to_string(term.observed)).c_str());
    ok = ok && term_ok;

    const auto kill_model = explore(find_scenario("SigkillEither"));
    bool kill_ok = kill_model.value == VerdictKind::DeadlockFree && kill_model.all_terminal_exited;
    for (auto s : {harness::AttackScenario::KillApp, harness::AttackScenario::KillSelfDebugger})
        kill_ok = kill_ok && harness::run_attack(s, o).passed();
    d += fmt("SigkillEither model=%s runtime=%s; ", std::string(to_string(kill_model.value)).c_str(),
             kill_ok ? "BothDead" : "mismatch");
    ok = ok && kill_ok;

    const auto fault_model = explore(find_scenario("GenuineFaultInThrower"));
    const int a = term_signal(harness::run_capture({demo, "crash", "--fragments", "3"}, Millis(10000)));
    const int b = term_signal(harness::run_capture({demo, "crash", "--unprotected"}, Millis(10000)));
    const bool fault_ok = fault_model.value == VerdictKind::DeadlockFree && fault_model.genuine_fault_kills_with_segv &&
                          a == SIGSEGV && a == b;
    d += fmt("GenuineFaultInThrower model=%s runtime signal %d vs %d", std::string(to_string(fault_model.value)).c_str(),
             a, b);
    ok = ok && fault_ok;
    return {ok, d};
}

Outcome ac7() {
    using namespace selfdbg;
    const auto t0 = Clock::now();
    const FaultNamespace ns = FaultNamespace::platform_default();
    const CodeRange code = executable_code_range();
    const auto cfg = CodecConfig::make_default(ns, code, 0xac7);
    std::size_t bad = 0;
    std::string d;
    for (const auto& s : cfg.schemes) {
        std::mt19937_64 rng(s.id);
        std::unordered_set<Address> images;
        std::set<Address> targets;
        for (int i = 0; i < 100000; ++i) {
            const Address t = code.begin + rng() % (code.end - code.begin);
            const Address e = encode_target(t, s, ns, code);
            // Oracle: the image sits in the hole between the canonical halves
            // under 57-bit paging and decodes back.
            const unsigned top = static_cast<unsigned>(e >> 56);
            if (top == 0 || top == 0xff || decode_target(e, s, code) != t) ++bad;
            images.insert(e);
            targets.insert(t);
        }
        if (images.size() != targets.size()) ++bad;
        d += fmt("scheme %u: 100000 targets ", s.id);
    }
    bool probe_ok = false;
    try {
        probe_ok = probe_namespace(ns, 24).ok();
    } catch (const ProbeFailure&) {
    }
    const double sec = seconds_since(t0);
    d += fmt("violations=%zu probe=%s %.2fs", bad, probe_ok ? "ok" : "FAILED", sec);
    return {bad == 0 && probe_ok && sec < 10.0, d};
}

Outcome ac8(const std::string& demo, const std::string& trap) {
    const auto a = selfdbg::static_footprint_report(demo);
    const auto b = selfdbg::static_footprint_report(trap);
    const bool ok = a.site_count > 0 && a.trap_opcodes == 0 && b.site_count > 0 && b.trap_opcodes == b.site_count;
    return {ok, fmt("default: %zu sites %zu traps; trap build: %zu sites %zu traps", a.site_count, a.trap_opcodes,
                    b.site_count, b.trap_opcodes)};
}

Outcome ac9(const std::string& harness_bin, const std::string& demo, const std::string& trap) {
    const auto r = harness::run_capture(
        {harness_bin, "--demo-binary", demo, "--trap-binary", trap, "bench", "--json", "-"}, Millis(300000));
    const auto j = nlohmann::json::parse(r.out, nullptr, false);
    if (j.is_discarded() || !j.contains("rows")) return {false, "bench produced no report: " + r.err};
    std::set<std::string> aspects;
    for (const auto& row : j["rows"]) aspects.insert(row["aspect"].get<std::string>());
    const std::set<std::string> want{"Init", "RemoteRead", "RemoteWrite", "SwitchTrap", "SwitchSegvRW", "SwitchSegvX"};
    bool ok = aspects == want;
    std::string d = fmt("rows=%zu ", aspects.size());
    for (const auto& c : j["checks"]) {
        const std::string name = c["name"];
        if (name.rfind("trap_at_least", 0) != 0) continue;
        const double ratio = c["ratio"].is_null() ? 0.0 : c["ratio"].get<double>();
        d += fmt("%s ratio=%.3f %s ", name.c_str(), ratio, c["passed"].get<bool>() ? "ok" : "violated");
        ok = ok && c["passed"].get<bool>();
    }
    return {ok, d};
}

Outcome ac10(const std::string& demo) {
    bool ok = true;
    std::string d;
    {
        auto p = start_demo({demo, "usr1"}, true);
        if (!p) return {false, "demo did not start"};
        kill(p->selfdebugger, SIGUSR1);
        const bool early = p->child->read_line(Millis(300)).has_value();
        p->child->write_line("go");
        const auto first = p->child->read_line(Millis(2000));
        // The handler logs after printing; the switch back comes later still.
        const auto second = p->child->read_line(Millis(2000));
        const auto events = harness::read_events(p->child->event_path());
        std::optional<std::size_t> flip;
        std::optional<std::size_t> handled;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (events[i].pid != p->selfdebugger) continue;
            if (events[i].event == "become_thrower" && !flip) flip = i;
            if (events[i].event == "usr1_handler" && !handled) handled = i;
        }
        const std::string want = "usr1 pid=" + std::to_string(p->selfdebugger) + " role=Thrower";
        const bool usr1_ok = !early && first == want && second == "switch 1 done" && flip && handled && *flip < *handled;
        d += fmt("usr1: %s; ", usr1_ok ? "delivered after flip as Thrower" : "out of order");
        ok = ok && usr1_ok;
        p->child->close_stdin();
        p->child->wait(Millis(3000));
        stop_demo(*p);
    }
    {
        harness::AttackOptions o;
        o.demo_path = demo;
        const auto r = harness::run_attack(harness::AttackScenario::SigtermBroadcast, o);
        d += fmt("sigterm: %s", std::string(harness::to_string(r.observed)).c_str());
        for (const auto& n : r.notes)
            if (n.rfind("cleanup", 0) == 0) d += " [" + n + "]";
        ok = ok && r.passed();
    }
    return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selfdbg acceptance criteria"};
    std::string demo = SELFDBG_DEMO_PATH;
    std::string trap = SELFDBG_BENCH_TRAP_PATH;
    std::string harness_bin = SELFDBG_HARNESS_PATH;
    std::vector<std::string> expected_fail;
    std::vector<std::string> only;
    app.add_option("--expected-fail", expected_fail, "criteria whose FAIL does not fail the run");
    app.add_option("--only", only, "run just these criteria");
    CLI11_PARSE(app, argc, argv);

    harness::become_subreaper();
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"AC1", [&] { return ac1(demo); }},
        {"AC2", [&] { return ac2(demo); }},
        {"AC3", [&] { return ac3(demo); }},
        {"AC4", [&] { return ac4(demo); }},
        {"AC5", [&] { return ac5(); }},
        {"AC6", [&] { return ac6(demo); }},
        {"AC7", [&] { return ac7(); }},
        {"AC8", [&] { return ac8(demo, trap); }},
        {"AC9", [&] { return ac9(harness_bin, demo, trap); }},
        {"AC10", [&] { return ac10(demo); }},
    };

    int unexpected = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool tolerated = std::find(expected_fail.begin(), expected_fail.end(), name) != expected_fail.end();
        std::printf("%s %s %s%s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    !o.pass && tolerated ? " (expected failure on this host)" : "");
        std::fflush(stdout);
        if (!o.pass && !tolerated) ++unexpected;
        harness::sweep({});
    }
    return unexpected == 0 ? 0 : 1;
}
