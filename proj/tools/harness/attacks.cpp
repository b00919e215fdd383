#include "attacks.hpp"

#include <signal.h>
#include <sys/ptrace.h>
#include <sys/wait.h>

#include <cerrno>
#include <cstring>
#include <thread>

namespace harness {

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kCatcherSigBlk = "fffffffffffbfeff";

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Pair {
    std::unique_ptr<Child> child;
    pid_t app = 0;
    pid_t selfdebugger = 0;
};

std::optional<Pair> start_pair(const AttackOptions& o, std::vector<std::string>& notes) {
    SpawnOptions so;
    so.argv = {o.demo_path, "idle", "--method", o.method};
    Pair p;
    p.child = std::make_unique<Child>(so);
    const auto line = p.child->read_line(o.ready_timeout);
    if (!line || line->rfind("ready", 0) != 0) {
        notes.push_back("no ready line within " + std::to_string(o.ready_timeout.count()) + " ms");
        return std::nullopt;
    }
    p.app = static_cast<pid_t>(field_of(*line, "app").value_or(0));
    p.selfdebugger = static_cast<pid_t>(field_of(*line, "selfdebugger").value_or(0));
    if (p.app <= 0 || p.selfdebugger <= 0) {
        notes.push_back("malformed ready line: " + *line);
        return std::nullopt;
    }
    return p;
}

void hard_stop(Pair& p) {
    if (!p.child->status()) kill(-p.child->pid(), SIGKILL);
    for (pid_t pid : {p.app, p.selfdebugger})
        if (process_alive(pid)) kill(pid, SIGKILL);
    p.child->wait(Millis(2000));
    wait_all_dead({p.app, p.selfdebugger}, Millis(2000));
}

AttackOutcome external_attach(Pair& p, AttackResult& r) {
    bool seats_held = true;
    const std::pair<pid_t, pid_t> pairs[] = {{p.app, p.selfdebugger}, {p.selfdebugger, p.app}};
    for (const auto& [pid, other] : pairs) {
        const auto tracer = tracer_pid(pid);
        r.notes.push_back("TracerPid(" + std::to_string(pid) + ")=" + std::to_string(tracer.value_or(-1)));
        if (tracer != other) seats_held = false;
    }
    bool denied = true;
    for (pid_t pid : {p.app, p.selfdebugger}) {
        if (ptrace(PTRACE_ATTACH, pid, nullptr, nullptr) == 0) {
            denied = false;
            int st = 0;
            waitpid(pid, &st, __WALL);
            ptrace(PTRACE_DETACH, pid, nullptr, nullptr);
            r.notes.push_back("attach to " + std::to_string(pid) + " succeeded");
        } else {
            r.notes.push_back("attach to " + std::to_string(pid) + ": " + std::strerror(errno));
        }
    }
    return denied && seats_held ? AttackOutcome::Denied : AttackOutcome::Compromised;
}

AttackOutcome kill_one(Pair& p, pid_t victim, const AttackOptions& o, AttackResult& r, Clock::time_point t0) {
    kill(victim, SIGKILL);
    const auto took = wait_all_dead({p.app, p.selfdebugger}, o.death_deadline);
    r.elapsed_ms = ms_since(t0);
    if (!took) {
        r.notes.push_back("survivor after " + std::to_string(o.death_deadline.count()) + " ms");
        return AttackOutcome::Compromised;
    }
    p.child->wait(Millis(1000));
    return AttackOutcome::BothDead;
}

AttackOutcome sigterm_broadcast(Pair& p, const AttackOptions& o, AttackResult& r, Clock::time_point t0) {
    kill(-p.child->pid(), SIGTERM);
    const std::string rest = p.child->drain(o.scenario_timeout);
    const auto status = p.child->wait(o.scenario_timeout);
    if (!status) return AttackOutcome::ScenarioTimeout;
    const auto dead = wait_all_dead({p.app, p.selfdebugger}, o.scenario_timeout);
    r.elapsed_ms = ms_since(t0);
    if (!dead) return AttackOutcome::ScenarioTimeout;

    std::size_t cleanups = 0;
    bool in_app = true;
    bool single_run = true;
    for (std::size_t pos = 0; (pos = rest.find("cleanup ", pos)) != std::string::npos; ++pos) {
        ++cleanups;
        const auto eol = rest.find('\n', pos);
        const std::string line = rest.substr(pos, eol - pos);
        if (field_of(line, "pid") != p.app) in_app = false;
        if (field_of(line, "handler_runs") != 1) single_run = false;
        r.notes.push_back(line);
    }
    const bool exited = WIFEXITED(*status) && WEXITSTATUS(*status) == 0;
    if (!exited) r.notes.push_back("application wait status " + std::to_string(*status));
    return cleanups == 1 && in_app && single_run && exited ? AttackOutcome::CleanShutdown : AttackOutcome::Compromised;
}

// Latest role event in the log names the Catcher; its SigBlk must agree,
// otherwise a flip is in flight and the lookup is retried.
std::optional<pid_t> catcher_from_log(const Pair& p) {
    std::optional<pid_t> catcher;
    for (const auto& e : read_events(p.child->event_path())) {
        if (e.pid != p.app && e.pid != p.selfdebugger) continue;
        if (e.event == "become_catcher" || e.event == "catcher_ready") catcher = e.pid;
        else if (e.event == "become_thrower") catcher = e.pid == p.app ? p.selfdebugger : p.app;
    }
    return catcher;
}

std::optional<pid_t> find_catcher(const Pair& p, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    while (Clock::now() < deadline) {
        const auto pid = catcher_from_log(p);
        if (pid && status_field(*pid, "SigBlk") == std::string(kCatcherSigBlk) && catcher_from_log(p) == pid)
            return pid;
        std::this_thread::sleep_for(Millis(1));
    }
    return std::nullopt;
}

bool stopped(char state) { return state == 't' || state == 'T'; }

AttackOutcome sigstop_catcher(Pair& p, const AttackOptions& o, AttackResult& r, Clock::time_point& t0) {
    const auto catcher = find_catcher(p, o.ready_timeout);
    if (!catcher) {
        r.notes.push_back("no process in the Catcher role");
        return AttackOutcome::ScenarioTimeout;
    }
    r.notes.push_back("catcher=" + std::to_string(*catcher));
    t0 = Clock::now();
    kill(*catcher, SIGSTOP);

    // Deadlock: both processes parked in a stop for a sustained window.
    const auto deadline = Clock::now() + o.scenario_timeout;
    int stable = 0;
    while (Clock::now() < deadline) {
        const char a = process_state(p.app);
        const char s = process_state(p.selfdebugger);
        if (a == 0 || s == 0 || a == 'Z' || s == 'Z') {
            r.notes.push_back("a process exited instead of stopping");
            return AttackOutcome::Compromised;
        }
        stable = stopped(a) && stopped(s) ? stable + 1 : 0;
        if (stable >= 25) {
            r.elapsed_ms = ms_since(t0);
            r.notes.push_back(std::string("states app=") + a + " selfdebugger=" + s);
            kill(p.app, SIGKILL);
            kill(p.selfdebugger, SIGKILL);
            if (!wait_all_dead({p.app, p.selfdebugger}, o.death_deadline)) {
                r.notes.push_back("SIGKILL cleanup left a survivor");
                return AttackOutcome::Compromised;
            }
            p.child->wait(Millis(1000));
            return AttackOutcome::DeadlockObserved;
        }
        std::this_thread::sleep_for(Millis(20));
    }
    return AttackOutcome::ScenarioTimeout;
}

}  // namespace

std::string_view to_string(AttackScenario s) noexcept {
    switch (s) {
        case AttackScenario::ExternalAttach: return "external-attach";
        case AttackScenario::KillSelfDebugger: return "kill-selfdebugger";
        case AttackScenario::KillApp: return "kill-app";
        case AttackScenario::SigtermBroadcast: return "sigterm-broadcast";
        case AttackScenario::SigstopCatcher: return "sigstop-catcher";
    }
    return "?";
}

std::string_view to_string(AttackOutcome o) noexcept {
    switch (o) {
        case AttackOutcome::Denied: return "Denied";
        case AttackOutcome::BothDead: return "BothDead";
        case AttackOutcome::CleanShutdown: return "CleanShutdown";
        case AttackOutcome::DeadlockObserved: return "DeadlockObserved";
        case AttackOutcome::Compromised: return "Compromised";
        case AttackOutcome::ScenarioTimeout: return "ScenarioTimeout";
    }
    return "?";
}

const std::vector<AttackScenario>& all_attacks() {
    static const std::vector<AttackScenario> v{AttackScenario::ExternalAttach, AttackScenario::KillSelfDebugger,
                                               AttackScenario::KillApp, AttackScenario::SigtermBroadcast,
                                               AttackScenario::SigstopCatcher};
    return v;
}

std::optional<AttackScenario> attack_from_string(std::string_view name) noexcept {
    for (auto s : all_attacks())
        if (to_string(s) == name) return s;
    return std::nullopt;
}

AttackOutcome expected_outcome(AttackScenario s) noexcept {
    switch (s) {
        case AttackScenario::ExternalAttach: return AttackOutcome::Denied;
        case AttackScenario::KillSelfDebugger:
        case AttackScenario::KillApp: return AttackOutcome::BothDead;
        case AttackScenario::SigtermBroadcast: return AttackOutcome::CleanShutdown;
        case AttackScenario::SigstopCatcher: return AttackOutcome::DeadlockObserved;
    }
    return AttackOutcome::Compromised;
}

AttackResult run_attack(AttackScenario scenario, const AttackOptions& options) {
    become_subreaper();
    AttackResult r;
    r.scenario = scenario;
    r.expected = expected_outcome(scenario);
    r.observed = AttackOutcome::ScenarioTimeout;

    auto pair = start_pair(options, r.notes);
    if (!pair) {
        r.orphans = sweep({});
        return r;
    }
    r.app = pair->app;
    r.selfdebugger = pair->selfdebugger;
    // Let a few switches happen so both roles have been exercised.
    std::this_thread::sleep_for(Millis(30));

    auto t0 = Clock::now();
    switch (scenario) {
        case AttackScenario::ExternalAttach:
            r.observed = external_attach(*pair, r);
            r.elapsed_ms = ms_since(t0);
            kill(-pair->child->pid(), SIGTERM);
            pair->child->wait(options.scenario_timeout);
            wait_all_dead({r.app, r.selfdebugger}, options.scenario_timeout);
            break;
        case AttackScenario::KillSelfDebugger:
            r.observed = kill_one(*pair, r.selfdebugger, options, r, t0);
            break;
        case AttackScenario::KillApp:
            r.observed = kill_one(*pair, r.app, options, r, t0);
            break;
        case AttackScenario::SigtermBroadcast:
            r.observed = sigterm_broadcast(*pair, options, r, t0);
            break;
        case AttackScenario::SigstopCatcher:
            r.observed = sigstop_catcher(*pair, options, r, t0);
            break;
    }

    r.orphans = leftover_processes({r.app, r.selfdebugger}).size();
    if (r.orphans != 0) r.notes.push_back(std::to_string(r.orphans) + " process(es) left behind");
    hard_stop(*pair);
    sweep({r.app, r.selfdebugger});
    return r;
}

}  // namespace harness
