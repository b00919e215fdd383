#include "selfdbg/kernel_sim.hpp"
#include "selfdbg/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <csignal>
#include <deque>
#include <unordered_set>

namespace selfdbg::sim {

std::string_view to_string(Sig s) noexcept {
    switch (s) {
        case Sig::CHLD: return "SIGCHLD";
        case Sig::TERM: return "SIGTERM";
        case Sig::USR1: return "SIGUSR1";
        case Sig::SEGV: return "SIGSEGV";
        case Sig::STOP: return "SIGSTOP";
        case Sig::KILL: return "SIGKILL";
    }
    return "?";
}

std::optional<Sig> sig_from_string(std::string_view name) noexcept {
    if (name.starts_with("SIG")) name.remove_prefix(3);
    if (name == "CHLD") return Sig::CHLD;
    if (name == "TERM") return Sig::TERM;
    if (name == "USR1") return Sig::USR1;
    if (name == "SEGV") return Sig::SEGV;
    if (name == "STOP") return Sig::STOP;
    if (name == "KILL") return Sig::KILL;
    return std::nullopt;
}

std::string_view to_string(RunState s) noexcept {
    switch (s) {
        case RunState::Running: return "Running";
        case RunState::DebugStopped: return "DebugStopped";
        case RunState::Exited: return "Exited";
    }
    return "?";
}

std::string_view to_string(Step s) noexcept {
    switch (s) {
        case Step::Switch: return "Switch";
        case Step::Exit: return "Exit";
        case Step::GenuineFault: return "GenuineFault";
    }
    return "?";
}

std::string_view to_string(Target t) noexcept {
    switch (t) {
        case Target::App: return "app";
        case Target::SelfDebugger: return "selfdebugger";
        case Target::Catcher: return "catcher";
        case Target::Thrower: return "thrower";
        case Target::Both: return "both";
    }
    return "?";
}

std::string_view to_string(VerdictKind v) noexcept {
    switch (v) {
        case VerdictKind::DeadlockFree: return "DeadlockFree";
        case VerdictKind::Deadlock: return "Deadlock";
        case VerdictKind::DepthExceeded: return "DepthExceeded";
    }
    return "?";
}

bool SimSystem::both_exited() const noexcept {
    return processes[0].run_state == RunState::Exited && processes[1].run_state == RunState::Exited;
}

bool SimSystem::both_stopped() const noexcept {
    return processes[0].run_state == RunState::DebugStopped &&
           processes[1].run_state == RunState::DebugStopped;
}

namespace {

int posix_signo(Sig s) noexcept {
    switch (s) {
        case Sig::CHLD: return SIGCHLD;
        case Sig::TERM: return SIGTERM;
        case Sig::USR1: return SIGUSR1;
        case Sig::SEGV: return SIGSEGV;
        case Sig::STOP: return SIGSTOP;
        case Sig::KILL: return SIGKILL;
    }
    return 0;
}

std::optional<Sig> from_posix(int signo) noexcept {
    for (int i = 0; i < kSigCount; ++i)
        if (posix_signo(static_cast<Sig>(i)) == signo) return static_cast<Sig>(i);
    return std::nullopt;
}

// Abstract address layout used to feed the switch protocol: one registered
// site and a small code range.
struct ModelProtocol {
    static constexpr Address kSitePc = 0x1000;
    static constexpr Address kStrayPc = 0x1234;
    static constexpr Address kFragment = 0x1800;

    Whitelist whitelist{0x5bd1e995u};
    CodecConfig codec;

    ModelProtocol() {
        codec = CodecConfig::make_default(FaultNamespace::platform_default(), CodeRange{0x1000, 0x2000}, 7,
                                          0x0100000000000000ull, std::nullopt);
        whitelist.insert({kSitePc, FaultKind::SegvLoadStore, 1, SiteFlavor::Inline});
    }

    SwitchEvent event_for(const SimProcess& p) const {
        SwitchEvent ev;
        ev.pid = p.pid;
        switch (p.stop) {
            case StopReason::SwitchFault:
                ev.cause = StopCause::Fault;
                ev.signal = SIGSEGV;
                ev.faulting_pc = kSitePc;
                ev.fault_kind = FaultKind::SegvLoadStore;
                ev.fault_address = encode_target(kFragment, codec.schemes[0], codec.ns, codec.code);
                break;
            case StopReason::GenuineFault:
                ev.cause = StopCause::Fault;
                ev.signal = SIGSEGV;
                ev.faulting_pc = kStrayPc;
                ev.fault_kind = FaultKind::SegvLoadStore;
                ev.fault_address = 0;
                break;
            case StopReason::Signal:
                ev.cause = StopCause::Signal;
                ev.signal = posix_signo(p.stop_signal);
                break;
            case StopReason::ExitNotice:
                ev.cause = StopCause::ExitNotice;
                break;
            case StopReason::GroupStop:
            case StopReason::None:
                ev.cause = StopCause::GroupStop;
                break;
        }
        return ev;
    }
};

const ModelProtocol& protocol() {
    static const ModelProtocol p;
    return p;
}

std::string state_summary(const SimSystem& s) {
    std::string out;
    for (int i = 0; i < 2; ++i) {
        const auto& p = s.proc(i);
        if (i) out += " ";
        out += i == SimSystem::kApp ? "app=" : "dbg=";
        out += to_string(p.run_state);
        out += "/";
        out += to_string(p.role);
    }
    return out;
}

void log(SimSystem& s, int actor, std::string kind, std::string detail) {
    s.trace.push_back({actor, std::move(kind), std::move(detail) + " -> " + state_summary(s)});
}

void deliver_in_place(SimSystem& s, int pid, Sig sig);

void stop_process(SimSystem& s, int pid, StopReason reason, Sig sig = Sig::CHLD) {
    auto& p = s.proc(pid);
    p.run_state = RunState::DebugStopped;
    p.stop = reason;
    p.stop_signal = sig;
    // The tracer learns of the state change through a child notice unless
    // it asked the kernel not to send one.
    auto& tracer = s.proc(SimSystem::other(pid));
    if (tracer.run_state != RunState::Exited && !tracer.child_notices_suppressed)
        deliver_in_place(s, SimSystem::other(pid), Sig::CHLD);
}

// Delivers the first deliverable pending signal to a running process.
void settle(SimSystem& s, int pid) {
    auto& p = s.proc(pid);
    if (p.run_state != RunState::Running) return;
    if (p.pending & bit(Sig::STOP)) {
        p.pending &= static_cast<SigSet>(~bit(Sig::STOP));
        stop_process(s, pid, StopReason::Signal, Sig::STOP);
        return;
    }
    const SigSet ready = p.pending & static_cast<SigSet>(~p.blocked);
    for (int i = 0; i < kSigCount; ++i) {
        const Sig sig = static_cast<Sig>(i);
        if (ready & bit(sig)) {
            p.pending &= static_cast<SigSet>(~bit(sig));
            stop_process(s, pid, StopReason::Signal, sig);
            return;
        }
    }
}

void kill_process(SimSystem& s, int pid) {
    auto& p = s.proc(pid);
    p.run_state = RunState::Exited;
    p.death_signal = Sig::KILL;
    p.stop = StopReason::None;
}

void begin_exit(SimSystem& s, int pid, std::optional<Sig> death) {
    auto& p = s.proc(pid);
    p.death_signal = death;
    if (s.proc(SimSystem::other(pid)).run_state != RunState::Exited) {
        // Exit event reported to the tracer before the exit completes.
        p.run_state = RunState::DebugStopped;
        p.stop = StopReason::ExitNotice;
    } else {
        p.run_state = RunState::Exited;
        p.stop = StopReason::None;
    }
}

void deliver_in_place(SimSystem& s, int pid, Sig sig) {
    auto& p = s.proc(pid);
    if (p.run_state == RunState::Exited) return;
    if (sig == Sig::KILL) {
        kill_process(s, pid);
        return;
    }
    p.pending |= bit(sig);
    settle(s, pid);
}

void resume(SimSystem& s, int pid, std::optional<Sig> forwarded) {
    auto& p = s.proc(pid);
    p.run_state = RunState::Running;
    p.stop = StopReason::None;
    if (forwarded) {
        switch (*forwarded) {
            case Sig::TERM:
                ++p.cleanups;
                begin_exit(s, pid, std::nullopt);
                return;
            case Sig::USR1:
                ++s.usr1_deliveries;
                if (p.role == ProcessRole::Catcher) s.usr1_seen_by_catcher = true;
                break;
            case Sig::SEGV:
                begin_exit(s, pid, Sig::SEGV);
                return;
            case Sig::STOP:
                p.run_state = RunState::DebugStopped;
                p.stop = StopReason::GroupStop;
                return;
            case Sig::KILL:
                kill_process(s, pid);
                return;
            case Sig::CHLD:
                break;
        }
    }
    settle(s, pid);
}

bool debugger_step_enabled(const SimSystem& s, int pid) {
    const auto& me = s.proc(pid);
    const auto& peer = s.proc(SimSystem::other(pid));
    return me.run_state == RunState::Running && me.role == ProcessRole::Catcher &&
           peer.run_state == RunState::DebugStopped && peer.stop != StopReason::None;
}

bool program_step_enabled(const SimSystem& s, int pid, const Scenario& sc) {
    const auto& me = s.proc(pid);
    return me.run_state == RunState::Running && me.role == ProcessRole::Thrower && s.pc < sc.program.size();
}

bool exitkill_enabled(const SimSystem& s, int pid) {
    return s.exitkill && s.proc(pid).run_state == RunState::Exited &&
           s.proc(SimSystem::other(pid)).run_state != RunState::Exited;
}

SimSystem program_step(const SimSystem& in, int pid, Step step) {
    SimSystem s = in;
    ++s.pc;
    switch (step) {
        case Step::Switch: stop_process(s, pid, StopReason::SwitchFault); break;
        case Step::Exit: begin_exit(s, pid, std::nullopt); break;
        case Step::GenuineFault: stop_process(s, pid, StopReason::GenuineFault, Sig::SEGV); break;
    }
    log(s, pid, "program", std::string(to_string(step)));
    return s;
}

std::vector<int> resolve(const SimSystem& s, Target t) {
    std::vector<int> out;
    for (int pid = 0; pid < 2; ++pid) {
        const auto& p = s.proc(pid);
        if (p.run_state == RunState::Exited) continue;
        switch (t) {
            case Target::App: if (pid == SimSystem::kApp) out.push_back(pid); break;
            case Target::SelfDebugger: if (pid == SimSystem::kSelfDebugger) out.push_back(pid); break;
            case Target::Catcher: if (p.role == ProcessRole::Catcher) out.push_back(pid); break;
            case Target::Thrower: if (p.role == ProcessRole::Thrower) out.push_back(pid); break;
            case Target::Both: out.push_back(pid); break;
        }
    }
    return out;
}

std::optional<SimSystem> inject(const SimSystem& in, const Injection& inj) {
    const auto targets = resolve(in, inj.target);
    if (targets.empty()) return std::nullopt;
    SimSystem s = in;
    if (inj.kind == Injection::Kind::CatcherFault) {
        const int pid = targets.front();
        if (s.proc(pid).run_state != RunState::Running || s.proc(pid).role != ProcessRole::Catcher)
            return std::nullopt;
        stop_process(s, pid, StopReason::GenuineFault, Sig::SEGV);
        log(s, pid, "inject", "genuine fault in catcher");
        return s;
    }
    for (int pid : targets) deliver_in_place(s, pid, inj.signal);
    log(s, targets.front(), "inject", std::string(to_string(inj.signal)) + " to " + std::string(to_string(inj.target)));
    return s;
}

}  // namespace

SimSystem initial_system(const Scenario& scenario) {
    SimSystem s;
    s.exitkill = scenario.policy.exitkill;
    s.block_when_catcher = scenario.policy.block_when_catcher;
    auto& app = s.proc(SimSystem::kApp);
    auto& dbg = s.proc(SimSystem::kSelfDebugger);
    app.pid = SimSystem::kApp;
    dbg.pid = SimSystem::kSelfDebugger;
    app.role = ProcessRole::Thrower;
    dbg.role = ProcessRole::Catcher;
    app.child_notices_suppressed = dbg.child_notices_suppressed = scenario.policy.suppress_child_notices;
    dbg.blocked = scenario.policy.block_when_catcher ? kBlockable : 0;
    return s;
}

SimSystem sim_deliver(const SimSystem& system, int pid, Sig signal) {
    SimSystem s = system;
    deliver_in_place(s, pid, signal);
    if (exitkill_enabled(s, pid)) kill_process(s, SimSystem::other(pid));
    log(s, pid, "deliver", std::string(to_string(signal)));
    return s;
}

SimSystem sim_debugger_step(const SimSystem& system, int pid) {
    if (!debugger_step_enabled(system, pid))
        throw ContractViolation("debugger step requires a running Catcher and a stopped counterpart");
    SimSystem s = system;
    const int peer = SimSystem::other(pid);
    const auto& model = protocol();
    const SwitchEvent ev = model.event_for(s.proc(peer));
    const Classification cls = classify(ev, model.whitelist, model.codec);
    const ActionPlan plan = plan_for(cls, s.proc(pid).role);

    std::string detail = describe(cls) + " plan=[";
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (i) detail += ",";
        detail += to_string(plan[i].kind);
    }
    detail += "]";

    for (const Action& a : plan) {
        auto& me = s.proc(pid);
        auto& other = s.proc(peer);
        switch (a.kind) {
            case ActionKind::TransitionCounterpartToCatcher:
                other.role = ProcessRole::Catcher;
                other.blocked = s.block_when_catcher ? kBlockable : 0;
                other.run_state = RunState::Running;
                other.stop = StopReason::None;
                break;
            case ActionKind::TransferControlTo:
                me.role = ProcessRole::Thrower;
                me.blocked = 0;
                // Signals that became deliverable by the unblock reach the new
                // Thrower before the counterpart's pending ones.
                settle(s, pid);
                settle(s, peer);
                break;
            case ActionKind::ForwardSignal:
                resume(s, peer, from_posix(a.signal));
                break;
            case ActionKind::DetachAndExit:
                other.run_state = RunState::Exited;
                other.stop = StopReason::None;
                me.run_state = RunState::Exited;
                me.death_signal = other.death_signal;
                break;
            case ActionKind::SuppressAndContinue:
                resume(s, peer, std::nullopt);
                break;
        }
    }
    log(s, pid, "debugger", detail);
    return s;
}

namespace {

struct Node {
    SimSystem sys;
    std::uint32_t used = 0;  // bitmask of consumed injections
    std::size_t depth = 0;
    std::ptrdiff_t parent = -1;
    SimEvent event;
};

std::string state_key(const SimSystem& s, std::uint32_t used) {
    std::string k;
    for (const auto& p : s.processes) {
        k.push_back(static_cast<char>(p.run_state));
        k.push_back(static_cast<char>(p.pending));
        k.push_back(static_cast<char>(p.blocked));
        k.push_back(static_cast<char>(p.child_notices_suppressed));
        k.push_back(static_cast<char>(p.role));
        k.push_back(static_cast<char>(p.stop));
        k.push_back(static_cast<char>(p.stop_signal));
        k.push_back(static_cast<char>(p.death_signal ? 1 + static_cast<int>(*p.death_signal) : 0));
        k.push_back(static_cast<char>(p.cleanups));
    }
    k.push_back(static_cast<char>(s.pc));
    k.push_back(static_cast<char>(s.usr1_seen_by_catcher));
    k.push_back(static_cast<char>(s.usr1_deliveries > 0));
    k.append(reinterpret_cast<const char*>(&used), sizeof used);
    return k;
}

struct Successor {
    SimSystem sys;
    std::uint32_t used;
    bool internal;
};

std::vector<Successor> successors(const SimSystem& s, std::uint32_t used, const Scenario& sc) {
    std::vector<Successor> out;
    auto push = [&](SimSystem next, std::uint32_t u, bool internal) {
        out.push_back({std::move(next), u, internal});
    };
    for (int pid = 0; pid < 2; ++pid) {
        if (program_step_enabled(s, pid, sc)) push(program_step(s, pid, sc.program[s.pc]), used, true);
        if (debugger_step_enabled(s, pid)) push(sim_debugger_step(s, pid), used, true);
        if (exitkill_enabled(s, pid)) {
            SimSystem n = s;
            kill_process(n, SimSystem::other(pid));
            log(n, SimSystem::other(pid), "exitkill", "tracer exited");
            push(std::move(n), used, true);
        }
    }
    for (std::size_t i = 0; i < sc.injections.size(); ++i) {
        if (used & (1u << i)) continue;
        if (auto n = inject(s, sc.injections[i])) push(std::move(*n), used | (1u << i), false);
    }
    return out;
}

}  // namespace

DeadlockVerdict explore(const Scenario& scenario, std::size_t depth) {
    DeadlockVerdict v;
    const bool has_genuine = std::find(scenario.program.begin(), scenario.program.end(), Step::GenuineFault) !=
                             scenario.program.end();
    std::vector<Node> nodes;
    std::unordered_set<std::string> seen;
    std::deque<std::size_t> frontier;

    SimSystem init = initial_system(scenario);
    seen.insert(state_key(init, 0));
    nodes.push_back({std::move(init), 0, 0, -1, {}});
    frontier.push_back(0);
    bool exceeded = false;

    auto reconstruct = [&](std::size_t idx) {
        std::vector<SimEvent> trace;
        for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(idx); i > 0; i = nodes[static_cast<std::size_t>(i)].parent)
            trace.push_back(nodes[static_cast<std::size_t>(i)].event);
        std::reverse(trace.begin(), trace.end());
        return trace;
    };

    while (!frontier.empty()) {
        const std::size_t idx = frontier.front();
        frontier.pop_front();
        const SimSystem sys = nodes[idx].sys;
        const std::uint32_t used = nodes[idx].used;
        const std::size_t d = nodes[idx].depth;
        v.max_depth_reached = std::max(v.max_depth_reached, d);

        if (sys.proc(0).cleanups + sys.proc(1).cleanups > 1) v.cleanup_at_most_once = false;
        if (sys.usr1_seen_by_catcher) v.usr1_only_to_thrower = false;

        auto next = successors(sys, used, scenario);
        const bool any_internal = std::any_of(next.begin(), next.end(), [](const Successor& s) { return s.internal; });
        if (!any_internal) {
            ++v.terminal_states;
            if (sys.both_stopped()) {
                v.value = VerdictKind::Deadlock;
                v.trace = reconstruct(idx);
                v.states = nodes.size();
                return v;
            }
            if (!sys.both_exited()) v.all_terminal_exited = false;
            if (has_genuine && sys.both_exited() && sys.proc(SimSystem::kApp).death_signal != Sig::SEGV &&
                sys.proc(SimSystem::kSelfDebugger).death_signal != Sig::SEGV)
                v.genuine_fault_kills_with_segv = false;
        }
        if (next.empty()) continue;
        if (d >= depth) {
            exceeded = true;
            continue;
        }
        for (auto& n : next) {
            SimEvent ev = n.sys.trace.empty() ? SimEvent{} : n.sys.trace.back();
            n.sys.trace.clear();
            if (!seen.insert(state_key(n.sys, n.used)).second) continue;
            nodes.push_back({std::move(n.sys), n.used, d + 1, static_cast<std::ptrdiff_t>(idx), std::move(ev)});
            frontier.push_back(nodes.size() - 1);
        }
    }
    v.states = nodes.size();
    v.value = exceeded ? VerdictKind::DepthExceeded : VerdictKind::DeadlockFree;
    return v;
}

const std::vector<Scenario>& scenario_catalog() {
    static const std::vector<Scenario> catalog = [] {
        const Policy full{true, true, true};
        const std::vector<Step> round_trip{Step::Switch, Step::Switch, Step::Exit};
        const std::vector<Step> two_round_trips{Step::Switch, Step::Switch, Step::Switch, Step::Switch, Step::Exit};
        using K = Injection::Kind;
        return std::vector<Scenario>{
            {"ChildNoticeDefault", Policy{false, false, true}, round_trip, {}, VerdictKind::Deadlock},
            {"ChildNoticeSuppressed", Policy{true, false, true}, round_trip, {}, VerdictKind::DeadlockFree},
            {"SigtermBroadcast", full, two_round_trips, {{K::Signal, Target::Both, Sig::TERM}}, VerdictKind::DeadlockFree},
            {"UserSignalToCatcher", full, two_round_trips, {{K::Signal, Target::Catcher, Sig::USR1}},
             VerdictKind::DeadlockFree},
            {"GenuineFaultInThrower", full, {Step::Switch, Step::Switch, Step::GenuineFault}, {},
             VerdictKind::DeadlockFree},
            {"GenuineFaultInCatcher", full, round_trip, {{K::CatcherFault, Target::Catcher, Sig::SEGV}},
             VerdictKind::Deadlock},
            {"SigstopToCatcher", full, round_trip, {{K::Signal, Target::Catcher, Sig::STOP}}, VerdictKind::Deadlock},
            {"SigkillEither", full, round_trip,
             {{K::Signal, Target::App, Sig::KILL}, {K::Signal, Target::SelfDebugger, Sig::KILL}},
             VerdictKind::DeadlockFree},
        };
    }();
    return catalog;
}

const Scenario& find_scenario(std::string_view name) {
    for (const auto& s : scenario_catalog())
        if (s.name == name) return s;
    throw Error(Errc::UnknownScenario, std::string(name));
}

std::string trace_to_json(const std::vector<SimEvent>& trace) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : trace)
        arr.push_back({{"actor", e.actor == SimSystem::kApp ? "app" : "selfdebugger"}, {"kind", e.kind}, {"detail", e.detail}});
    return arr.dump();
}

std::string verdict_to_json(const Scenario& scenario, const DeadlockVerdict& verdict, std::size_t depth) {
    nlohmann::json j;
    j["scenario"] = scenario.name;
    j["expected"] = to_string(scenario.expected);
    j["verdict"] = to_string(verdict.value);
    j["pass"] = verdict.value == scenario.expected;
    j["depth"] = depth;
    j["states"] = verdict.states;
    j["terminal_states"] = verdict.terminal_states;
    j["all_terminal_exited"] = verdict.all_terminal_exited;
    j["trace"] = nlohmann::json::parse(trace_to_json(verdict.trace));
    return j.dump();
}

}  // namespace selfdbg::sim
