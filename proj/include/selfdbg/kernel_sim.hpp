#pragma once

#include "selfdbg/switch_protocol.hpp"
#include "selfdbg/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace selfdbg::sim {

enum class Sig : std::uint8_t { CHLD, TERM, USR1, SEGV, STOP, KILL };
inline constexpr int kSigCount = 6;

std::string_view to_string(Sig s) noexcept;
std::optional<Sig> sig_from_string(std::string_view name) noexcept;

using SigSet = std::uint8_t;
constexpr SigSet bit(Sig s) noexcept { return static_cast<SigSet>(1u << static_cast<unsigned>(s)); }
inline constexpr SigSet kAllSignals = (1u << kSigCount) - 1;
inline constexpr SigSet kBlockable = kAllSignals & ~(bit(Sig::KILL) | bit(Sig::STOP));

enum class RunState : std::uint8_t { Running, DebugStopped, Exited };
std::string_view to_string(RunState s) noexcept;

enum class StopReason : std::uint8_t { None, SwitchFault, GenuineFault, Signal, ExitNotice, GroupStop };

struct SimProcess {
    int pid = 0;
    RunState run_state = RunState::Running;
    SigSet pending = 0;  // standard signals coalesce, so a set suffices
    SigSet blocked = 0;
    bool child_notices_suppressed = false;
    ProcessRole role = ProcessRole::Thrower;

    StopReason stop = StopReason::None;
    Sig stop_signal = Sig::CHLD;   // meaningful for Signal and GenuineFault stops
    std::optional<Sig> death_signal;
    std::uint8_t cleanups = 0;

    friend bool operator==(const SimProcess&, const SimProcess&) = default;
};

enum class Step : std::uint8_t { Switch, Exit, GenuineFault };
std::string_view to_string(Step s) noexcept;

struct SimEvent {
    int actor = 0;
    std::string kind;
    std::string detail;
};

struct SimSystem {
    static constexpr int kApp = 0;
    static constexpr int kSelfDebugger = 1;

    std::array<SimProcess, 2> processes{};
    bool exitkill = true;
    bool block_when_catcher = true;
    std::uint8_t pc = 0;                 // next program step of the logical application
    bool usr1_seen_by_catcher = false;
    std::uint8_t usr1_deliveries = 0;
    std::vector<SimEvent> trace;

    SimProcess& proc(int pid) { return processes[static_cast<std::size_t>(pid)]; }
    const SimProcess& proc(int pid) const { return processes[static_cast<std::size_t>(pid)]; }
    static int other(int pid) noexcept { return 1 - pid; }

    bool both_exited() const noexcept;
    bool both_stopped() const noexcept;
};

struct Policy {
    bool suppress_child_notices = true;
    bool block_when_catcher = true;
    bool exitkill = true;
};

enum class Target : std::uint8_t { App, SelfDebugger, Catcher, Thrower, Both };
std::string_view to_string(Target t) noexcept;

struct Injection {
    enum class Kind : std::uint8_t { Signal, CatcherFault } kind = Kind::Signal;
    Target target = Target::Both;
    Sig signal = Sig::TERM;
};

enum class VerdictKind : std::uint8_t { DeadlockFree, Deadlock, DepthExceeded };
std::string_view to_string(VerdictKind v) noexcept;

struct Scenario {
    std::string name;
    Policy policy;
    std::vector<Step> program;
    std::vector<Injection> injections;  // each usable at most once, at any point
    VerdictKind expected = VerdictKind::DeadlockFree;
};

SimSystem initial_system(const Scenario& scenario);

// Sends and, when deliverable, immediately delivers `signal` to `pid`.
SimSystem sim_deliver(const SimSystem& system, int pid, Sig signal);

// One mini-debugger iteration of `pid` over its stopped counterpart, driven
// by plan_for. Throws ContractViolation when the precondition is not met.
SimSystem sim_debugger_step(const SimSystem& system, int pid);

struct DeadlockVerdict {
    VerdictKind value = VerdictKind::DeadlockFree;
    std::vector<SimEvent> trace;       // deadlock trace when value == Deadlock
    std::size_t states = 0;
    std::size_t terminal_states = 0;
    std::size_t max_depth_reached = 0;
    bool all_terminal_exited = true;   // every terminal state has both processes Exited
    bool cleanup_at_most_once = true;  // the SIGTERM cleanup never runs twice
    bool usr1_only_to_thrower = true;  // no user signal is handled while Catcher
    bool genuine_fault_kills_with_segv = true;
};

inline constexpr std::size_t kDefaultDepth = 24;

DeadlockVerdict explore(const Scenario& scenario, std::size_t depth = kDefaultDepth);

const std::vector<Scenario>& scenario_catalog();
// Throws Error{UnknownScenario}.
const Scenario& find_scenario(std::string_view name);

std::string trace_to_json(const std::vector<SimEvent>& trace);
std::string verdict_to_json(const Scenario& scenario, const DeadlockVerdict& verdict, std::size_t depth);

}  // namespace selfdbg::sim
