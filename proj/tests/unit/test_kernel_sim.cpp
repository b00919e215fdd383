#include "selfdbg/errors.hpp"
#include "selfdbg/kernel_sim.hpp"

#include "doctest.h"

#include "json.hpp"

using namespace selfdbg;
using namespace selfdbg::sim;

namespace {

const std::map<std::string, VerdictKind> kExpected{
    {"ChildNoticeDefault", VerdictKind::Deadlock},
    {"ChildNoticeSuppressed", VerdictKind::DeadlockFree},
    {"SigtermBroadcast", VerdictKind::DeadlockFree},
    {"UserSignalToCatcher", VerdictKind::DeadlockFree},
    {"GenuineFaultInThrower", VerdictKind::DeadlockFree},
    {"GenuineFaultInCatcher", VerdictKind::Deadlock},
    {"SigstopToCatcher", VerdictKind::Deadlock},
    {"SigkillEither", VerdictKind::DeadlockFree},
};

SimSystem full_policy_system() { return initial_system(find_scenario("SigtermBroadcast")); }

}  // namespace

TEST_CASE("catalog holds the eight scenarios with their verdicts at depth 24") {
    const auto& cat = scenario_catalog();
    CHECK(cat.size() == kExpected.size());
    for (const auto& sc : cat) {
        CAPTURE(sc.name);
        REQUIRE(kExpected.count(sc.name) == 1);
        CHECK(sc.expected == kExpected.at(sc.name));
        const auto v = explore(sc, 24);
        CHECK(v.value == kExpected.at(sc.name));
        if (v.value == VerdictKind::Deadlock) {
            CHECK_FALSE(v.trace.empty());
        }
    }
}

TEST_CASE("exploration is deterministic") {
    for (const auto& sc : scenario_catalog()) {
        const auto a = explore(sc);
        const auto b = explore(sc);
        CAPTURE(sc.name);
        CHECK(a.value == b.value);
        CHECK(a.states == b.states);
        CHECK(a.terminal_states == b.terminal_states);
        CHECK(trace_to_json(a.trace) == trace_to_json(b.trace));
        CHECK(verdict_to_json(sc, a, 24) == verdict_to_json(sc, b, 24));
    }
}

TEST_CASE("deadlock-free scenarios end with both processes exited") {
    for (const char* name : {"ChildNoticeSuppressed", "SigtermBroadcast", "UserSignalToCatcher",
                             "GenuineFaultInThrower", "SigkillEither"}) {
        const auto v = explore(find_scenario(name));
        CAPTURE(name);
        CHECK(v.all_terminal_exited);
        CHECK(v.cleanup_at_most_once);
        CHECK(v.usr1_only_to_thrower);
    }
    CHECK(explore(find_scenario("GenuineFaultInThrower")).genuine_fault_kills_with_segv);
}

TEST_CASE("child-notice deadlock trace ends with both processes stopped") {
    const auto v = explore(find_scenario("ChildNoticeDefault"));
    REQUIRE(v.value == VerdictKind::Deadlock);
    REQUIRE_FALSE(v.trace.empty());
    CHECK(v.trace.back().detail.find("app=DebugStopped") != std::string::npos);
    CHECK(v.trace.back().detail.find("dbg=DebugStopped") != std::string::npos);
}

TEST_CASE("sim_deliver: SIGKILL with exit-kill leaves both exited") {
    for (int victim : {SimSystem::kApp, SimSystem::kSelfDebugger}) {
        const auto s = sim_deliver(full_policy_system(), victim, Sig::KILL);
        CHECK(s.proc(0).run_state == RunState::Exited);
        CHECK(s.proc(1).run_state == RunState::Exited);
    }
}

TEST_CASE("sim_deliver: blocked SIGTERM to the Catcher stays pending") {
    const auto s = sim_deliver(full_policy_system(), SimSystem::kSelfDebugger, Sig::TERM);
    const auto& catcher = s.proc(SimSystem::kSelfDebugger);
    CHECK(catcher.role == ProcessRole::Catcher);
    CHECK(catcher.run_state == RunState::Running);
    CHECK((catcher.pending & bit(Sig::TERM)) != 0);
    CHECK(s.proc(SimSystem::kApp).run_state == RunState::Running);
}

TEST_CASE("sim_deliver: SIGTERM to the Thrower stops it for its debugger") {
    const auto s = sim_deliver(full_policy_system(), SimSystem::kApp, Sig::TERM);
    CHECK(s.proc(SimSystem::kApp).run_state == RunState::DebugStopped);
    // The Catcher's child notice is suppressed, so it keeps running.
    CHECK(s.proc(SimSystem::kSelfDebugger).run_state == RunState::Running);
    CHECK(s.proc(SimSystem::kSelfDebugger).pending == 0);
}

TEST_CASE("sim_deliver: without suppression a stop queues a child notice for the tracer") {
    auto s = initial_system(find_scenario("ChildNoticeDefault"));
    s = sim_deliver(s, SimSystem::kApp, Sig::TERM);
    CHECK(s.proc(SimSystem::kApp).run_state == RunState::DebugStopped);
    // The unblocked notice stops the Catcher in turn.
    CHECK(s.proc(SimSystem::kSelfDebugger).run_state == RunState::DebugStopped);
    CHECK(s.proc(SimSystem::kSelfDebugger).stop_signal == Sig::CHLD);
    CHECK(s.both_stopped());
}

TEST_CASE("Exited is absorbing") {
    auto s = sim_deliver(full_policy_system(), SimSystem::kApp, Sig::KILL);
    for (Sig sig : {Sig::TERM, Sig::USR1, Sig::STOP, Sig::KILL, Sig::SEGV}) {
        s = sim_deliver(s, SimSystem::kApp, sig);
        CHECK(s.proc(SimSystem::kApp).run_state == RunState::Exited);
        CHECK(s.proc(SimSystem::kSelfDebugger).run_state == RunState::Exited);
    }
}

TEST_CASE("debugger step: forwarded SIGTERM runs the termination path once") {
    auto s = sim_deliver(full_policy_system(), SimSystem::kApp, Sig::TERM);
    s = sim_debugger_step(s, SimSystem::kSelfDebugger);
    CHECK(s.proc(SimSystem::kApp).cleanups == 1);
    // The app reports its exit to the self-debugger, which detaches and exits.
    CHECK(s.proc(SimSystem::kApp).run_state == RunState::DebugStopped);
    s = sim_debugger_step(s, SimSystem::kSelfDebugger);
    CHECK(s.both_exited());
}

TEST_CASE("debugger step: whitelisted fault swaps the roles") {
    Scenario sc = find_scenario("ChildNoticeSuppressed");
    sc.program = {Step::Switch, Step::Exit};
    const auto v = explore(sc);
    CHECK(v.value == VerdictKind::DeadlockFree);
    // A stop sent to the app only deadlocks once the app holds the Catcher
    // role, so the trace must contain the swap.
    Scenario stop_app{"StopApp", Policy{}, {Step::Switch, Step::Switch, Step::Exit},
                      {{Injection::Kind::Signal, Target::App, Sig::STOP}}, VerdictKind::Deadlock};
    const auto w = explore(stop_app);
    REQUIRE(w.value == VerdictKind::Deadlock);
    bool swapped = false;
    for (const auto& e : w.trace)
        if (e.kind == "debugger" && e.detail.find("app=Running/Catcher dbg=Running/Thrower") != std::string::npos)
            swapped = true;
    CHECK(swapped);
}

TEST_CASE("debugger step requires a stopped counterpart") {
    CHECK_THROWS_AS(sim_debugger_step(full_policy_system(), SimSystem::kSelfDebugger), ContractViolation);
    auto s = sim_deliver(full_policy_system(), SimSystem::kApp, Sig::TERM);
    CHECK_THROWS_AS(sim_debugger_step(s, SimSystem::kApp), ContractViolation);
}

TEST_CASE("exit-kill propagates in the next step, and not without it") {
    Scenario sc{"no-exitkill", Policy{true, true, false}, {Step::Switch, Step::Exit},
                {{Injection::Kind::Signal, Target::SelfDebugger, Sig::KILL}}, VerdictKind::DeadlockFree};
    auto s = initial_system(sc);
    s = sim_deliver(s, SimSystem::kSelfDebugger, Sig::KILL);
    CHECK(s.proc(SimSystem::kSelfDebugger).run_state == RunState::Exited);
    CHECK(s.proc(SimSystem::kApp).run_state == RunState::Running);
    CHECK_FALSE(explore(sc).all_terminal_exited);

    sc.policy.exitkill = true;
    CHECK(explore(sc).all_terminal_exited);
}

TEST_CASE("an unblocked user signal stops the Catcher for good") {
    Scenario sc = find_scenario("UserSignalToCatcher");
    CHECK(explore(sc).usr1_only_to_thrower);
    sc.policy.block_when_catcher = false;
    CHECK(explore(sc).value == VerdictKind::Deadlock);
}

TEST_CASE("shallow depth bound reports DepthExceeded") {
    const auto v = explore(find_scenario("SigtermBroadcast"), 2);
    CHECK(v.value == VerdictKind::DepthExceeded);
}

TEST_CASE("unknown scenario") {
    try {
        find_scenario("NoSuchScenario");
        FAIL("expected UnknownScenario");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownScenario);
    }
}

TEST_CASE("verdict json carries the report fields") {
    const auto& sc = find_scenario("SigstopToCatcher");
    const auto j = nlohmann::json::parse(verdict_to_json(sc, explore(sc), 24));
    for (const char* k : {"scenario", "expected", "verdict", "pass", "depth", "states", "terminal_states",
                          "all_terminal_exited", "trace"})
        CHECK(j.contains(k));
    CHECK(j["verdict"] == "Deadlock");
    CHECK(j["pass"] == true);
    CHECK(j["trace"].is_array());
}
