#pragma once

#include "process.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace harness {

enum class AttackScenario { ExternalAttach, KillSelfDebugger, KillApp, SigtermBroadcast, SigstopCatcher };

enum class AttackOutcome { Denied, BothDead, CleanShutdown, DeadlockObserved, Compromised, ScenarioTimeout };

std::string_view to_string(AttackScenario s) noexcept;
std::string_view to_string(AttackOutcome o) noexcept;
std::optional<AttackScenario> attack_from_string(std::string_view name) noexcept;
AttackOutcome expected_outcome(AttackScenario s) noexcept;
const std::vector<AttackScenario>& all_attacks();

struct AttackOptions {
    std::string demo_path;
    std::string method = "segv-rw";
    Millis ready_timeout{5000};
    Millis death_deadline{1000};
    Millis scenario_timeout{10000};
};

struct AttackResult {
    AttackScenario scenario{};
    AttackOutcome expected{};
    AttackOutcome observed{};
    pid_t app = 0;
    pid_t selfdebugger = 0;
    double elapsed_ms = 0;        // attack to observed outcome
    std::size_t orphans = 0;      // processes left behind before the sweep
    std::vector<std::string> notes;

    bool passed() const noexcept { return observed == expected && orphans == 0; }
};

AttackResult run_attack(AttackScenario scenario, const AttackOptions& options);

}  // namespace harness
