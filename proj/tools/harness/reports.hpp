#pragma once

#include "attacks.hpp"

#include "selfdbg/fragment_api.hpp"
#include "selfdbg/kernel_sim.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace harness {

nlohmann::json attack_report(const std::vector<AttackResult>& results);

struct SimRun {
    selfdbg::sim::Scenario scenario;
    selfdbg::sim::DeadlockVerdict verdict;
    std::size_t depth = 0;
    bool deterministic = true;  // a second exploration produced the same verdict and trace

    bool passed() const noexcept { return verdict.value == scenario.expected && deterministic; }
};

// Explores each scenario twice and compares the results.
std::vector<SimRun> simulate(const std::vector<selfdbg::sim::Scenario>& scenarios, std::size_t depth);
nlohmann::json simulation_report(const std::vector<SimRun>& runs, std::size_t depth);

nlohmann::json scan_report(const std::string& binary, const selfdbg::FootprintReport& report, bool traps_expected);
bool scan_passed(const selfdbg::FootprintReport& report, bool traps_expected) noexcept;

// Directory holding the running executable, for locating sibling binaries.
std::string executable_dir();

}  // namespace harness
