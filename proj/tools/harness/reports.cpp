#include "reports.hpp"

#include <unistd.h>

#include <climits>

namespace harness {

nlohmann::json attack_report(const std::vector<AttackResult>& results) {
    nlohmann::json j;
    j["attacks"] = nlohmann::json::array();
    bool all = true;
    for (const auto& r : results) {
        all = all && r.passed();
        j["attacks"].push_back({{"scenario", to_string(r.scenario)},
                                {"expected", to_string(r.expected)},
                                {"observed", to_string(r.observed)},
                                {"timed_out", r.observed == AttackOutcome::ScenarioTimeout},
                                {"passed", r.passed()},
                                {"app", r.app},
                                {"selfdebugger", r.selfdebugger},
                                {"elapsed_ms", r.elapsed_ms},
                                {"orphans", r.orphans},
                                {"notes", r.notes}});
    }
    j["all_passed"] = all;
    return j;
}

std::vector<SimRun> simulate(const std::vector<selfdbg::sim::Scenario>& scenarios, std::size_t depth) {
    std::vector<SimRun> runs;
    for (const auto& s : scenarios) {
        SimRun run{s, selfdbg::sim::explore(s, depth), depth, true};
        const auto again = selfdbg::sim::explore(s, depth);
        run.deterministic = again.value == run.verdict.value && again.states == run.verdict.states &&
                            selfdbg::sim::trace_to_json(again.trace) == selfdbg::sim::trace_to_json(run.verdict.trace);
        runs.push_back(std::move(run));
    }
    return runs;
}

nlohmann::json simulation_report(const std::vector<SimRun>& runs, std::size_t depth) {
    nlohmann::json j;
    j["depth"] = depth;
    j["scenarios"] = nlohmann::json::array();
    bool all = true;
    for (const auto& r : runs) {
        auto s = nlohmann::json::parse(selfdbg::sim::verdict_to_json(r.scenario, r.verdict, r.depth));
        s["deterministic"] = r.deterministic;
        s["pass"] = r.passed();
        s["invariants"] = {{"cleanup_at_most_once", r.verdict.cleanup_at_most_once},
                           {"usr1_only_to_thrower", r.verdict.usr1_only_to_thrower},
                           {"genuine_fault_kills_with_segv", r.verdict.genuine_fault_kills_with_segv}};
        all = all && r.passed();
        j["scenarios"].push_back(s);
    }
    j["all_passed"] = all;
    return j;
}

bool scan_passed(const selfdbg::FootprintReport& report, bool traps_expected) noexcept {
    if (traps_expected) return report.site_count > 0 && report.trap_opcodes == report.site_count;
    return report.trap_opcodes == 0;
}

nlohmann::json scan_report(const std::string& binary, const selfdbg::FootprintReport& report, bool traps_expected) {
    auto j = nlohmann::json::parse(report.to_json());
    j["binary"] = binary;
    j["traps_expected"] = traps_expected;
    j["pass"] = scan_passed(report, traps_expected);
    return j;
}

std::string executable_dir() {
    char buf[PATH_MAX];
    const ssize_t n = readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0) return ".";
    std::string path(buf, static_cast<std::size_t>(n));
    const auto slash = path.rfind('/');
    return slash == std::string::npos ? "." : path.substr(0, slash);
}

}  // namespace harness
