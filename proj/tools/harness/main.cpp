#include "attacks.hpp"
#include "bench.hpp"
#include "process.hpp"
#include "reports.hpp"

#include "selfdbg/config.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/fragment_api.hpp"
#include "selfdbg/kernel_sim.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

struct Paths {
    std::string demo;
    std::string trap;
};

// "-" writes to stdout; empty writes nothing.
void emit_json(const std::string& where, const nlohmann::json& j) {
    if (where.empty()) return;
    if (where == "-") {
        std::cout << j.dump(2) << std::endl;
        return;
    }
    std::ofstream(where) << j.dump(2) << '\n';
}

int cmd_run_demo(const Paths& paths, bool unprotected, std::size_t fragments, std::size_t inputs, std::uint64_t seed,
                 const std::string& method, const std::string& flavor) {
    std::vector<std::string> argv{paths.demo, "run", "--fragments", std::to_string(fragments), "--inputs",
                                  std::to_string(inputs), "--seed", std::to_string(seed), "--method", method,
                                  "--flavor", flavor};
    if (unprotected) argv.push_back("--unprotected");
    const auto r = harness::run_capture(argv, harness::Millis(120000));
    std::cout << r.out;
    std::cerr << r.err;
    if (r.timed_out) {
        std::cerr << "selfdbg-harness: demo timed out\n";
        return 3;
    }
    return WIFEXITED(r.status) ? WEXITSTATUS(r.status) : 128 + WTERMSIG(r.status);
}

int cmd_attack(const Paths& paths, const std::vector<std::string>& names, bool all, const std::string& method,
               const std::string& json_out) {
    std::vector<harness::AttackScenario> chosen;
    if (all || names.empty()) chosen = harness::all_attacks();
    for (const auto& n : names) {
        const auto s = harness::attack_from_string(n);
        if (!s) {
            std::cerr << "selfdbg-harness: unknown attack scenario " << n << "\n";
            return 2;
        }
        chosen.push_back(*s);
    }
    harness::AttackOptions opts;
    opts.demo_path = paths.demo;
    opts.method = method;
    std::vector<harness::AttackResult> results;
    bool timeouts = false;
    for (auto s : chosen) {
        results.push_back(harness::run_attack(s, opts));
        const auto& r = results.back();
        timeouts = timeouts || r.observed == harness::AttackOutcome::ScenarioTimeout;
        if (json_out != "-") {
            std::printf("%-18s expected=%-16s observed=%-16s %8.1f ms orphans=%zu %s\n",
                        std::string(harness::to_string(s)).c_str(),
                        std::string(harness::to_string(r.expected)).c_str(),
                        std::string(harness::to_string(r.observed)).c_str(), r.elapsed_ms, r.orphans,
                        r.passed() ? "PASS" : (r.observed == harness::AttackOutcome::ScenarioTimeout ? "TIMEOUT" : "FAIL"));
        }
    }
    const auto report = harness::attack_report(results);
    emit_json(json_out, report);
    if (report["all_passed"].get<bool>()) return 0;
    return timeouts ? 3 : 1;
}

int cmd_bench(const Paths& paths, const std::string& method, std::size_t iterations, std::size_t init_runs,
              const std::string& json_out) {
    harness::BenchRunOptions o;
    o.demo_path = paths.demo;
    o.trap_path = paths.trap;
    o.iterations = iterations;
    o.init_runs = init_runs;
    if (!method.empty()) {
        o.only = selfdbg::method_from_string(method);
        if (!o.only) {
            std::cerr << "selfdbg-harness: unknown method " << method << "\n";
            return 2;
        }
    }
    harness::BenchReport rep;
    try {
        rep = harness::run_bench(o);
    } catch (const harness::InsufficientSamples& e) {
        std::cerr << "selfdbg-harness: " << e.what() << "\n";
        return 4;
    }
    if (json_out != "-") std::cout << harness::render_table(rep);
    emit_json(json_out.empty() ? "-" : json_out, harness::to_json(rep));
    return rep.all_checks_passed() ? 0 : 1;
}

int cmd_simulate(const std::vector<std::string>& names, bool all, std::size_t depth, const std::string& config,
                 const std::string& json_out) {
    std::vector<selfdbg::sim::Scenario> extra;
    if (!config.empty()) extra = selfdbg::load_config_file(config).scenarios;
    std::vector<selfdbg::sim::Scenario> chosen;
    if (all || (names.empty() && extra.empty())) chosen = selfdbg::sim::scenario_catalog();
    for (const auto& n : names) {
        const auto it = std::find_if(extra.begin(), extra.end(), [&](const auto& s) { return s.name == n; });
        chosen.push_back(it != extra.end() ? *it : selfdbg::sim::find_scenario(n));
    }
    if (names.empty())
        for (const auto& s : extra) chosen.push_back(s);

    const auto runs = harness::simulate(chosen, depth);
    if (json_out != "-") {
        for (const auto& r : runs)
            std::printf("%-24s expected=%-12s verdict=%-13s states=%-7zu %s\n", r.scenario.name.c_str(),
                        std::string(to_string(r.scenario.expected)).c_str(),
                        std::string(to_string(r.verdict.value)).c_str(), r.verdict.states,
                        r.passed() ? "PASS" : "DEVIATION");
    }
    const auto report = harness::simulation_report(runs, depth);
    emit_json(json_out, report);
    return report["all_passed"].get<bool>() ? 0 : 1;
}

int cmd_scan(const std::string& binary, bool traps_expected, const std::string& json_out) {
    const auto rep = selfdbg::static_footprint_report(binary);
    const auto j = harness::scan_report(binary, rep, traps_expected);
    if (json_out != "-")
        std::printf("%s: %zu sites, %zu trap opcodes, %zu with adjacent setup: %s\n", binary.c_str(), rep.site_count,
                    rep.trap_opcodes, rep.adjacent_pairs, j["pass"].get<bool>() ? "PASS" : "FAIL");
    emit_json(json_out, j);
    return j["pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selfdbg test, attack and benchmark harness"};
    app.require_subcommand(1);
    Paths paths{harness::executable_dir() + "/selfdbg-demo", harness::executable_dir() + "/selfdbg-bench-trap"};
    app.add_option("--demo-binary", paths.demo, "protected demo executable");
    app.add_option("--trap-binary", paths.trap, "trap-site benchmark executable");

    bool unprotected = false;
    std::size_t fragments = 3;
    std::size_t inputs = 100;
    std::uint64_t seed = 1;
    std::string method;
    std::string flavor = "inline";
    auto* run = app.add_subcommand("run-demo", "run the demo workload");
    run->add_flag("--unprotected", unprotected);
    run->add_option("--fragments", fragments)->check(CLI::Range(0, 10));
    run->add_option("--inputs", inputs);
    run->add_option("--seed", seed);
    run->add_option("--method", method, "segv-rw or segv-x");
    run->add_option("--flavor", flavor, "inline or reused");

    std::vector<std::string> names;
    bool all = false;
    std::string json_out;
    auto* attack = app.add_subcommand("attack", "run attack scenarios against a protected pair");
    attack->add_option("scenario", names, "external-attach, kill-selfdebugger, kill-app, sigterm-broadcast, sigstop-catcher");
    attack->add_flag("--all", all);
    attack->add_option("--method", method);
    attack->add_option("--json", json_out, "write the JSON report here ('-' for stdout only)");

    std::size_t iterations = 200;
    std::size_t init_runs = 30;
    auto* bench = app.add_subcommand("bench", "measure the overhead table");
    bench->add_option("--method", method, "trap, segv-rw or segv-x");
    bench->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
    bench->add_option("--init-runs", init_runs)->check(CLI::PositiveNumber);
    bench->add_option("--json", json_out, "write the JSON report here ('-' for stdout only)");

    std::size_t depth = selfdbg::sim::kDefaultDepth;
    std::string config;
    auto* simulate = app.add_subcommand("simulate", "explore signal-delivery scenarios");
    simulate->add_option("--scenario", names, "scenario name (repeatable)");
    simulate->add_flag("--all", all);
    simulate->add_option("--depth", depth);
    simulate->add_option("--config", config, "file with extra scenarios");
    simulate->add_option("--json", json_out, "write the JSON report here ('-' for stdout only)");

    std::string binary;
    bool traps_expected = false;
    auto* scan = app.add_subcommand("scan", "count trap opcodes at invocation sites");
    scan->add_option("binary", binary)->required();
    scan->add_flag("--expect-traps", traps_expected, "require exactly one trap per site");
    scan->add_option("--json", json_out, "write the JSON report here ('-' for stdout only)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run_demo(paths, unprotected, fragments, inputs, seed, method.empty() ? "segv-rw" : method, flavor);
        if (*attack) return cmd_attack(paths, names, all, method.empty() ? "segv-rw" : method, json_out);
        if (*bench) return cmd_bench(paths, method, iterations, init_runs, json_out);
        if (*simulate) return cmd_simulate(names, all, depth, config, json_out);
        if (*scan) return cmd_scan(binary, traps_expected, json_out);
    } catch (const selfdbg::Error& e) {
        std::cerr << "selfdbg-harness: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "selfdbg-harness: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
