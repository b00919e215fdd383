#include "support.hpp"

#include "attacks.hpp"
#include "bench.hpp"
#include "reports.hpp"

#include "selfdbg/fragment_api.hpp"

#include "json.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <map>

using namespace itest;

TEST_CASE("attack suite passes and is idempotent") {
    harness::AttackOptions o;
    o.demo_path = SELFDBG_DEMO_PATH;
    for (int round = 0; round < 2; ++round) {
        for (auto s : harness::all_attacks()) {
            const auto r = harness::run_attack(s, o);
            CAPTURE(round);
            CAPTURE(harness::to_string(s));
            CAPTURE(harness::to_string(r.observed));
            CHECK(r.observed == harness::expected_outcome(s));
            CHECK(r.orphans == 0);
            CHECK(r.passed());
        }
        std::this_thread::sleep_for(Millis(100));
        CHECK(harness::leftover_processes({}).empty());
    }
}

TEST_CASE("percentiles interpolate between ranks") {
    std::vector<double> v;
    for (int i = 1; i <= 11; ++i) v.push_back(i * 10.0);
    std::reverse(v.begin(), v.end());
    CHECK(harness::percentile(v, 0.5) == doctest::Approx(60.0));
    CHECK(harness::percentile(v, 0.1) == doctest::Approx(20.0));
    CHECK(harness::percentile(v, 0.9) == doctest::Approx(100.0));
    CHECK(harness::percentile({1.0, 2.0}, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("reference column holds the published ARM measurements") {
    using harness::Aspect;
    CHECK(harness::reference_ns(Aspect::Init) == doctest::Approx(16e6));
    CHECK(harness::reference_ns(Aspect::RemoteRead) == doctest::Approx(4.4e3));
    CHECK(harness::reference_ns(Aspect::RemoteWrite) == doctest::Approx(4.8e3));
    CHECK(harness::reference_ns(Aspect::SwitchTrap) == doctest::Approx(7.9e6));
    CHECK(harness::reference_ns(Aspect::SwitchSegvRW) == doctest::Approx(65e3));
    CHECK(harness::reference_ns(Aspect::SwitchSegvX) == doctest::Approx(60e3));
}

TEST_CASE("too few samples raise InsufficientSamples") {
    using harness::Aspect;
    CHECK_THROWS_AS(harness::make_result(Aspect::SwitchSegvRW, std::vector<double>(99, 1.0)),
                    harness::InsufficientSamples);
    CHECK_NOTHROW(harness::make_result(Aspect::SwitchSegvRW, std::vector<double>(100, 1.0)));
    CHECK_THROWS_AS(harness::make_result(Aspect::Init, std::vector<double>(29, 1.0)), harness::InsufficientSamples);

    const auto r = harness::run_capture({SELFDBG_HARNESS_PATH, "bench", "--method", "segv-rw", "--iterations", "20",
                                         "--init-runs", "30"},
                                        Millis(60000));
    CHECK(WIFEXITED(r.status));
    CHECK(WEXITSTATUS(r.status) == 4);
    CHECK(r.err.find("InsufficientSamples") != std::string::npos);
}

TEST_CASE("derived checks compare medians") {
    harness::BenchReport rep;
    rep.rows = {{harness::Aspect::SwitchTrap, 100, 300, 0, 0},
                {harness::Aspect::SwitchSegvRW, 100, 100, 0, 0},
                {harness::Aspect::SwitchSegvX, 100, 400, 0, 0}};
    harness::derive_checks(rep);
    std::map<std::string, harness::DerivedCheck> by_name;
    for (const auto& c : rep.checks) by_name[c.name] = c;
    CHECK(by_name["trap_at_least_segv_rw"].passed);
    CHECK(by_name["trap_at_least_segv_rw"].ratio == doctest::Approx(3.0));
    CHECK_FALSE(by_name["trap_at_least_segv_x"].passed);
    CHECK_FALSE(by_name["segv_rw_vs_segv_x_within_2x"].passed);
    CHECK_FALSE(by_name["read_vs_write_within_2x"].evaluated);
    CHECK_FALSE(rep.all_checks_passed());
}

TEST_CASE("site scans: no traps by default, one per site in the trap build, fewer adjacent pairs when reused") {
    const auto demo = selfdbg::static_footprint_report(SELFDBG_DEMO_PATH);
    CHECK(demo.site_count > 0);
    CHECK(demo.trap_opcodes == 0);
    const auto trap = selfdbg::static_footprint_report(SELFDBG_BENCH_TRAP_PATH);
    CHECK(trap.site_count > 0);
    CHECK(trap.trap_opcodes == trap.site_count);
    const auto in = selfdbg::static_footprint_report(SELFDBG_FIXTURE_INLINE_PATH);
    const auto re = selfdbg::static_footprint_report(SELFDBG_FIXTURE_REUSED_PATH);
    CHECK(in.site_count == re.site_count);
    CHECK(re.adjacent_pairs < in.adjacent_pairs);
    CHECK_THROWS_AS(selfdbg::static_footprint_report("/nonexistent/binary"), selfdbg::Error);
}

TEST_CASE("switch totality: transitions in both directions balance over a clean run") {
    harness::SpawnOptions so;
    so.argv = {SELFDBG_DEMO_PATH, "run", "--fragments", "3", "--inputs", "10"};
    harness::Child c(so);
    c.drain(Millis(10000));
    const auto st = c.wait(Millis(3000));
    REQUIRE(st.has_value());
    CHECK(WIFEXITED(*st));
    std::map<std::string, int> counts;
    std::map<pid_t, int> pids;
    pid_t app = 0;
    pid_t last_thrower = 0;
    for (const auto& e : harness::read_events(c.event_path())) {
        ++counts[e.event];
        ++pids[e.pid];
        if (e.event == "app_start") app = e.pid;
        if (e.event == "become_thrower") last_thrower = e.pid;
    }
    CHECK(counts["become_thrower"] > 0);
    // The app may exit before the self-debugger logs its last become_catcher;
    // EXITKILL then ends it mid-transition.
    const int unmatched = counts["become_thrower"] - counts["become_catcher"];
    CHECK((unmatched == 0 || (unmatched == 1 && last_thrower == app)));
    CHECK(counts["catcher_ready"] == 1);
    CHECK(pids.size() == 2);
}

TEST_CASE("simulate report via the CLI") {
    const auto r = harness::run_capture({SELFDBG_HARNESS_PATH, "simulate", "--all", "--json", "-"}, Millis(30000));
    REQUIRE(r.exited_ok());
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["all_passed"] == true);
    CHECK(j["depth"] == 24);
    CHECK(j["scenarios"].size() == 8);
    for (const auto& s : j["scenarios"]) {
        CHECK(s["deterministic"] == true);
        CHECK(s["verdict"] == s["expected"]);
    }
}

TEST_CASE("scan CLI exit codes") {
    CHECK(harness::run_capture({SELFDBG_HARNESS_PATH, "scan", SELFDBG_DEMO_PATH}, Millis(10000)).exited_ok());
    CHECK(harness::run_capture({SELFDBG_HARNESS_PATH, "scan", "--expect-traps", SELFDBG_BENCH_TRAP_PATH},
                               Millis(10000))
              .exited_ok());
    CHECK_FALSE(
        harness::run_capture({SELFDBG_HARNESS_PATH, "scan", "--expect-traps", SELFDBG_DEMO_PATH}, Millis(10000))
            .exited_ok());
}
