#include "bench_worker.hpp"
#include "workload.hpp"

#include "selfdbg/bootstrap.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/event_log.hpp"
#include "selfdbg/fragment_api.hpp"

#include "CLI11.hpp"

#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace {

struct Options {
    std::uint64_t seed = 1;
    std::size_t fragments = 3;
    std::size_t inputs = 100;
    bool unprotected = false;
    bool non_reciprocal = false;
    std::string method = "segv-rw";
    std::string flavor = "inline";
    std::string config;
    std::string crash_kind = "null";
    std::size_t threads = 3;
    std::size_t iterations = 200;
    std::size_t warmup = 10;
};

volatile sig_atomic_t g_term_runs = 0;

selfdbg::FragmentResult tick(const selfdbg::FragmentArgs& a) { return {a[0] + 1, 0}; }

void on_term(int) {
    if (getpid() == selfdbg::application_pid()) g_term_runs = g_term_runs + 1;
}

void on_usr1(int) {
    char buf[96];
    const char* role = selfdbg::current_role() == selfdbg::ProcessRole::Thrower ? "Thrower" : "Catcher";
    const int n = std::snprintf(buf, sizeof buf, "usr1 pid=%d role=%s\n", static_cast<int>(getpid()), role);
    if (n > 0) {
        const ssize_t rc = write(STDOUT_FILENO, buf, static_cast<std::size_t>(n));
        (void)rc;
    }
    selfdbg::log_event("usr1_handler", "role=%s", role);
}

selfdbg::ProtectionConfig make_config(const Options& o) {
    auto cfg = selfdbg::ProtectionConfig::from_environment();
    if (!o.config.empty()) cfg = selfdbg::load_config_file(o.config, cfg);
    if (const auto m = selfdbg::method_from_string(o.method)) cfg.method = *m;
    else throw selfdbg::Error(selfdbg::Errc::ConfigSyntax, "unknown method " + o.method);
    if (cfg.method == selfdbg::SwitchMethod::Trap)
        throw selfdbg::Error(selfdbg::Errc::ConfigSyntax, "this build carries no breakpoint sites");
    if (o.flavor == "reused") cfg.flavor = selfdbg::SiteFlavor::ReusedCode;
    else if (o.flavor == "inline") cfg.flavor = selfdbg::SiteFlavor::Inline;
    else throw selfdbg::Error(selfdbg::Errc::ConfigSyntax, "unknown flavor " + o.flavor);
    if (o.non_reciprocal) cfg.reciprocal = false;
    return cfg;
}

// Announces the pair to whoever drives the demo.
void announce() {
    std::printf("ready app=%d selfdebugger=%d\n", static_cast<int>(getpid()),
                static_cast<int>(selfdbg::protection_active() ? selfdbg::counterpart_pid() : 0));
    std::fflush(stdout);
}

std::vector<selfdbg::FragmentId> register_stages(const selfdbg::ProtectionConfig& cfg, std::size_t n) {
    std::vector<selfdbg::FragmentId> ids;
    const auto kind = selfdbg::fault_kind_of(cfg.method);
    for (std::size_t i = 0; i < n && i < demo::kStageCount; ++i)
        ids.push_back(selfdbg::register_fragment(demo::stages()[i].fn, kind, cfg.flavor, 2).fragment_id);
    return ids;
}

int mode_run(const Options& o) {
    std::vector<selfdbg::FragmentId> ids;
    if (!o.unprotected) {
        const auto cfg = make_config(o);
        selfdbg::protect_init(cfg);
        selfdbg::log_event("app_start", "mode=run");
        ids = register_stages(cfg, o.fragments);
    }
    for (std::size_t i = 0; i < o.inputs; ++i) {
        auto buf = demo::make_input(o.seed, i);
        std::printf("%s\n", demo::process_input(buf, i, ids).c_str());
    }
    std::fflush(stdout);
    return 0;
}

int mode_idle(const Options& o) {
    struct sigaction sa {};
    sa.sa_handler = on_term;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGTERM, &sa, nullptr);
    const auto cfg = make_config(o);
    selfdbg::protect_init(cfg);
    const auto id = selfdbg::register_fragment(tick, selfdbg::fault_kind_of(cfg.method), cfg.flavor, 2).fragment_id;
    selfdbg::log_event("app_start", "mode=idle");
    announce();
    std::uint64_t counter = 0;
    while (g_term_runs == 0) {
        counter = selfdbg::invoke_migrated(id, counter).r0;
        usleep(2000);
    }
    std::printf("cleanup pid=%d handler_runs=%d switches=%llu\n", static_cast<int>(getpid()),
                static_cast<int>(g_term_runs), static_cast<unsigned long long>(counter));
    std::fflush(stdout);
    return 0;
}

int mode_usr1(const Options& o) {
    struct sigaction sa {};
    sa.sa_handler = on_usr1;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGUSR1, &sa, nullptr);
    const auto cfg = make_config(o);
    selfdbg::protect_init(cfg);
    const auto id = selfdbg::register_fragment(tick, selfdbg::fault_kind_of(cfg.method), cfg.flavor, 2).fragment_id;
    selfdbg::log_event("app_start", "mode=usr1");
    announce();
    std::string line;
    std::uint64_t counter = 0;
    while (std::getline(std::cin, line)) {
        counter = selfdbg::invoke_migrated(id, counter).r0;
        std::printf("switch %llu done\n", static_cast<unsigned long long>(counter));
        std::fflush(stdout);
    }
    return 0;
}

int mode_crash(const Options& o) {
    std::vector<selfdbg::FragmentId> ids;
    if (!o.unprotected) {
        const auto cfg = make_config(o);
        selfdbg::protect_init(cfg);
        ids = register_stages(cfg, o.fragments);
    }
    auto buf = demo::make_input(o.seed, 0);
    std::printf("%s\n", demo::process_input(buf, 0, ids).c_str());
    std::fflush(stdout);

    volatile std::uintptr_t bad = 16;
    if (o.crash_kind == "noncanonical") bad = 0x0100000000001000ull;
    if (o.crash_kind == "jump") {
        auto fn = reinterpret_cast<void (*)()>(static_cast<std::uintptr_t>(bad));
        fn();
    }
    *reinterpret_cast<volatile int*>(static_cast<std::uintptr_t>(bad)) = 1;
    return 0;
}

int mode_threads(const Options& o) {
    // A pipe would not do: the forked self-debugger keeps a copy of the
    // write end open.
    std::atomic<bool> stop{false};
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < o.threads; ++i) {
        workers.emplace_back([&stop] {
            while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(2));
        });
    }
    auto cfg = make_config(o);
    cfg.attach_all_threads = true;
    selfdbg::protect_init(cfg);
    const auto id = selfdbg::register_fragment(tick, selfdbg::fault_kind_of(cfg.method), cfg.flavor, 2).fragment_id;
    announce();
    std::uint64_t counter = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        counter = selfdbg::invoke_migrated(id, counter).r0;
        std::printf("switch %llu done\n", static_cast<unsigned long long>(counter));
        std::fflush(stdout);
    }
    stop = true;
    for (auto& t : workers) t.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selfdbg demo protectee"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "input seed");
        sub->add_option("--fragments", o.fragments, "number of migrated stages (0-10)")->check(CLI::Range(0, 10));
        sub->add_flag("--unprotected", o.unprotected, "run without protect_init");
        sub->add_flag("--non-reciprocal", o.non_reciprocal, "one-way self-debugging");
        sub->add_option("--method", o.method, "segv-rw or segv-x");
        sub->add_option("--flavor", o.flavor, "inline or reused");
        sub->add_option("--config", o.config, "configuration file");
    };
    auto* run = app.add_subcommand("run", "checksum/compression workload");
    common(run);
    run->add_option("--inputs", o.inputs, "number of inputs");
    auto* idle = app.add_subcommand("idle", "switch periodically until SIGTERM");
    common(idle);
    auto* usr1 = app.add_subcommand("usr1", "one switch per stdin line; SIGUSR1 handler reports its role");
    common(usr1);
    auto* crash = app.add_subcommand("crash", "run one input, then fault at a non-site address");
    common(crash);
    crash->add_option("--crash-kind", o.crash_kind, "null, noncanonical or jump");
    auto* threads = app.add_subcommand("threads", "pre-spawn worker threads and attach to all of them");
    common(threads);
    threads->add_option("--threads", o.threads, "extra threads");
    auto* bench = app.add_subcommand("bench-worker", "time switches and remote memory access");
    common(bench);
    bench->add_option("--iterations", o.iterations);
    bench->add_option("--warmup", o.warmup);
    auto* bench_init = app.add_subcommand("bench-init", "time protect_init");
    common(bench_init);
    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return mode_run(o);
        if (*idle) return mode_idle(o);
        if (*usr1) return mode_usr1(o);
        if (*crash) return mode_crash(o);
        if (*threads) return mode_threads(o);
        if (*bench) return demo::run_bench_worker(make_config(o), o.iterations, o.warmup);
        if (*bench_init) {
            auto cfg = make_config(o);
            return demo::run_bench_init(cfg);
        }
    } catch (const selfdbg::Error& e) {
        std::fprintf(stderr, "selfdbg-demo: %s\n", e.what());
        return 2;
    }
    return 1;
}
