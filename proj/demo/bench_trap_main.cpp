#include "bench_worker.hpp"

#include "selfdbg/errors.hpp"

#include "CLI11.hpp"

#include <cstdio>

// Reference build: breakpoint invocation sites only.
int main(int argc, char** argv) {
    CLI::App app{"selfdbg trap-site benchmark worker"};
    app.require_subcommand(1);
    std::size_t iterations = 200;
    std::size_t warmup = 10;
    auto* worker = app.add_subcommand("bench-worker", "time switches through breakpoint sites");
    worker->add_option("--iterations", iterations);
    worker->add_option("--warmup", warmup);
    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = selfdbg::ProtectionConfig::from_environment();
        cfg.method = selfdbg::SwitchMethod::Trap;
        cfg.flavor = selfdbg::SiteFlavor::Inline;
        return demo::run_bench_worker(cfg, iterations, warmup);
    } catch (const selfdbg::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
}
