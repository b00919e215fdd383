#include "bench_worker.hpp"

#include "selfdbg/bootstrap.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/fragment_api.hpp"

#include "json.hpp"

#include <time.h>

#include <array>
#include <cstdio>
#include <iostream>

namespace demo {

namespace {

constexpr std::size_t kMaxSamples = 8192;

std::uint64_t g_scratch = 0x1122334455667788ull;
std::array<std::uint64_t, kMaxSamples> g_read_ns{};
std::array<std::uint64_t, kMaxSamples> g_write_ns{};

std::uint64_t now_ns() {
    timespec ts{};
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return static_cast<std::uint64_t>(ts.tv_sec) * 1000000000ull + static_cast<std::uint64_t>(ts.tv_nsec);
}

selfdbg::FragmentResult noop(const selfdbg::FragmentArgs& a) { return {a[0], 0}; }

selfdbg::FragmentResult memory_probe(const selfdbg::FragmentArgs& a) {
    const std::size_t n = a[0];
    const auto addr = reinterpret_cast<selfdbg::Address>(&g_scratch);
    std::uint64_t sink = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t t0 = now_ns();
        std::uint64_t v = 0;
        selfdbg::fragment_read(addr, &v, sizeof v);
        g_read_ns[i] = now_ns() - t0;
        sink += v;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t v = 0x1122334455667788ull + i;
        const std::uint64_t t0 = now_ns();
        selfdbg::fragment_write(addr, &v, sizeof v);
        g_write_ns[i] = now_ns() - t0;
    }
    selfdbg::fragment_write(reinterpret_cast<selfdbg::Address>(g_read_ns.data()), g_read_ns.data(), n * 8);
    selfdbg::fragment_write(reinterpret_cast<selfdbg::Address>(g_write_ns.data()), g_write_ns.data(), n * 8);
    return {sink, n};
}

}  // namespace

int run_bench_worker(selfdbg::ProtectionConfig cfg, std::size_t iterations, std::size_t warmup) {
    const selfdbg::FaultKind kind = selfdbg::fault_kind_of(cfg.method);
    try {
        selfdbg::protect_init(cfg);
    } catch (const selfdbg::Error& e) {
        std::fprintf(stderr, "protect_init: %s\n", e.what());
        return 2;
    }
    const auto noop_id = selfdbg::register_fragment(noop, kind, cfg.flavor, 1).fragment_id;
    const auto mem_id = selfdbg::register_fragment(memory_probe, kind, cfg.flavor, 1).fragment_id;

    for (std::size_t i = 0; i < warmup; ++i) selfdbg::invoke_migrated(noop_id, i);
    nlohmann::json out;
    out["method"] = std::string(selfdbg::to_string(cfg.method));
    out["protected"] = selfdbg::protection_active();
    out["switch_ns"] = nlohmann::json::array();
    for (std::size_t i = 0; i < iterations; ++i) {
        const std::uint64_t t0 = now_ns();
        const auto r = selfdbg::invoke_migrated(noop_id, i);
        const std::uint64_t dt = now_ns() - t0;
        if (r.r0 != i) {
            std::fprintf(stderr, "round trip %zu returned %llu\n", i, static_cast<unsigned long long>(r.r0));
            return 3;
        }
        out["switch_ns"].push_back(dt / 2);
    }

    const std::size_t n = std::min(kMaxSamples, std::max<std::size_t>(iterations * 10, 100));
    const auto r = selfdbg::invoke_migrated(mem_id, n);
    if (r.r1 != n) return 3;
    out["read_ns"] = std::vector<std::uint64_t>(g_read_ns.begin(), g_read_ns.begin() + static_cast<long>(n));
    out["write_ns"] = std::vector<std::uint64_t>(g_write_ns.begin(), g_write_ns.begin() + static_cast<long>(n));
    std::cout << out.dump() << std::endl;
    return 0;
}

int run_bench_init(selfdbg::ProtectionConfig cfg) {
    const std::uint64_t t0 = now_ns();
    try {
        selfdbg::protect_init(cfg);
    } catch (const selfdbg::Error& e) {
        std::fprintf(stderr, "protect_init: %s\n", e.what());
        return 2;
    }
    const std::uint64_t dt = now_ns() - t0;
    nlohmann::json out;
    out["init_ns"] = dt;
    out["protected"] = selfdbg::protection_active();
    std::cout << out.dump() << std::endl;
    return 0;
}

}  // namespace demo
