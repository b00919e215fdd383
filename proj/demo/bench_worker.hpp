#pragma once

#include "selfdbg/config.hpp"

#include <cstddef>

namespace demo {

// Times round trips of a no-op migrated fragment and, from inside a
// fragment, single-word accesses to the application. Prints one JSON line.
int run_bench_worker(selfdbg::ProtectionConfig cfg, std::size_t iterations, std::size_t warmup);

// Times protect_init itself and prints {"init_ns": ...}.
int run_bench_init(selfdbg::ProtectionConfig cfg);

}  // namespace demo
