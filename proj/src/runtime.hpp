#pragma once

#include "selfdbg/fragment_api.hpp"
#include "selfdbg/mini_debugger.hpp"
#include "selfdbg/target_codec.hpp"
#include "selfdbg/whitelist.hpp"

#include <sys/types.h>

#include <array>
#include <cstdint>

namespace selfdbg::detail {

inline constexpr std::size_t kPoolCapacity = 512;
inline constexpr std::size_t kMaxThreads = 64;
inline constexpr std::size_t kDebuggerStackSize = 512 * 1024;

struct PoolSite {
    std::uint64_t masked_stub;
    std::uint8_t fault_offset;
    std::uint8_t fault_kind;
    std::uint8_t flavor;
    std::uint8_t bound;
    std::uint32_t reserved;
};

struct FragmentRecord {
    std::uint64_t masked_entry;
    std::uint32_t id;
    std::uint8_t convention;
    std::uint8_t nsites;
    std::uint16_t reserved;
    std::array<std::uint16_t, kMaxSitesPerFragment> site_index;
};

// Everything the counterpart needs to classify switches. Plain bytes, so the
// Catcher can mirror the application's copy with one remote read.
struct Registry {
    Whitelist whitelist;
    std::array<PoolSite, kPoolCapacity> pool;
    std::uint32_t npool;
    std::uint32_t nfragments;
    std::array<FragmentRecord, kMaxFragments> fragments;
    std::uint32_t frozen;
    std::uint32_t keyed;
};

extern Registry g_registry;
extern SwitchContext g_switch_context;

struct RuntimeState {
    bool initialized;
    bool active;
    bool reciprocal;
    bool all_threads;
    ProcessRole role;
    pid_t self;
    pid_t peer;
    pid_t app_pid;
    pid_t designated_tid;
    Address loop_entry;
    Address stack_top;
    const CodecConfig* codec;
    Address peer_continuation;
    std::uint64_t switches;
    std::array<pid_t, kMaxThreads> threads;
    std::size_t nthreads;
};

extern RuntimeState g_rt;

void ensure_registry_key() noexcept;
Address pool_stub(const PoolSite& s) noexcept;
Address pool_pc(const PoolSite& s) noexcept;
const FragmentRecord* find_fragment(std::uint64_t id) noexcept;
Address fragment_entry(const FragmentRecord& r) noexcept;
// Fragment whose entry equals `entry`, or null.
const FragmentRecord* fragment_by_entry(Address entry) noexcept;
// Builds the identifier table for trap sites into `out` (index 0 = return).
std::size_t build_trap_table(std::array<Address, kMaxFragments + 1>& out) noexcept;

// Encodes `target` for one of the record's sites and executes that site.
FragmentResult raise_via_fragment_sites(const FragmentRecord& rec, Address target, bool returning);

[[noreturn]] void fail_closed(const char* reason) noexcept;

// Runs in the new Thrower after a call switch: executes the fragment and
// raises the return switch.
[[noreturn]] void run_migrated_fragment(const FragmentRecord& rec);

std::uint64_t raw_sigmask() noexcept;
void raw_set_sigmask(std::uint64_t mask) noexcept;
inline constexpr std::uint64_t kCatcherMask = ~((1ull << (9 - 1)) | (1ull << (19 - 1)));

}  // namespace selfdbg::detail

extern "C" {
void selfdbg_loop_entry();
[[noreturn]] void selfdbg_enter_loop(std::uint64_t stack_top);
[[noreturn]] void selfdbg_restore_and_jump(const selfdbg::RegisterSnapshot* snapshot);
[[noreturn]] void selfdbg_loop_main();
}
