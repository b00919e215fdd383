#pragma once

#include "selfdbg/config.hpp"
#include "selfdbg/types.hpp"

#include <sys/types.h>

#include <cstdint>
#include <vector>

namespace selfdbg {

enum class HandshakePhase : std::uint8_t { Forked, ChildAttached, ParentAttached, Ready };
std::string_view to_string(HandshakePhase p) noexcept;

struct SignalPolicy {
    bool ignored_child_notices = true;
    std::uint64_t blocked_set_when_catcher = 0;  // kernel sigset bits, signal n at bit n-1
    std::uint64_t unblockable = 0;

    static SignalPolicy standard() noexcept;
};

// Forks the self-debugger and completes the reciprocal attach. Returns
// Thrower in the application; the self-debugger never returns. With
// SELFDBG_DISABLE=1 nothing is forked and Thrower is returned.
// Throws ForkFailed, AttachDenied, HandshakeTimeout, AlreadyInitialized,
// ProbeFailure.
ProcessRole protect_init(const ProtectionConfig& config = ProtectionConfig::from_environment());

[[noreturn]] void protect_fini(int exit_code);

bool protection_active() noexcept;
ProcessRole current_role() noexcept;
pid_t counterpart_pid() noexcept;
pid_t application_pid() noexcept;

void suppress_child_notices() noexcept;
void restore_child_notices() noexcept;
void block_all_when_catcher() noexcept;
void unblock_on_throw(std::uint64_t original_mask) noexcept;
std::uint64_t current_signal_mask() noexcept;

// Seizes every live thread of `pid`. Threads that vanish mid-enumeration are
// retried and then skipped.
std::vector<pid_t> attach_all_threads(pid_t pid);

}  // namespace selfdbg
