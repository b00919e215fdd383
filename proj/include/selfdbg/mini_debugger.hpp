#pragma once

#include "selfdbg/fragment_api.hpp"
#include "selfdbg/remote_memory.hpp"
#include "selfdbg/switch_protocol.hpp"
#include "selfdbg/target_codec.hpp"
#include "selfdbg/types.hpp"
#include "selfdbg/whitelist.hpp"

#include <sys/types.h>

#include <array>
#include <cstdint>

namespace selfdbg {

// Per-process record at an address shared by both fork images. The process
// that transitions a counterpart writes the counterpart's copy.
struct SwitchContext {
    RegisterSnapshot archived{};
    std::uint64_t archived_mask = 0;  // signal mask at the time of the fault
    Address continuation = 0;         // return address the site will resume at
    std::uint64_t resumable = 0;
    std::array<std::uint64_t, kMaxFragmentArgs> args{};
    std::array<std::uint64_t, 2> result{};
    std::uint64_t fragment_id = 0;
    std::uint64_t sequence = 0;
    std::uint64_t in_fragment = 0;
};

const SwitchContext& switch_context() noexcept;
Address switch_context_address() noexcept;

struct DebuggerState {
    pid_t counterpart_pid = 0;
    ProcessRole role = ProcessRole::Thrower;
    Address loop_entry = 0;
    const Whitelist* whitelist = nullptr;
    const CodecConfig* codec = nullptr;
    std::size_t fragments = 0;
};

// Exit-kill only. Exit tracing would park a killed Catcher in an exit stop
// that its tracer, busy as Thrower, never collects.
inline constexpr unsigned kSeizeOptions = 0x00100000 /* EXITKILL */;

// Seizes `pid` with exit-kill. Throws AttachDenied or
// KernelTooOld.
DebuggerState attach_counterpart(pid_t pid);

DebuggerState debugger_state() noexcept;
Address loop_entry_address() noexcept;

// Switches to the reserved debugger stack and serves the counterpart.
[[noreturn]] void debugger_loop(const DebuggerState& state);

// Archives the stopped counterpart's context into its SwitchContext, points
// it at the loop entry on its debugger stack with all blockable signals
// blocked, and continues it with the fault suppressed. Throws NotStopped when
// `pid` is not in a debug stop, RegisterWriteFailed on write failure.
void transition_to_catcher(pid_t pid, bool resumable);

// Resumes `pid` at `continuation` with `result_regs` applied. When `pid` is
// this process the restore happens in place and the call does not return.
void apply_result_and_resume(pid_t pid, const RegisterSnapshot& result_regs, Address continuation);

RegisterSnapshot read_registers(pid_t pid);
void write_registers(pid_t pid, const RegisterSnapshot& regs);

}  // namespace selfdbg
