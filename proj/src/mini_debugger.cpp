#include "selfdbg/mini_debugger.hpp"
#include "selfdbg/bootstrap.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/event_log.hpp"
#include "selfdbg/x86_decode.hpp"

#include "runtime.hpp"

#include <elf.h>
#include <signal.h>
#include <sys/ptrace.h>
#include <sys/syscall.h>
#include <sys/uio.h>
#include <sys/user.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace selfdbg {

namespace detail {

RuntimeState g_rt{};
SwitchContext g_switch_context{};

namespace {

alignas(64) std::uint8_t g_debugger_stack[kDebuggerStackSize];
RegisterSnapshot g_resume_snapshot{};
std::uint64_t g_peer_mask = 0;

constexpr std::uint64_t kTrapFlag = 0x100;
constexpr std::uint64_t kDirectionFlag = 0x400;

}  // namespace

std::uint64_t raw_sigmask() noexcept {
    std::uint64_t old = 0;
    syscall(SYS_rt_sigprocmask, SIG_BLOCK, nullptr, &old, sizeof old);
    return old;
}

void raw_set_sigmask(std::uint64_t mask) noexcept {
    syscall(SYS_rt_sigprocmask, SIG_SETMASK, &mask, nullptr, sizeof mask);
}

void fail_closed(const char* reason) noexcept {
    log_event("fail_closed", "%s", reason);
    if (g_rt.peer > 0) kill(g_rt.peer, SIGKILL);
    kill(getpid(), SIGKILL);
    _exit(127);
}

}  // namespace detail

using namespace detail;

namespace {

RegisterSnapshot from_user(const user_regs_struct& u) noexcept {
    RegisterSnapshot s;
    s[Reg::Rax] = u.rax;
    s[Reg::Rcx] = u.rcx;
    s[Reg::Rdx] = u.rdx;
    s[Reg::Rbx] = u.rbx;
    s[Reg::Rsp] = u.rsp;
    s[Reg::Rbp] = u.rbp;
    s[Reg::Rsi] = u.rsi;
    s[Reg::Rdi] = u.rdi;
    s[Reg::R8] = u.r8;
    s[Reg::R9] = u.r9;
    s[Reg::R10] = u.r10;
    s[Reg::R11] = u.r11;
    s[Reg::R12] = u.r12;
    s[Reg::R13] = u.r13;
    s[Reg::R14] = u.r14;
    s[Reg::R15] = u.r15;
    s.pc = u.rip;
    s.flags = u.eflags;
    return s;
}

void to_user(const RegisterSnapshot& s, user_regs_struct& u) noexcept {
    u.rax = s[Reg::Rax];
    u.rcx = s[Reg::Rcx];
    u.rdx = s[Reg::Rdx];
    u.rbx = s[Reg::Rbx];
    u.rsp = s[Reg::Rsp];
    u.rbp = s[Reg::Rbp];
    u.rsi = s[Reg::Rsi];
    u.rdi = s[Reg::Rdi];
    u.r8 = s[Reg::R8];
    u.r9 = s[Reg::R9];
    u.r10 = s[Reg::R10];
    u.r11 = s[Reg::R11];
    u.r12 = s[Reg::R12];
    u.r13 = s[Reg::R13];
    u.r14 = s[Reg::R14];
    u.r15 = s[Reg::R15];
    u.rip = s.pc;
    u.eflags = s.flags;
}

bool get_user_regs(pid_t pid, user_regs_struct& u) noexcept {
    return ptrace(PTRACE_GETREGS, pid, nullptr, &u) == 0;
}

// Reads up to 16 instruction bytes at `pc`, locally when the pc lies in the
// shared text segment.
std::size_t fetch_code(pid_t pid, Address pc, std::uint8_t (&buf)[16]) noexcept {
    const CodeRange code = executable_code_range();
    if (code.contains(pc)) {
        const std::size_t n = (code.end - pc) < 16 ? static_cast<std::size_t>(code.end - pc) : 16;
        std::memcpy(buf, reinterpret_cast<const void*>(pc), n);
        return n;
    }
    try {
        RemoteMemory(pid).read(pc, buf, 16);
        return 16;
    } catch (const Error&) {
        return 0;
    }
}

enum class StopKind { Traced, Exited, Signaled };

struct RawStop {
    StopKind kind = StopKind::Traced;
    pid_t pid = 0;
    int status = 0;
};

// Turns a ptrace stop into a SwitchEvent. Returns false if the tracee
// vanished before it could be inspected.
bool build_event(const RawStop& stop, SwitchEvent& ev) noexcept {
    ev = SwitchEvent{};
    ev.pid = stop.pid;
    const int status = stop.status;
    const int event = status >> 16;
    ev.signal = WSTOPSIG(status);

    if (event == PTRACE_EVENT_EXIT) {
        unsigned long msg = 0;
        ptrace(PTRACE_GETEVENTMSG, stop.pid, nullptr, &msg);
        ev.cause = StopCause::ExitNotice;
        ev.exit_status = static_cast<int>(msg);
        return true;
    }
    if (event == PTRACE_EVENT_STOP) {
        ev.cause = StopCause::GroupStop;
        return true;
    }
    if (event != 0) {
        ev.cause = StopCause::Other;
        return true;
    }

    siginfo_t si{};
    if (ptrace(PTRACE_GETSIGINFO, stop.pid, nullptr, &si) != 0) return false;
    user_regs_struct u{};
    if (!get_user_regs(stop.pid, u)) return false;
    ev.regs = from_user(u);
    ev.faulting_pc = u.rip;

    const bool kernel_generated = si.si_code > 0;
    if (ev.signal == SIGTRAP && si.si_code == SI_KERNEL) {
        ev.cause = StopCause::Fault;
        ev.fault_kind = FaultKind::TrapReference;
        ev.faulting_pc = u.rip - 1;
        return true;
    }
    if (ev.signal != SIGSEGV || !kernel_generated) {
        ev.cause = StopCause::Signal;
        return true;
    }

    ev.cause = StopCause::Fault;
    ev.fault_kind = FaultKind::SegvLoadStore;
    if (si.si_addr != nullptr) ev.fault_address = reinterpret_cast<Address>(si.si_addr);
    std::uint8_t code[16] = {};
    const std::size_t n = fetch_code(stop.pid, u.rip, code);
    if (n == 0) return true;
    const auto insn = x86::decode(std::span<const std::uint8_t>(code, n));
    if (!insn) return true;
    if (const auto op = x86::fault_operand(*insn, ev.regs, u.rip)) {
        ev.fault_kind = op->kind;
        ev.fault_address = op->address;
    }
    return true;
}

void pull_registry() {
    if (g_registry.frozen) return;
    RemoteMemory(g_rt.peer).read(reinterpret_cast<Address>(&g_registry), &g_registry, sizeof g_registry);
}

[[noreturn]] void mirror_exit(int status) noexcept {
    if (WIFSIGNALED(status)) {
        const int sig = WTERMSIG(status);
        log_event("counterpart_exit", "signal=%d", sig);
        if (sig == SIGKILL) kill(getpid(), SIGKILL);
        _exit(128 + sig);
    }
    log_event("counterpart_exit", "code=%d", WEXITSTATUS(status));
    _exit(WEXITSTATUS(status));
}

RawStop wait_stop() noexcept {
    for (;;) {
        int status = 0;
        const pid_t pid = waitpid(-1, &status, __WALL);
        if (pid < 0) {
            if (errno == EINTR) continue;
            fail_closed("counterpart vanished");
        }
        RawStop s;
        s.pid = pid;
        s.status = status;
        if (WIFEXITED(status)) s.kind = StopKind::Exited;
        else if (WIFSIGNALED(status)) s.kind = StopKind::Signaled;
        else if (!WIFSTOPPED(status)) continue;
        return s;
    }
}

void resume(pid_t pid, int sig) noexcept {
    if (ptrace(PTRACE_CONT, pid, nullptr, reinterpret_cast<void*>(static_cast<long>(sig))) != 0 && errno != ESRCH)
        fail_closed("continue failed");
}

void handle_other_thread(const RawStop& stop, const SwitchEvent& ev) noexcept {
    switch (ev.cause) {
        case StopCause::GroupStop:
            ptrace(PTRACE_LISTEN, stop.pid, nullptr, nullptr);
            return;
        case StopCause::Fault:
        case StopCause::Signal:
            resume(stop.pid, ev.signal);
            return;
        default:
            resume(stop.pid, 0);
            return;
    }
}

// Non-reciprocal mode: the fragment runs here while the application stays
// stopped, then its registers are patched and it continues.
void serve_in_place(const FragmentRecord& rec, const SwitchEvent& ev) {
    RemoteMemory mem(g_rt.peer);
    mem.read(reinterpret_cast<Address>(&g_switch_context.args), &g_switch_context.args,
             sizeof g_switch_context.args);
    FragmentArgs args;
    args.words = g_switch_context.args;
    g_switch_context.in_fragment = 1;
    FragmentResult r{};
    try {
        r = reinterpret_cast<FragmentFn>(fragment_entry(rec))(args);
    } catch (...) {
        fail_closed("fragment threw");
    }
    g_switch_context.in_fragment = 0;
    RegisterSnapshot regs = ev.regs;
    regs[Reg::Rax] = r.r0;
    regs[Reg::Rdx] = r.r1;
    const Address continuation = mem.read_word(regs.sp());
    apply_result_and_resume(g_rt.peer, regs, continuation);
    ++g_rt.switches;
}

[[noreturn]] void become_thrower_for_call(const FragmentRecord& rec) {
    RemoteMemory mem(g_rt.peer);
    mem.read(reinterpret_cast<Address>(&g_switch_context.args), &g_switch_context.args,
             sizeof g_switch_context.args);
    g_switch_context.fragment_id = rec.id;
    g_rt.role = ProcessRole::Thrower;
    ++g_rt.switches;
    log_event("become_thrower", "fragment=%u", rec.id);
    raw_set_sigmask(g_peer_mask);
    run_migrated_fragment(rec);
}

[[noreturn]] void become_thrower_for_return(const SwitchRequest& req) {
    std::uint64_t result[2] = {0, 0};
    RemoteMemory(g_rt.peer).read(reinterpret_cast<Address>(&g_switch_context.result), result, sizeof result);
    g_rt.role = ProcessRole::Thrower;
    ++g_rt.switches;
    log_event("become_thrower", "resume=%s", std::string(to_string(req.site.fault_kind)).c_str());
    RegisterSnapshot& s = g_resume_snapshot;
    s = g_switch_context.archived;
    s[Reg::Rax] = result[0];
    s[Reg::Rdx] = result[1];
    s[Reg::Rsp] += 8;
    s.pc = g_switch_context.continuation;
    s.flags &= ~(kTrapFlag | kDirectionFlag);
    g_switch_context.resumable = 0;
    g_switch_context.in_fragment = 0;
    raw_set_sigmask(g_switch_context.archived_mask);
    selfdbg_restore_and_jump(&s);
}

}  // namespace

const SwitchContext& switch_context() noexcept { return g_switch_context; }
Address switch_context_address() noexcept { return reinterpret_cast<Address>(&g_switch_context); }

Address loop_entry_address() noexcept { return reinterpret_cast<Address>(&selfdbg_loop_entry); }

DebuggerState debugger_state() noexcept {
    DebuggerState s;
    s.counterpart_pid = g_rt.peer;
    s.role = g_rt.role;
    s.loop_entry = loop_entry_address();
    s.whitelist = &g_registry.whitelist;
    s.codec = g_rt.codec;
    s.fragments = g_registry.nfragments;
    return s;
}

DebuggerState attach_counterpart(pid_t pid) {
    if (ptrace(PTRACE_SEIZE, pid, nullptr, reinterpret_cast<void*>(static_cast<unsigned long>(kSeizeOptions))) != 0) {
        const int err = errno;
        if (err == EINVAL) throw Error(Errc::KernelTooOld, "seize options rejected");
        throw Error(Errc::AttachDenied, "seize of pid " + std::to_string(pid) + ": " + std::strerror(err));
    }
    DebuggerState s = debugger_state();
    s.counterpart_pid = pid;
    return s;
}

RegisterSnapshot read_registers(pid_t pid) {
    user_regs_struct u{};
    if (!get_user_regs(pid, u)) throw Error(Errc::NotStopped, "registers of pid " + std::to_string(pid));
    return from_user(u);
}

void write_registers(pid_t pid, const RegisterSnapshot& regs) {
    user_regs_struct u{};
    if (!get_user_regs(pid, u)) throw Error(Errc::NotStopped, "registers of pid " + std::to_string(pid));
    to_user(regs, u);
    if (ptrace(PTRACE_SETREGS, pid, nullptr, &u) != 0)
        throw Error(Errc::RegisterWriteFailed, "pid " + std::to_string(pid) + ": " + std::strerror(errno));
}

void transition_to_catcher(pid_t pid, bool resumable) {
    user_regs_struct u{};
    if (!get_user_regs(pid, u)) throw Error(Errc::NotStopped, "pid " + std::to_string(pid) + " is not in a debug stop");

    std::uint64_t mask = 0;
    if (ptrace(PTRACE_GETSIGMASK, pid, reinterpret_cast<void*>(sizeof mask), &mask) != 0)
        throw Error(Errc::NotStopped, "signal mask of pid " + std::to_string(pid));

    RemoteMemory mem(pid);
    const Address continuation = mem.read_word(u.rsp);
    struct {
        RegisterSnapshot archived;
        std::uint64_t mask;
        Address continuation;
        std::uint64_t resumable;
    } head{from_user(u), mask, continuation, resumable ? 1u : 0u};
    static_assert(offsetof(SwitchContext, resumable) == sizeof(RegisterSnapshot) + 16);
    mem.write(switch_context_address(), &head, sizeof head);

    if (resumable) g_rt.peer_continuation = continuation;
    g_peer_mask = mask;

    u.rip = loop_entry_address();
    u.rsp = reinterpret_cast<Address>(g_debugger_stack + kDebuggerStackSize);
    u.rbp = 0;
    u.eflags &= ~(kTrapFlag | kDirectionFlag);
    u.orig_rax = static_cast<unsigned long long>(-1);
    if (ptrace(PTRACE_SETREGS, pid, nullptr, &u) != 0)
        throw Error(Errc::RegisterWriteFailed, "pid " + std::to_string(pid) + ": " + std::strerror(errno));
    const std::uint64_t blocked = kCatcherMask;
    if (ptrace(PTRACE_SETSIGMASK, pid, reinterpret_cast<void*>(sizeof blocked), &blocked) != 0)
        throw Error(Errc::RegisterWriteFailed, "signal mask of pid " + std::to_string(pid));
    if (ptrace(PTRACE_CONT, pid, nullptr, nullptr) != 0)
        throw Error(Errc::RegisterWriteFailed, "continue of pid " + std::to_string(pid));
}

void apply_result_and_resume(pid_t pid, const RegisterSnapshot& result_regs, Address continuation) {
    RegisterSnapshot s = result_regs;
    s[Reg::Rsp] += 8;
    s.pc = continuation;
    if (pid == getpid()) {
        g_resume_snapshot = s;
        selfdbg_restore_and_jump(&g_resume_snapshot);
    }
    write_registers(pid, s);
    if (ptrace(PTRACE_CONT, pid, nullptr, nullptr) != 0)
        throw Error(Errc::RegisterWriteFailed, "continue of pid " + std::to_string(pid));
}

void debugger_loop(const DebuggerState& state) {
    g_rt.peer = state.counterpart_pid;
    g_rt.role = ProcessRole::Catcher;
    raw_set_sigmask(kCatcherMask);
    selfdbg_enter_loop(reinterpret_cast<Address>(g_debugger_stack + kDebuggerStackSize));
}

}  // namespace selfdbg

using namespace selfdbg;
using namespace selfdbg::detail;

extern "C" [[noreturn]] void selfdbg_loop_main() {
    if (g_rt.role == ProcessRole::Thrower) {
        g_rt.role = ProcessRole::Catcher;
        log_event("become_catcher", "peer=%d", static_cast<int>(g_rt.peer));
    } else {
        log_event("catcher_ready", "peer=%d", static_cast<int>(g_rt.peer));
    }

    std::array<Address, kMaxFragments + 1> trap_table{};
    for (;;) {
        const RawStop stop = wait_stop();
        if (stop.kind != StopKind::Traced) {
            if (stop.pid == g_rt.peer) mirror_exit(stop.status);
            continue;
        }

        SwitchEvent ev;
        if (!build_event(stop, ev)) continue;
        if (stop.pid != g_rt.peer) {
            handle_other_thread(stop, ev);
            continue;
        }

        try {
            pull_registry();
        } catch (const Error&) {
            fail_closed("registry unreadable");
        }
        const std::size_t ntrap = build_trap_table(trap_table);
        Classification cls = classify(ev, g_registry.whitelist, *g_rt.codec,
                                      TrapTable(trap_table.data(), ntrap));

        const FragmentRecord* rec = nullptr;
        bool returning = false;
        if (auto* req = std::get_if<SwitchRequest>(&cls)) {
            const bool pending = g_switch_context.resumable != 0;
            returning = pending && (req->target == g_switch_context.continuation ||
                                    (req->site.fault_kind == FaultKind::TrapReference &&
                                     req->target == kResumePendingTarget));
            if (!returning) rec = fragment_by_entry(req->target);
            if (!returning && rec == nullptr) cls = GenuineFault{ev.signal};
        }

        ActionPlan plan;
        try {
            plan = plan_for(cls, g_rt.role);
        } catch (const ContractViolation&) {
            fail_closed("planning outside the Catcher role");
        }

        for (const Action& a : plan) {
            switch (a.kind) {
                case ActionKind::TransitionCounterpartToCatcher:
                    if (!g_rt.reciprocal) break;
                    try {
                        transition_to_catcher(stop.pid, !returning);
                    } catch (const Error&) {
                        fail_closed("transition failed");
                    }
                    break;
                case ActionKind::TransferControlTo:
                    try {
                        if (!g_rt.reciprocal) {
                            serve_in_place(*rec, ev);
                            break;
                        }
                        if (returning) become_thrower_for_return(std::get<SwitchRequest>(cls));
                        become_thrower_for_call(*rec);
                    } catch (const Error&) {
                        fail_closed("transfer failed");
                    }
                    break;
                case ActionKind::ForwardSignal:
                    log_event("forward_signal", "signal=%d", a.signal);
                    resume(stop.pid, a.signal);
                    break;
                case ActionKind::DetachAndExit:
                    ptrace(PTRACE_DETACH, stop.pid, nullptr, nullptr);
                    mirror_exit(ev.exit_status);
                case ActionKind::SuppressAndContinue:
                    if (ev.cause == StopCause::GroupStop) ptrace(PTRACE_LISTEN, stop.pid, nullptr, nullptr);
                    else resume(stop.pid, 0);
                    break;
            }
        }
    }
}
