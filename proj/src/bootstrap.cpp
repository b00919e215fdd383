#include "selfdbg/bootstrap.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/event_log.hpp"
#include "selfdbg/mini_debugger.hpp"

#include "runtime.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/ptrace.h>
#include <sys/random.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

namespace selfdbg {

using namespace detail;

std::string_view to_string(HandshakePhase p) noexcept {
    switch (p) {
        case HandshakePhase::Forked: return "Forked";
        case HandshakePhase::ChildAttached: return "ChildAttached";
        case HandshakePhase::ParentAttached: return "ParentAttached";
        case HandshakePhase::Ready: return "Ready";
    }
    return "?";
}

SignalPolicy SignalPolicy::standard() noexcept {
    SignalPolicy p;
    p.blocked_set_when_catcher = kCatcherMask;
    p.unblockable = ~kCatcherMask;
    return p;
}

namespace {

pid_t own_tid() noexcept { return static_cast<pid_t>(syscall(SYS_gettid)); }

pid_t tracer_of_self() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("TracerPid:", 0) == 0) return static_cast<pid_t>(std::strtol(line.c_str() + 10, nullptr, 10));
    }
    return 0;
}

bool write_all(int fd, const void* buf, std::size_t len) noexcept {
    const auto* p = static_cast<const std::uint8_t*>(buf);
    while (len > 0) {
        const ssize_t n = ::write(fd, p, len);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        p += n;
        len -= static_cast<std::size_t>(n);
    }
    return true;
}

// Reads exactly `len` bytes or gives up at the deadline.
bool read_all(int fd, void* buf, std::size_t len, std::chrono::milliseconds timeout) noexcept {
    auto* p = static_cast<std::uint8_t*>(buf);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (len > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return false;
        pollfd pfd{fd, POLLIN, 0};
        const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) return false;
        const ssize_t n = ::read(fd, p, len);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        p += n;
        len -= static_cast<std::size_t>(n);
    }
    return true;
}

struct ChildReply {
    char status;
    std::int32_t err;
    Address loop_entry;
};

struct GoMessage {
    char tag;
    std::int32_t designated_tid;
};

[[noreturn]] void run_child(pid_t parent, int from_parent, int to_parent, const ProtectionConfig& cfg) {
    prctl(PR_SET_PDEATHSIG, SIGKILL);
    if (getppid() != parent) _exit(1);
    g_rt.self = getpid();
    g_rt.app_pid = parent;

    GoMessage go{};
    if (!read_all(from_parent, &go, sizeof go, cfg.handshake_timeout) || go.tag != 'G') _exit(1);
    g_rt.peer = go.designated_tid;
    g_rt.designated_tid = go.designated_tid;

    ChildReply reply{'A', 0, loop_entry_address()};
    try {
        if (cfg.attach_all_threads) {
            const auto tids = attach_all_threads(parent);
            g_rt.nthreads = std::min(tids.size(), kMaxThreads);
            std::copy_n(tids.begin(), g_rt.nthreads, g_rt.threads.begin());
            if (std::find(tids.begin(), tids.end(), go.designated_tid) == tids.end())
                throw Error(Errc::AttachDenied, "designated thread not seized");
        } else {
            attach_counterpart(go.designated_tid);
        }
    } catch (const Error& e) {
        reply.status = 'D';
        reply.err = e.code() == Errc::KernelTooOld ? EINVAL : EPERM;
    }
    if (reply.status == 'A') log_event("handshake", "phase=ChildAttached tracee=%d", static_cast<int>(go.designated_tid));
    write_all(to_parent, &reply, sizeof reply);
    if (reply.status != 'A') _exit(1);

    char ready = 0;
    if (!read_all(from_parent, &ready, 1, cfg.handshake_timeout) || ready != 'R') _exit(1);
    ::close(from_parent);
    ::close(to_parent);

    g_rt.active = true;
    g_rt.role = ProcessRole::Catcher;
    debugger_loop(debugger_state());
}

void reap(pid_t child) noexcept {
    kill(child, SIGKILL);
    int st = 0;
    while (waitpid(child, &st, __WALL) < 0 && errno == EINTR) {
    }
}

}  // namespace

void suppress_child_notices() noexcept {
    struct sigaction sa {};
    sa.sa_handler = SIG_DFL;
    sa.sa_flags = SA_NOCLDSTOP;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGCHLD, &sa, nullptr);
}

void restore_child_notices() noexcept {
    struct sigaction sa {};
    sa.sa_handler = SIG_DFL;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGCHLD, &sa, nullptr);
}

void block_all_when_catcher() noexcept { raw_set_sigmask(kCatcherMask); }
void unblock_on_throw(std::uint64_t original_mask) noexcept { raw_set_sigmask(original_mask); }
std::uint64_t current_signal_mask() noexcept { return raw_sigmask(); }

bool protection_active() noexcept { return g_rt.active; }
ProcessRole current_role() noexcept { return g_rt.role; }
pid_t counterpart_pid() noexcept { return g_rt.peer; }
pid_t application_pid() noexcept { return g_rt.app_pid; }

std::vector<pid_t> attach_all_threads(pid_t pid) {
    std::vector<pid_t> seized;
    const std::string dir = "/proc/" + std::to_string(pid) + "/task";
    for (int pass = 0; pass < 8; ++pass) {
        DIR* d = opendir(dir.c_str());
        if (d == nullptr) throw Error(Errc::AttachDenied, "cannot enumerate " + dir);
        bool fresh = false;
        while (dirent* ent = readdir(d)) {
            if (ent->d_name[0] == '.') continue;
            const pid_t tid = static_cast<pid_t>(std::strtol(ent->d_name, nullptr, 10));
            if (std::find(seized.begin(), seized.end(), tid) != seized.end()) continue;
            if (ptrace(PTRACE_SEIZE, tid, nullptr,
                       reinterpret_cast<void*>(static_cast<unsigned long>(kSeizeOptions))) == 0) {
                seized.push_back(tid);
                fresh = true;
            } else if (errno == ESRCH) {
                fresh = true;  // thread left mid-enumeration; look again
            } else {
                closedir(d);
                if (errno == EINVAL) throw Error(Errc::KernelTooOld, "seize options rejected");
                throw Error(Errc::AttachDenied, "seize of tid " + std::to_string(tid) + ": " + std::strerror(errno));
            }
        }
        closedir(d);
        if (!fresh) break;
    }
    std::sort(seized.begin(), seized.end());
    return seized;
}

ProcessRole protect_init(const ProtectionConfig& config) {
    if (g_rt.initialized) throw Error(Errc::AlreadyInitialized, "protect_init called twice");
    g_rt.initialized = true;
    g_rt.role = ProcessRole::Thrower;
    g_rt.self = getpid();
    g_rt.app_pid = getpid();
    g_rt.designated_tid = own_tid();
    set_event_fd(config.event_fd);
    ensure_registry_key();

    std::uint64_t seed = 0;
    if (config.seed) seed = *config.seed;
    else if (getrandom(&seed, sizeof seed, 0) != static_cast<ssize_t>(sizeof seed)) seed = static_cast<std::uint64_t>(getpid());
    auto* codec = new CodecConfig(CodecConfig::make_default(config.ns, executable_code_range(), seed, config.mask, config.key));
    validate_codec_config(*codec);
    g_rt.codec = codec;

    if (const char* off = std::getenv("SELFDBG_DISABLE"); off && std::string_view(off) == "1") {
        log_event("handshake", "phase=Disabled");
        return ProcessRole::Thrower;
    }
    if (const pid_t tracer = tracer_of_self(); tracer != 0)
        throw Error(Errc::AttachDenied, "already traced by pid " + std::to_string(tracer));
    if (config.probe) probe_namespace(config.ns, config.probe_samples);

    g_rt.reciprocal = config.reciprocal;
    g_rt.all_threads = config.attach_all_threads;
    if (config.suppress_child_notices) suppress_child_notices();
    else restore_child_notices();

    int down[2];
    int up[2];
    if (pipe2(down, O_CLOEXEC) != 0 || pipe2(up, O_CLOEXEC) != 0) throw Error(Errc::ForkFailed, "pipe");

    const std::uint64_t original_mask = raw_sigmask();
    std::fflush(nullptr);
    raw_set_sigmask(kCatcherMask);
    const pid_t parent = getpid();
    const pid_t child = fork();
    if (child < 0) {
        const int err = errno;
        raw_set_sigmask(original_mask);
        ::close(down[0]); ::close(down[1]); ::close(up[0]); ::close(up[1]);
        throw Error(Errc::ForkFailed, std::strerror(err));
    }
    if (child == 0) {
        ::close(down[1]);
        ::close(up[0]);
        run_child(parent, down[0], up[1], config);
    }
    ::close(down[0]);
    ::close(up[1]);
    log_event("handshake", "phase=Forked child=%d", static_cast<int>(child));

    auto abort_init = [&](Errc code, const std::string& why) {
        reap(child);
        ::close(down[1]);
        ::close(up[0]);
        raw_set_sigmask(original_mask);
        throw Error(code, why);
    };

    prctl(PR_SET_PTRACER, child, 0, 0, 0);
    const GoMessage go{'G', g_rt.designated_tid};
    if (!write_all(down[1], &go, sizeof go)) abort_init(Errc::ForkFailed, "handshake pipe");

    ChildReply reply{};
    if (!read_all(up[0], &reply, sizeof reply, config.handshake_timeout))
        abort_init(Errc::HandshakeTimeout, "self-debugger did not attach in time");
    if (reply.status != 'A') abort_init(Errc::AttachDenied, std::string("self-debugger could not attach: ") + std::strerror(reply.err));
    if (reply.loop_entry != loop_entry_address()) abort_init(Errc::AttachDenied, "loop entry differs between images");

    if (config.reciprocal) {
        try {
            attach_counterpart(child);
        } catch (const Error& e) {
            abort_init(e.code(), e.what());
        }
        log_event("handshake", "phase=ParentAttached tracee=%d", static_cast<int>(child));
    }

    g_rt.peer = child;
    g_rt.active = true;
    const char ready = 'R';
    if (!write_all(down[1], &ready, 1)) abort_init(Errc::HandshakeTimeout, "self-debugger vanished");
    ::close(down[1]);
    ::close(up[0]);
    log_event("handshake", "phase=Ready app=%d selfdebugger=%d", static_cast<int>(parent), static_cast<int>(child));
    raw_set_sigmask(original_mask);
    return ProcessRole::Thrower;
}

void protect_fini(int exit_code) {
    std::fflush(nullptr);
    _exit(exit_code);
}

}  // namespace selfdbg
