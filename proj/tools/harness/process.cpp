#include "process.hpp"

#include "json.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

extern char** environ;

namespace harness {

namespace {

constexpr int kEventFd = 9;

using Clock = std::chrono::steady_clock;

// Children whose status belongs to a Child object or run_capture.
std::mutex g_owned_mu;
std::set<pid_t> g_owned;

void own(pid_t pid) {
    std::lock_guard lock(g_owned_mu);
    g_owned.insert(pid);
}

void disown(pid_t pid) {
    std::lock_guard lock(g_owned_mu);
    g_owned.erase(pid);
}

bool owned(pid_t pid) {
    std::lock_guard lock(g_owned_mu);
    return g_owned.count(pid) != 0;
}

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

std::string make_event_file() {
    const char* tmp = std::getenv("TMPDIR");
    std::string path = std::string(tmp ? tmp : "/tmp") + "/selfdbg-events-XXXXXX";
    const int fd = mkstemp(path.data());
    if (fd < 0) throw std::runtime_error("mkstemp: " + std::string(std::strerror(errno)));
    ::close(fd);
    return path;
}

[[noreturn]] void exec_child(const SpawnOptions& opts, int in_read, int out_write, int err_write,
                             const std::string& event_path) {
    if (opts.new_process_group) setpgid(0, 0);
    sigset_t none;
    sigemptyset(&none);
    sigprocmask(SIG_SETMASK, &none, nullptr);
    if (in_read >= 0) dup2(in_read, STDIN_FILENO);
    else {
        const int devnull = open("/dev/null", O_RDONLY);
        dup2(devnull, STDIN_FILENO);
    }
    dup2(out_write, STDOUT_FILENO);
    if (err_write >= 0) dup2(err_write, STDERR_FILENO);
    if (!event_path.empty()) {
        const int fd = open(event_path.c_str(), O_WRONLY | O_APPEND);
        if (fd >= 0 && fd != kEventFd) {
            dup2(fd, kEventFd);
            ::close(fd);
        }
        setenv("SELFDBG_EVENT_FD", std::to_string(kEventFd).c_str(), 1);
    }
    for (const auto& [k, v] : opts.env) setenv(k.c_str(), v.c_str(), 1);
    std::vector<char*> args;
    for (const auto& a : opts.argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execve(args[0], args.data(), environ);
    _exit(127);
}

}  // namespace

Child::Child(const SpawnOptions& opts) {
    if (opts.argv.empty()) throw std::invalid_argument("empty argv");
    if (opts.event_log) event_path_ = make_event_file();
    int out[2];
    int in[2] = {-1, -1};
    if (pipe2(out, O_CLOEXEC) != 0) throw std::runtime_error("pipe");
    if (opts.pipe_stdin && pipe2(in, O_CLOEXEC) != 0) throw std::runtime_error("pipe");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork: " + std::string(std::strerror(errno)));
    if (pid_ == 0) exec_child(opts, in[0], out[1], -1, event_path_);
    own(pid_);
    if (opts.new_process_group) setpgid(pid_, pid_);
    ::close(out[1]);
    out_fd_ = out[0];
    if (opts.pipe_stdin) {
        ::close(in[0]);
        in_fd_ = in[1];
    }
}

Child::~Child() {
    if (!status_ && pid_ > 0) {
        kill(pid_, SIGKILL);
        wait(Millis(2000));
    }
    if (out_fd_ >= 0) ::close(out_fd_);
    if (in_fd_ >= 0) ::close(in_fd_);
    if (!event_path_.empty() && std::getenv("SELFDBG_KEEP_EVENTS") == nullptr) ::unlink(event_path_.c_str());
}

std::optional<std::string> Child::read_line(Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (out_fd_ < 0) return std::nullopt;
        pollfd pfd{out_fd_, POLLIN, 0};
        const int rc = poll(&pfd, 1, remaining_ms(deadline));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) return std::nullopt;
        char chunk[4096];
        const ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            ::close(out_fd_);
            out_fd_ = -1;
            if (buffer_.empty()) return std::nullopt;
            std::string line;
            line.swap(buffer_);
            return line;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
        captured_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::string Child::drain(Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    std::string all;
    while (auto line = read_line(Millis(remaining_ms(deadline)))) all += *line + "\n";
    return all;
}

bool Child::write_line(const std::string& line) {
    if (in_fd_ < 0) return false;
    const std::string data = line + "\n";
    return ::write(in_fd_, data.data(), data.size()) == static_cast<ssize_t>(data.size());
}

void Child::close_stdin() {
    if (in_fd_ >= 0) ::close(in_fd_);
    in_fd_ = -1;
}

std::optional<int> Child::wait(Millis timeout) {
    if (status_) return status_;
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        int st = 0;
        const pid_t r = waitpid(pid_, &st, WNOHANG);
        if (r == pid_) {
            disown(pid_);
            status_ = st;
            return st;
        }
        if (r < 0 && errno != EINTR) return std::nullopt;
        if (Clock::now() >= deadline) return std::nullopt;
        std::this_thread::sleep_for(Millis(2));
    }
}

bool RunResult::exited_ok() const noexcept { return !timed_out && WIFEXITED(status) && WEXITSTATUS(status) == 0; }

RunResult run_capture(const std::vector<std::string>& argv, Millis timeout,
                      const std::map<std::string, std::string>& env) {
    SpawnOptions opts;
    opts.argv = argv;
    opts.env = env;
    opts.event_log = false;
    int err[2];
    if (pipe2(err, O_CLOEXEC) != 0) throw std::runtime_error("pipe");
    int out[2];
    if (pipe2(out, O_CLOEXEC) != 0) throw std::runtime_error("pipe");
    const pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("fork");
    if (pid == 0) exec_child(opts, -1, out[1], err[1], {});
    own(pid);
    setpgid(pid, pid);
    ::close(out[1]);
    ::close(err[1]);

    RunResult res;
    const auto deadline = Clock::now() + timeout;
    std::array<pollfd, 2> fds{pollfd{out[0], POLLIN, 0}, pollfd{err[0], POLLIN, 0}};
    int open_fds = 2;
    while (open_fds > 0) {
        const int left = remaining_ms(deadline);
        if (left == 0) {
            res.timed_out = true;
            break;
        }
        const int rc = poll(fds.data(), fds.size(), left);
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) continue;
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || fds[i].revents == 0) continue;
            char chunk[8192];
            const ssize_t n = ::read(fds[i].fd, chunk, sizeof chunk);
            if (n > 0) {
                (i == 0 ? res.out : res.err).append(chunk, static_cast<std::size_t>(n));
            } else if (n == 0 || errno != EINTR) {
                ::close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }
    for (auto& f : fds)
        if (f.fd >= 0) ::close(f.fd);
    if (res.timed_out) kill(-pid, SIGKILL);
    while (waitpid(pid, &res.status, 0) < 0 && errno == EINTR) {
    }
    disown(pid);
    if (res.timed_out) sweep({});
    return res;
}

char process_state(pid_t pid) {
    std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
    std::string text;
    if (!std::getline(in, text)) return 0;
    const auto close = text.rfind(')');
    if (close == std::string::npos || close + 2 >= text.size()) return 0;
    return text[close + 2];
}

bool process_alive(pid_t pid) {
    const char s = process_state(pid);
    return s != 0 && s != 'Z' && s != 'X';
}

std::optional<std::string> status_field(pid_t pid, const std::string& key) {
    std::ifstream in("/proc/" + std::to_string(pid) + "/status");
    std::string line;
    const std::string prefix = key + ":";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) != 0) continue;
        auto v = line.substr(prefix.size());
        v.erase(0, v.find_first_not_of(" \t"));
        return v;
    }
    return std::nullopt;
}

std::optional<pid_t> tracer_pid(pid_t pid) {
    const auto v = status_field(pid, "TracerPid");
    if (!v) return std::nullopt;
    return static_cast<pid_t>(std::strtol(v->c_str(), nullptr, 10));
}

std::optional<Millis> wait_all_dead(const std::vector<pid_t>& pids, Millis timeout) {
    const auto start = Clock::now();
    for (;;) {
        reap_zombies();
        bool any = false;
        for (pid_t p : pids) any = any || process_alive(p);
        const auto took = std::chrono::duration_cast<Millis>(Clock::now() - start);
        if (!any) return took;
        if (took >= timeout) return std::nullopt;
        std::this_thread::sleep_for(Millis(1));
    }
}

void become_subreaper() { prctl(PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0); }

void reap_zombies() {
    const pid_t self = getpid();
    DIR* d = opendir("/proc");
    if (d == nullptr) return;
    while (dirent* e = readdir(d)) {
        char* end = nullptr;
        const long pid = std::strtol(e->d_name, &end, 10);
        if (end == e->d_name || *end != '\0' || process_state(static_cast<pid_t>(pid)) != 'Z') continue;
        const auto ppid = status_field(static_cast<pid_t>(pid), "PPid");
        if (!ppid || std::strtol(ppid->c_str(), nullptr, 10) != self || owned(static_cast<pid_t>(pid))) continue;
        int st = 0;
        waitpid(static_cast<pid_t>(pid), &st, WNOHANG | __WALL);
    }
    closedir(d);
}

std::vector<pid_t> leftover_processes(const std::vector<pid_t>& watched) {
    reap_zombies();
    std::vector<pid_t> out;
    const pid_t self = getpid();
    DIR* d = opendir("/proc");
    if (d == nullptr) return out;
    while (dirent* e = readdir(d)) {
        char* end = nullptr;
        const long pid = std::strtol(e->d_name, &end, 10);
        if (end == e->d_name || *end != '\0' || pid == self) continue;
        if (!process_alive(static_cast<pid_t>(pid))) continue;
        const auto ppid = status_field(static_cast<pid_t>(pid), "PPid");
        const bool ours = ppid && std::strtol(ppid->c_str(), nullptr, 10) == self;
        const bool seen = std::find(watched.begin(), watched.end(), static_cast<pid_t>(pid)) != watched.end();
        if (ours || seen) out.push_back(static_cast<pid_t>(pid));
    }
    closedir(d);
    return out;
}

std::size_t sweep(const std::vector<pid_t>& watched) {
    const auto left = leftover_processes(watched);
    for (pid_t p : left) kill(p, SIGKILL);
    if (!left.empty()) wait_all_dead(left, Millis(2000));
    reap_zombies();
    return left.size();
}

std::vector<EventRecord> read_events(const std::string& path) {
    std::vector<EventRecord> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) continue;
        EventRecord r;
        r.ts = j.value("ts", std::uint64_t{0});
        r.pid = j.value("pid", 0);
        r.event = j.value("event", std::string{});
        r.detail = j.value("detail", std::string{});
        out.push_back(std::move(r));
    }
    return out;
}

std::optional<long> field_of(const std::string& line, const std::string& key) {
    const std::string needle = key + "=";
    std::size_t pos = 0;
    while ((pos = line.find(needle, pos)) != std::string::npos) {
        if (pos == 0 || line[pos - 1] == ' ') {
            char* end = nullptr;
            const long v = std::strtol(line.c_str() + pos + needle.size(), &end, 10);
            if (end != line.c_str() + pos + needle.size()) return v;
        }
        pos += needle.size();
    }
    return std::nullopt;
}

}  // namespace harness
