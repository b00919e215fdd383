#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace harness {

using Millis = std::chrono::milliseconds;

struct SpawnOptions {
    std::vector<std::string> argv;
    std::map<std::string, std::string> env;  // added to the inherited environment
    bool pipe_stdin = false;
    bool event_log = true;        // child gets SELFDBG_EVENT_FD on an O_APPEND temp file
    bool new_process_group = true;
};

// A spawned protectee with its stdout (and optionally stdin) on pipes.
class Child {
public:
    explicit Child(const SpawnOptions& opts);
    ~Child();
    Child(const Child&) = delete;
    Child& operator=(const Child&) = delete;

    pid_t pid() const noexcept { return pid_; }
    const std::string& event_path() const noexcept { return event_path_; }

    // Next stdout line, or nullopt on EOF or timeout.
    std::optional<std::string> read_line(Millis timeout);
    // Everything remaining on stdout until EOF or timeout.
    std::string drain(Millis timeout);
    bool write_line(const std::string& line);
    void close_stdin();

    // Raw wait status once the child has been reaped.
    std::optional<int> wait(Millis timeout);
    std::optional<int> status() const noexcept { return status_; }

    std::string stdout_so_far() const { return captured_; }

private:
    pid_t pid_ = -1;
    int out_fd_ = -1;
    int in_fd_ = -1;
    std::string buffer_;
    std::string captured_;
    std::string event_path_;
    std::optional<int> status_;
};

struct RunResult {
    std::string out;
    std::string err;
    int status = 0;
    bool timed_out = false;

    bool exited_ok() const noexcept;
};

// Runs to completion with stdout and stderr captured.
RunResult run_capture(const std::vector<std::string>& argv, Millis timeout,
                      const std::map<std::string, std::string>& env = {});

// Alive means present in the process table and not a zombie.
bool process_alive(pid_t pid);
char process_state(pid_t pid);  // 0 when gone
std::optional<std::string> status_field(pid_t pid, const std::string& key);
std::optional<pid_t> tracer_pid(pid_t pid);

// Polls until neither pid is alive; returns the time it took.
std::optional<Millis> wait_all_dead(const std::vector<pid_t>& pids, Millis timeout);

// Orphaned descendants are re-parented to this process and reaped here.
void become_subreaper();
void reap_zombies();

// Live processes whose parent is this process or whose pid is in `watched`.
std::vector<pid_t> leftover_processes(const std::vector<pid_t>& watched);
// SIGKILLs and reaps everything leftover_processes reports; returns the count.
std::size_t sweep(const std::vector<pid_t>& watched);

struct EventRecord {
    std::uint64_t ts = 0;
    pid_t pid = 0;
    std::string event;
    std::string detail;
};

std::vector<EventRecord> read_events(const std::string& path);

// "key=value" lookups within a stdout line such as "ready app=1 selfdebugger=2".
std::optional<long> field_of(const std::string& line, const std::string& key);

}  // namespace harness
