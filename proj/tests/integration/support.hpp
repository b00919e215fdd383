#pragma once

#include "process.hpp"

#include "doctest.h"

#include <signal.h>

#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace itest {

using harness::Millis;

struct Pair {
    std::unique_ptr<harness::Child> child;
    pid_t app = 0;
    pid_t selfdebugger = 0;
    std::string ready;

    std::vector<pid_t> pids() const { return {app, selfdebugger}; }
};

// Starts a protectee and waits for its "ready app=.. selfdebugger=.." line.
inline Pair start(std::vector<std::string> argv, bool pipe_stdin = true) {
    harness::SpawnOptions so;
    so.argv = std::move(argv);
    so.pipe_stdin = pipe_stdin;
    Pair p;
    p.child = std::make_unique<harness::Child>(so);
    const auto line = p.child->read_line(Millis(5000));
    REQUIRE_MESSAGE(line.has_value(), "no ready line from " << so.argv[0] << " " << so.argv[1]);
    p.ready = *line;
    p.app = static_cast<pid_t>(harness::field_of(*line, "app").value_or(0));
    p.selfdebugger = static_cast<pid_t>(harness::field_of(*line, "selfdebugger").value_or(0));
    REQUIRE(p.app > 0);
    REQUIRE(p.selfdebugger > 0);
    return p;
}

// Kills whatever is left of the pair and returns how many processes had to go.
inline std::size_t finish(Pair& p) {
    const auto left = harness::leftover_processes(p.pids()).size();
    for (pid_t pid : p.pids())
        if (harness::process_alive(pid)) kill(pid, SIGKILL);
    p.child->wait(Millis(2000));
    harness::sweep(p.pids());
    return left;
}

inline std::string own_sigblk() { return harness::status_field(getpid(), "SigBlk").value_or("?"); }

inline constexpr const char* kCatcherSigBlk = "fffffffffffbfeff";

inline int count_lines_with(const std::string& text, const std::string& needle) {
    int n = 0;
    for (std::size_t pos = 0; (pos = text.find(needle, pos)) != std::string::npos; pos += needle.size()) ++n;
    return n;
}

}  // namespace itest
