#include "support.hpp"

#include <sys/ptrace.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <filesystem>

using namespace itest;

TEST_CASE("each process of the pair is the other's tracer") {
    auto p = start({SELFDBG_TESTEE_PATH, "park"});
    CHECK(harness::tracer_pid(p.app) == p.selfdebugger);
    CHECK(harness::tracer_pid(p.selfdebugger) == p.app);
    p.child->write_line("switch");
    CHECK(p.child->read_line(Millis(2000)) == std::string("switch 5"));
    CHECK(harness::tracer_pid(p.app) == p.selfdebugger);
    CHECK(harness::tracer_pid(p.selfdebugger) == p.app);
    p.child->write_line("exit");
    const auto st = p.child->wait(Millis(3000));
    REQUIRE(st.has_value());
    CHECK(WIFEXITED(*st));
    CHECK(WEXITSTATUS(*st) == 0);
    CHECK(harness::wait_all_dead(p.pids(), Millis(1000)).has_value());
    CHECK(finish(p) == 0);
}

TEST_CASE("a third party cannot attach to either process") {
    auto p = start({SELFDBG_TESTEE_PATH, "park"});
    for (pid_t pid : p.pids()) {
        errno = 0;
        CHECK(ptrace(PTRACE_ATTACH, pid, nullptr, nullptr) == -1);
        CHECK(errno == EPERM);
    }
    CHECK(harness::tracer_pid(p.app) == p.selfdebugger);
    p.child->write_line("exit");
    p.child->wait(Millis(3000));
    CHECK(harness::wait_all_dead(p.pids(), Millis(1000)).has_value());
    CHECK(finish(p) == 0);
}

TEST_CASE("exit code propagates and the self-debugger follows") {
    for (int code : {0, 7, 42}) {
        auto p = start({SELFDBG_TESTEE_PATH, "exit", std::to_string(code)});
        const auto st = p.child->wait(Millis(3000));
        REQUIRE(st.has_value());
        CHECK(WIFEXITED(*st));
        CHECK(WEXITSTATUS(*st) == code);
        CHECK(harness::wait_all_dead(p.pids(), Millis(1000)).has_value());
        CHECK(finish(p) == 0);
    }
}

TEST_CASE("demo run exits 0 and leaves no process behind") {
    harness::SpawnOptions so;
    so.argv = {SELFDBG_DEMO_PATH, "run", "--fragments", "3", "--inputs", "20"};
    harness::Child c(so);
    const std::string out = c.drain(Millis(10000));
    const auto st = c.wait(Millis(3000));
    REQUIRE(st.has_value());
    CHECK(WIFEXITED(*st));
    CHECK(WEXITSTATUS(*st) == 0);
    CHECK(count_lines_with(out, "\n") == 20);
    std::this_thread::sleep_for(Millis(200));
    CHECK(harness::leftover_processes({}).empty());
}

TEST_CASE("SIGKILL to either process takes both down within a second") {
    for (int victim = 0; victim < 2; ++victim) {
        auto p = start({SELFDBG_TESTEE_PATH, "park"});
        kill(victim == 0 ? p.app : p.selfdebugger, SIGKILL);
        const auto took = harness::wait_all_dead(p.pids(), Millis(1000));
        CHECK(took.has_value());
        CHECK(finish(p) == 0);
    }
}

TEST_CASE("double initialization is rejected without a second fork") {
    const auto r = harness::run_capture({SELFDBG_TESTEE_PATH, "double-init"}, Millis(10000));
    CHECK(r.out.find("ok double-init") != std::string::npos);
    CHECK(r.exited_ok());
    std::this_thread::sleep_for(Millis(200));
    CHECK(harness::leftover_processes({}).empty());
}

TEST_CASE("threads mode seizes every pre-spawned thread") {
    auto p = start({SELFDBG_DEMO_PATH, "threads", "--threads", "4"});
    std::vector<pid_t> tids;
    for (const auto& e : std::filesystem::directory_iterator("/proc/" + std::to_string(p.app) + "/task"))
        tids.push_back(static_cast<pid_t>(std::stol(e.path().filename().string())));
    CHECK(tids.size() == 5);
    for (pid_t tid : tids) {
        const auto tracer = harness::status_field(tid, "TracerPid");
        CAPTURE(tid);
        CHECK(tracer == std::to_string(p.selfdebugger));
    }
    p.child->write_line("go");
    CHECK(p.child->read_line(Millis(2000)) == std::string("switch 1 done"));
    p.child->close_stdin();
    const auto st = p.child->wait(Millis(3000));
    REQUIRE(st.has_value());
    CHECK(WIFEXITED(*st));
    CHECK(WEXITSTATUS(*st) == 0);
    CHECK(harness::wait_all_dead(p.pids(), Millis(1000)).has_value());
    CHECK(finish(p) == 0);
}

TEST_CASE("init under an existing debugger refuses to run") {
    std::fflush(nullptr);
    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        setpgid(0, 0);
        ptrace(PTRACE_TRACEME, 0, nullptr, nullptr);
        execl(SELFDBG_DEMO_PATH, SELFDBG_DEMO_PATH, "run", "--inputs", "3", static_cast<char*>(nullptr));
        _exit(127);
    }
    // Act as a minimal debugger that passes every signal through.
    int status = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(15);
    bool exited = false;
    while (std::chrono::steady_clock::now() < deadline) {
        const pid_t w = waitpid(pid, &status, WNOHANG);
        if (w == 0) {
            std::this_thread::sleep_for(Millis(2));
            continue;
        }
        if (WIFEXITED(status) || WIFSIGNALED(status)) {
            exited = true;
            break;
        }
        const int sig = WSTOPSIG(status) == SIGTRAP ? 0 : WSTOPSIG(status);
        ptrace(PTRACE_CONT, pid, nullptr, reinterpret_cast<void*>(static_cast<long>(sig)));
    }
    if (!exited) kill(pid, SIGKILL), waitpid(pid, &status, 0);
    CHECK(exited);
    CHECK_FALSE((WIFEXITED(status) && WEXITSTATUS(status) == 0));
    std::this_thread::sleep_for(Millis(300));
    CHECK(harness::sweep({}) == 0);
}
