#include "support.hpp"

#include <sys/wait.h>

using namespace itest;

namespace {

void expect_mode_ok(const std::string& mode) {
    const auto r = harness::run_capture({SELFDBG_TESTEE_PATH, mode}, Millis(15000));
    CAPTURE(mode);
    CAPTURE(r.out);
    CAPTURE(r.err);
    CHECK_FALSE(r.timed_out);
    CHECK(r.out.find("ok " + mode) != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.exited_ok());
}

int termination_signal(const harness::RunResult& r) { return WIFSIGNALED(r.status) ? WTERMSIG(r.status) : 0; }

}  // namespace

TEST_CASE("archived registers match the checkpoint written before the fault") { expect_mode_ok("checkpoint"); }

TEST_CASE("fragments read and write the application's memory") { expect_mode_ok("memory"); }

TEST_CASE("roles swap on each switch and fragments run in the counterpart") { expect_mode_ok("roles"); }

TEST_CASE("registration after the first switch is rejected") { expect_mode_ok("frozen"); }

TEST_CASE("nested invocation is rejected under protection") { expect_mode_ok("nested"); }

TEST_CASE("switches from a non-designated thread are rejected") { expect_mode_ok("wrong-thread"); }

TEST_CASE("trap-reference sites switch through the identifier table") { expect_mode_ok("trap"); }

TEST_CASE("without protection fragments run locally") { expect_mode_ok("local"); }

TEST_CASE("protected output equals unprotected output") {
    for (const char* method : {"segv-rw", "segv-x"}) {
        for (const char* flavor : {"inline", "reused"}) {
            for (const char* fragments : {"1", "3", "10"}) {
                const std::vector<std::string> base{SELFDBG_DEMO_PATH, "run", "--inputs", "25", "--seed", "9",
                                                    "--fragments", fragments, "--method", method, "--flavor", flavor};
                auto plain = base;
                plain.push_back("--unprotected");
                const auto a = harness::run_capture(base, Millis(30000));
                const auto b = harness::run_capture(plain, Millis(30000));
                CAPTURE(method);
                CAPTURE(flavor);
                CAPTURE(fragments);
                CHECK(a.exited_ok());
                CHECK(b.exited_ok());
                CHECK(a.out == b.out);
                CHECK_FALSE(a.out.empty());
            }
        }
    }
}

TEST_CASE("a fault at a non-site address kills like it would unprotected") {
    for (const char* kind : {"null", "noncanonical", "jump"}) {
        const std::vector<std::string> base{SELFDBG_DEMO_PATH, "crash", "--crash-kind", kind, "--fragments", "3"};
        auto plain = base;
        plain.push_back("--unprotected");
        const auto a = harness::run_capture(base, Millis(10000));
        const auto b = harness::run_capture(plain, Millis(10000));
        CAPTURE(kind);
        CHECK(termination_signal(b) == SIGSEGV);
        CHECK(termination_signal(a) == termination_signal(b));
        CHECK(a.out == b.out);
    }
    std::this_thread::sleep_for(Millis(200));
    CHECK(harness::sweep({}) == 0);
}
