#include "selfdbg/switch_protocol.hpp"

#include "doctest.h"

#include <csignal>
#include <random>

using namespace selfdbg;

namespace {

constexpr CodeRange kCode{0x400000, 0x800000};
constexpr Address kSiteLs = 0x401000;
constexpr Address kSiteX = 0x402000;
constexpr Address kSiteTrap = 0x403000;

struct Fixture {
    Whitelist wl{0x1234abcdull};
    CodecConfig codec = CodecConfig::make_default(FaultNamespace::platform_default(), kCode, 99);

    Fixture() {
        wl.insert({kSiteLs, FaultKind::SegvLoadStore, codec.decision[0], SiteFlavor::Inline});
        wl.insert({kSiteX, FaultKind::SegvExec, codec.decision[1], SiteFlavor::Inline});
        wl.insert({kSiteTrap, FaultKind::TrapReference, 0, SiteFlavor::Inline});
    }

    SwitchEvent fault_at(Address pc, FaultKind kind, Address target) const {
        SwitchEvent ev;
        ev.pid = 42;
        ev.cause = StopCause::Fault;
        ev.signal = SIGSEGV;
        ev.faulting_pc = pc;
        ev.fault_kind = kind;
        const CodecScheme* s = try_select_scheme(kind, codec);
        ev.fault_address = s ? encode_target(target, *s, codec.ns, codec.code) : target;
        return ev;
    }
};

}  // namespace

TEST_CASE("whitelisted load/store fault decodes to a switch request") {
    Fixture f;
    const auto c = classify(f.fault_at(kSiteLs, FaultKind::SegvLoadStore, 0x455550), f.wl, f.codec);
    const auto* req = std::get_if<SwitchRequest>(&c);
    REQUIRE(req != nullptr);
    CHECK(req->target == 0x455550);
    CHECK(req->site.pc == kSiteLs);
    CHECK(req->site.fault_kind == FaultKind::SegvLoadStore);
}

TEST_CASE("whitelisted branch fault decodes to a switch request") {
    Fixture f;
    const auto c = classify(f.fault_at(kSiteX, FaultKind::SegvExec, 0x7ffff0), f.wl, f.codec);
    REQUIRE(std::holds_alternative<SwitchRequest>(c));
    CHECK(std::get<SwitchRequest>(c).target == 0x7ffff0);
}

TEST_CASE("fault at an unregistered pc is genuine") {
    Fixture f;
    const auto c = classify(f.fault_at(0x409999, FaultKind::SegvLoadStore, 0x455550), f.wl, f.codec);
    CHECK(c == Classification{GenuineFault{SIGSEGV}});
}

TEST_CASE("empty whitelist classifies every fault as genuine") {
    Fixture f;
    const Whitelist empty{7};
    for (FaultKind k : {FaultKind::SegvLoadStore, FaultKind::SegvExec}) {
        for (Address pc : {kSiteLs, kSiteX, kSiteTrap}) {
            const auto c = classify(f.fault_at(pc, k, 0x400100), empty, f.codec);
            CHECK(std::holds_alternative<GenuineFault>(c));
        }
    }
}

TEST_CASE("kind mismatch between event and site is genuine") {
    Fixture f;
    auto ev = f.fault_at(kSiteLs, FaultKind::SegvExec, 0x400100);
    CHECK(std::holds_alternative<GenuineFault>(classify(ev, f.wl, f.codec)));
    ev = f.fault_at(kSiteX, FaultKind::SegvLoadStore, 0x400100);
    CHECK(std::holds_alternative<GenuineFault>(classify(ev, f.wl, f.codec)));
}

TEST_CASE("whitelisted pc with an undecodable address is genuine") {
    Fixture f;
    auto ev = f.fault_at(kSiteLs, FaultKind::SegvLoadStore, 0x400100);
    ev.fault_address = 0;
    CHECK(std::holds_alternative<GenuineFault>(classify(ev, f.wl, f.codec)));
    ev.fault_address = std::nullopt;
    CHECK(std::holds_alternative<GenuineFault>(classify(ev, f.wl, f.codec)));
}

TEST_CASE("trap sites resolve through the identifier table") {
    Fixture f;
    const std::vector<Address> table{0, 0x404000, 0};
    SwitchEvent ev;
    ev.cause = StopCause::Fault;
    ev.signal = SIGTRAP;
    ev.faulting_pc = kSiteTrap;
    ev.fault_kind = FaultKind::TrapReference;
    ev.regs[Reg::Rdi] = 1;
    auto c = classify(ev, f.wl, f.codec, table);
    REQUIRE(std::holds_alternative<SwitchRequest>(c));
    CHECK(std::get<SwitchRequest>(c).target == 0x404000);

    ev.regs[Reg::Rdi] = 0;
    c = classify(ev, f.wl, f.codec, table);
    REQUIRE(std::holds_alternative<SwitchRequest>(c));
    CHECK(std::get<SwitchRequest>(c).target == kResumePendingTarget);

    for (std::uint64_t bad : {2ull, 3ull, 1000ull}) {
        ev.regs[Reg::Rdi] = bad;
        CHECK(std::holds_alternative<GenuineFault>(classify(ev, f.wl, f.codec, table)));
    }
}

TEST_CASE("non-fault stops map to their classification") {
    Fixture f;
    SwitchEvent ev;
    ev.cause = StopCause::ExitNotice;
    ev.exit_status = 7 << 8;
    CHECK(classify(ev, f.wl, f.codec) == Classification{CounterpartExit{7 << 8}});
    ev.cause = StopCause::GroupStop;
    CHECK(classify(ev, f.wl, f.codec) == Classification{IgnorableNotice{StopCause::GroupStop}});
    ev.cause = StopCause::Signal;
    ev.signal = SIGTERM;
    ev.faulting_pc = kSiteLs;
    CHECK(classify(ev, f.wl, f.codec) == Classification{GenuineFault{SIGTERM}});
}

TEST_CASE("plan_for examples") {
    ActionPlan p = plan_for(SwitchRequest{{kSiteLs}, 0x401234}, ProcessRole::Catcher);
    REQUIRE(p.size() == 2);
    CHECK(p[0].kind == ActionKind::TransitionCounterpartToCatcher);
    CHECK(p[1].kind == ActionKind::TransferControlTo);
    CHECK(p[1].target == 0x401234);

    p = plan_for(GenuineFault{SIGSEGV}, ProcessRole::Catcher);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == Action{ActionKind::ForwardSignal, 0, SIGSEGV});

    p = plan_for(CounterpartExit{0}, ProcessRole::Catcher);
    REQUIRE(p.size() == 1);
    CHECK(p[0].kind == ActionKind::DetachAndExit);

    p = plan_for(IgnorableNotice{}, ProcessRole::Catcher);
    REQUIRE(p.size() == 1);
    CHECK(p[0].kind == ActionKind::SuppressAndContinue);
}

TEST_CASE("plan_for as Thrower is a contract violation") {
    CHECK_THROWS_AS(plan_for(GenuineFault{SIGSEGV}, ProcessRole::Thrower), ContractViolation);
    CHECK_THROWS_AS(plan_for(SwitchRequest{}, ProcessRole::Thrower), ContractViolation);
}

TEST_CASE("property: random events respect whitelist gating, transparency and plan order") {
    Fixture f;
    std::mt19937_64 rng(2024);
    const Address pcs[] = {kSiteLs, kSiteX, kSiteTrap, 0x401001, 0x500000, 0x7fffff};
    const int signals[] = {SIGSEGV, SIGBUS, SIGILL, SIGFPE, SIGTRAP};
    for (int i = 0; i < 20000; ++i) {
        SwitchEvent ev;
        ev.cause = StopCause::Fault;
        ev.faulting_pc = pcs[rng() % std::size(pcs)];
        ev.fault_kind = static_cast<FaultKind>(rng() % 2);
        ev.signal = signals[rng() % std::size(signals)];
        const Address t = kCode.begin + rng() % (kCode.end - kCode.begin);
        ev.fault_address = rng() % 4 == 0 ? rng() : encode_target(t, *try_select_scheme(ev.fault_kind, f.codec),
                                                                   f.codec.ns, f.codec.code);
        const auto c = classify(ev, f.wl, f.codec);
        const bool whitelisted = f.wl.contains(ev.faulting_pc);
        if (std::holds_alternative<SwitchRequest>(c)) {
            // Only whitelisted pcs whose kind matches and whose address decodes.
            CHECK(whitelisted);
            CHECK(f.wl.lookup(ev.faulting_pc)->fault_kind == ev.fault_kind);
            CHECK(ev.signal == SIGSEGV);
            CHECK(kCode.contains(std::get<SwitchRequest>(c).target));
            const auto p = plan_for(c, ProcessRole::Catcher);
            REQUIRE(p.size() == 2);
            CHECK(p[0].kind == ActionKind::TransitionCounterpartToCatcher);
            CHECK(p[1].kind == ActionKind::TransferControlTo);
        } else {
            REQUIRE(std::holds_alternative<GenuineFault>(c));
            CHECK(std::get<GenuineFault>(c).signal == ev.signal);
            const auto p = plan_for(c, ProcessRole::Catcher);
            REQUIRE(p.size() == 1);
            CHECK(p[0].kind == ActionKind::ForwardSignal);
            CHECK(p[0].signal == ev.signal);
        }
        if (!whitelisted) CHECK(std::holds_alternative<GenuineFault>(c));
    }
}

TEST_CASE("property: roles alternate across a sequence of switches") {
    // Replays the plan of each switch on a two-party role state.
    Fixture f;
    ProcessRole role[2] = {ProcessRole::Thrower, ProcessRole::Catcher};
    int thrower = 0;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const int catcher = 1 - thrower;
        const auto c = classify(f.fault_at(kSiteLs, FaultKind::SegvLoadStore, 0x400000 + (rng() % 0x1000)), f.wl,
                                f.codec);
        for (const Action& a : plan_for(c, role[catcher])) {
            if (a.kind == ActionKind::TransitionCounterpartToCatcher) role[thrower] = ProcessRole::Catcher;
            if (a.kind == ActionKind::TransferControlTo) role[catcher] = ProcessRole::Thrower;
        }
        CHECK(role[thrower] == ProcessRole::Catcher);
        CHECK(role[catcher] == ProcessRole::Thrower);
        CHECK(role[0] != role[1]);
        thrower = catcher;
    }
}
