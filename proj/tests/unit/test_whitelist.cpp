#include "selfdbg/errors.hpp"
#include "selfdbg/whitelist.hpp"

#include "doctest.h"

#include <cstring>
#include <random>
#include <set>

using namespace selfdbg;

namespace {

bool bytes_contain(std::span<const std::byte> hay, std::uint64_t value, std::size_t width) {
    for (std::size_t i = 0; i + width <= hay.size(); ++i)
        if (std::memcmp(hay.data() + i, &value, width) == 0) return true;
    return false;
}

Errc error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return Errc::ConfigSyntax;
}

}  // namespace

TEST_CASE("registered sites are found with their attributes") {
    Whitelist wl{0xabcdef};
    const InvocationSite a{0x401000, FaultKind::SegvLoadStore, 1, SiteFlavor::Inline};
    const InvocationSite b{0x401800, FaultKind::SegvExec, 2, SiteFlavor::ReusedCode};
    wl.insert(a);
    wl.insert(b);
    CHECK(wl.size() == 2);
    CHECK(wl.lookup(a.pc) == a);
    CHECK(wl.lookup(b.pc) == b);
    CHECK_FALSE(wl.lookup(0x401001).has_value());
    CHECK_FALSE(Whitelist{}.contains(a.pc));
}

TEST_CASE("duplicate and overflow insertions are rejected") {
    Whitelist wl{1};
    wl.insert({0x1000});
    CHECK(error_of([&] { wl.insert({0x1000, FaultKind::SegvExec}); }) == Errc::DuplicateSite);
    for (Address pc = 0x2000; wl.size() < Whitelist::kCapacity; pc += 4) wl.insert({pc});
    CHECK(error_of([&] { wl.insert({0x999999}); }) == Errc::RegistryFull);
}

TEST_CASE("property: lookup succeeds iff the pc was registered") {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 20; ++round) {
        Whitelist wl{rng()};
        std::set<Address> registered;
        while (registered.size() < 200) {
            const Address pc = 0x400000 + (rng() % 0x10000);
            if (registered.insert(pc).second) wl.insert({pc, FaultKind::SegvLoadStore, 1});
        }
        for (Address pc = 0x400000; pc < 0x410000; ++pc) {
            if (wl.contains(pc) != (registered.count(pc) == 1)) {
                FAIL("membership mismatch at " << pc);
                break;
            }
        }
    }
}

TEST_CASE("property: at-rest bytes never hold a plain pc") {
    std::mt19937_64 rng(23);
    for (int round = 0; round < 50; ++round) {
        Whitelist wl{rng() | 1};
        std::vector<Address> pcs;
        for (int i = 0; i < 64; ++i) {
            const Address pc = 0x555555554000ull + (rng() % 0x200000);
            if (wl.contains(pc)) continue;
            wl.insert({pc});
            pcs.push_back(pc);
        }
        CHECK(wl.storage().size() == sizeof(Whitelist::Entry) * pcs.size());
        const std::span<const std::byte> bytes(reinterpret_cast<const std::byte*>(&wl), sizeof wl);
        for (Address pc : pcs) {
            CHECK_FALSE(bytes_contain(bytes, pc, 8));
            CHECK_FALSE(bytes_contain(bytes, pc, 6));
        }
    }
}

TEST_CASE("pc mask is a bijection") {
    PcMask m{0x0123456789abcdefull};
    CHECK(PcMask::kMul * PcMask::kInv == 1);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10000; ++i) {
        const Address pc = rng();
        CHECK(m.unmask(m.mask(pc)) == pc);
    }
}

TEST_CASE("whitelist is trivially copyable and copies compare equal on lookup") {
    static_assert(std::is_trivially_copyable_v<Whitelist>);
    Whitelist a{99};
    a.insert({0x401000, FaultKind::SegvExec, 2});
    Whitelist b;
    std::memcpy(static_cast<void*>(&b), &a, sizeof a);
    CHECK(b.lookup(0x401000) == a.lookup(0x401000));
}
