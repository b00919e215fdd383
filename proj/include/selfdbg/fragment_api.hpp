#pragma once

#include "selfdbg/types.hpp"
#include "selfdbg/whitelist.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace selfdbg {

using FragmentId = std::uint32_t;
inline constexpr std::size_t kMaxFragments = 64;
inline constexpr std::size_t kMaxFragmentArgs = 6;
inline constexpr std::size_t kMaxSitesPerFragment = 8;

struct FragmentArgs {
    std::array<std::uint64_t, kMaxFragmentArgs> words{};
    std::uint64_t operator[](std::size_t i) const noexcept { return words[i]; }
};

// Returned in rax:rdx by the invocation stubs.
struct FragmentResult {
    std::uint64_t r0 = 0;
    std::uint64_t r1 = 0;
    friend bool operator==(const FragmentResult&, const FragmentResult&) = default;
};

using FragmentFn = FragmentResult (*)(const FragmentArgs&);

enum class ReturnConvention : std::uint8_t { Rax, RaxRdx };

struct FragmentDescriptor {
    FragmentId fragment_id = 0;
    Address entry = 0;
    ReturnConvention return_convention = ReturnConvention::RaxRdx;
    std::vector<InvocationSite> sites;
};

// One row of a site table emitted next to the assembly stubs.
struct SiteTableEntry {
    Address stub;               // callable entry, signature FragmentResult(u64, u64)
    std::uint8_t fault_offset;  // faulting instruction = stub + fault_offset
    std::uint8_t fault_kind;
    std::uint8_t flavor;
    std::uint8_t reserved[5];
};
static_assert(sizeof(SiteTableEntry) == 16);

// Adds stubs to the pool that registration draws from. The built-in tables
// register themselves during static initialization.
void register_site_table(const SiteTableEntry* begin, const SiteTableEntry* end);

// Unbound pool sites of one kind and flavor, in table order.
std::vector<InvocationSite> available_sites(FaultKind kind, SiteFlavor flavor);

// Throws DuplicateSite, EntryOutOfRange, RegistryFrozen, RegistryFull.
FragmentDescriptor register_fragment(FragmentFn entry, std::span<const InvocationSite> sites,
                                     ReturnConvention convention = ReturnConvention::RaxRdx);
// Binds the next `count` free pool sites of the given kind and flavor.
FragmentDescriptor register_fragment(FragmentFn entry, FaultKind kind, SiteFlavor flavor, std::size_t count = 2,
                                     ReturnConvention convention = ReturnConvention::RaxRdx);

const Whitelist& whitelist() noexcept;
bool registry_frozen() noexcept;

// Runs the fragment in the counterpart when protection is active, locally
// otherwise. Throws UnknownFragment, NestedInvocation, WrongThread.
FragmentResult invoke_migrated(FragmentId id, const FragmentArgs& args);

template <class... A>
FragmentResult invoke_migrated(FragmentId id, A... args) {
    static_assert(sizeof...(A) <= kMaxFragmentArgs);
    FragmentArgs fa;
    std::size_t i = 0;
    ((fa.words[i++] = static_cast<std::uint64_t>(args)), ...);
    return invoke_migrated(id, fa);
}

// Executes the site's faulting instruction against `encoded_target`. Without
// active protection the target is decoded and called locally.
FragmentResult raise_switch(const InvocationSite& site, Address encoded_target);

// Memory of the application process as seen by a running fragment.
void fragment_read(Address addr, void* out, std::size_t len);
void fragment_write(Address addr, const void* data, std::size_t len);

struct FootprintDetail {
    std::string symbol;
    Address address = 0;
    std::size_t fault_offset = 0;
    std::string instruction;
    bool trap = false;
    bool adjacent_setup = false;
};

struct FootprintReport {
    std::size_t site_count = 0;
    std::size_t trap_opcodes = 0;
    std::size_t adjacent_pairs = 0;
    std::vector<FootprintDetail> details;

    std::string to_json() const;
};

// Scans the ELF symbol table for site stubs and inspects the instruction
// each one faults on. Throws UnreadableBinary.
FootprintReport static_footprint_report(const std::string& binary_path);

}  // namespace selfdbg
