#pragma once

#include "selfdbg/types.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace selfdbg {

struct InvocationSite {
    Address pc = 0;
    FaultKind fault_kind = FaultKind::SegvLoadStore;
    std::uint8_t scheme_id = 0;
    SiteFlavor flavor = SiteFlavor::Inline;

    friend bool operator==(const InvocationSite&, const InvocationSite&) = default;
};

// Bijective scrambling of a pc under a per-run key. The multiplier is odd,
// so the map is invertible modulo 2^64.
struct PcMask {
    static constexpr std::uint64_t kMul = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t kInv = 0xF1DE83E19937733Dull;  // kMul^-1 mod 2^64

    std::uint64_t key = 0;

    constexpr std::uint64_t mask(Address pc) const noexcept { return (pc ^ key) * kMul; }
    constexpr Address unmask(std::uint64_t m) const noexcept { return (m * kInv) ^ key; }
};

// Fixed-capacity sorted table keyed on masked pcs. Trivially copyable so it
// can be mirrored between the two processes byte for byte.
class Whitelist {
public:
    static constexpr std::size_t kCapacity = 256;

    struct Entry {
        std::uint64_t masked_pc;
        std::uint8_t fault_kind;
        std::uint8_t scheme_id;
        std::uint8_t flavor;
        std::uint8_t reserved[5];
    };

    Whitelist() noexcept = default;
    explicit Whitelist(std::uint64_t key) noexcept { mask_.key = key; }

    // Throws Error{DuplicateSite} or Error{RegistryFull}.
    void insert(const InvocationSite& site);
    std::optional<InvocationSite> lookup(Address pc) const noexcept;
    bool contains(Address pc) const noexcept { return lookup(pc).has_value(); }

    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }
    InvocationSite at(std::size_t i) const noexcept;

    const PcMask& pc_mask() const noexcept { return mask_; }
    std::span<const std::byte> storage() const noexcept;

private:
    PcMask mask_{};
    std::uint32_t count_ = 0;
    std::uint32_t pad_ = 0;
    std::array<Entry, kCapacity> entries_{};
};

}  // namespace selfdbg
