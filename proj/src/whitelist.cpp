#include "selfdbg/whitelist.hpp"
#include "selfdbg/errors.hpp"

#include <algorithm>
#include <cstdio>

namespace selfdbg {

namespace {

std::string hex(Address a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
    return buf;
}

}  // namespace

void Whitelist::insert(const InvocationSite& site) {
    const std::uint64_t m = mask_.mask(site.pc);
    auto* first = entries_.data();
    auto* last = first + count_;
    auto* pos = std::lower_bound(first, last, m,
                                 [](const Entry& e, std::uint64_t v) { return e.masked_pc < v; });
    if (pos != last && pos->masked_pc == m) throw Error(Errc::DuplicateSite, hex(site.pc));
    if (count_ == kCapacity) throw Error(Errc::RegistryFull, "whitelist capacity reached");
    std::move_backward(pos, last, last + 1);
    *pos = Entry{m, static_cast<std::uint8_t>(site.fault_kind), site.scheme_id,
                 static_cast<std::uint8_t>(site.flavor), {}};
    ++count_;
}

std::optional<InvocationSite> Whitelist::lookup(Address pc) const noexcept {
    const std::uint64_t m = mask_.mask(pc);
    const auto* first = entries_.data();
    const auto* last = first + count_;
    const auto* pos = std::lower_bound(first, last, m,
                                       [](const Entry& e, std::uint64_t v) { return e.masked_pc < v; });
    if (pos == last || pos->masked_pc != m) return std::nullopt;
    return InvocationSite{pc, static_cast<FaultKind>(pos->fault_kind), pos->scheme_id,
                          static_cast<SiteFlavor>(pos->flavor)};
}

InvocationSite Whitelist::at(std::size_t i) const noexcept {
    const Entry& e = entries_[i];
    return InvocationSite{mask_.unmask(e.masked_pc), static_cast<FaultKind>(e.fault_kind), e.scheme_id,
                          static_cast<SiteFlavor>(e.flavor)};
}

std::span<const std::byte> Whitelist::storage() const noexcept {
    return std::as_bytes(std::span(entries_.data(), count_));
}

}  // namespace selfdbg
