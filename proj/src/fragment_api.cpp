#include "selfdbg/fragment_api.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/event_log.hpp"
#include "selfdbg/target_codec.hpp"

#include "runtime.hpp"

#include <sys/random.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cstring>
#include <string>

namespace selfdbg {

namespace detail {

constinit Registry g_registry{};

namespace {

using StubFn = FragmentResult (*)(std::uint64_t, std::uint64_t);

std::uint32_t g_rotation = 0;

std::uint8_t scheme_id_for(FaultKind kind) noexcept {
    if (g_rt.codec != nullptr) return g_rt.codec->decision[static_cast<std::size_t>(kind)];
    switch (kind) {
        case FaultKind::SegvLoadStore: return 1;
        case FaultKind::SegvExec: return 2;
        case FaultKind::TrapReference: return 0;
    }
    return 0;
}

InvocationSite site_of(const PoolSite& s) noexcept {
    return InvocationSite{pool_pc(s), static_cast<FaultKind>(s.fault_kind),
                          scheme_id_for(static_cast<FaultKind>(s.fault_kind)),
                          static_cast<SiteFlavor>(s.flavor)};
}

PoolSite* pool_site_at(Address pc) noexcept {
    for (std::uint32_t i = 0; i < g_registry.npool; ++i)
        if (pool_pc(g_registry.pool[i]) == pc) return &g_registry.pool[i];
    return nullptr;
}

FragmentResult call_local(FragmentFn fn, const FragmentArgs& args) {
    g_switch_context.in_fragment = 1;
    struct Reset {
        ~Reset() { g_switch_context.in_fragment = 0; }
    } reset;
    return fn(args);
}

}  // namespace

void ensure_registry_key() noexcept {
    if (g_registry.keyed) return;
    std::uint64_t key = 0;
    if (getrandom(&key, sizeof key, 0) != static_cast<ssize_t>(sizeof key))
        key = static_cast<std::uint64_t>(getpid()) * 0x9E3779B97F4A7C15ull ^ reinterpret_cast<std::uintptr_t>(&key);
    g_registry.whitelist = Whitelist(key);
    g_registry.keyed = 1;
}

Address pool_stub(const PoolSite& s) noexcept { return g_registry.whitelist.pc_mask().unmask(s.masked_stub); }
Address pool_pc(const PoolSite& s) noexcept { return pool_stub(s) + s.fault_offset; }

const FragmentRecord* find_fragment(std::uint64_t id) noexcept {
    if (id == 0 || id > g_registry.nfragments) return nullptr;
    return &g_registry.fragments[id - 1];
}

Address fragment_entry(const FragmentRecord& r) noexcept {
    return g_registry.whitelist.pc_mask().unmask(r.masked_entry);
}

const FragmentRecord* fragment_by_entry(Address entry) noexcept {
    for (std::uint32_t i = 0; i < g_registry.nfragments; ++i)
        if (fragment_entry(g_registry.fragments[i]) == entry) return &g_registry.fragments[i];
    return nullptr;
}

std::size_t build_trap_table(std::array<Address, kMaxFragments + 1>& out) noexcept {
    out[0] = 0;
    for (std::uint32_t i = 0; i < g_registry.nfragments; ++i) out[i + 1] = fragment_entry(g_registry.fragments[i]);
    return g_registry.nfragments + 1;
}

FragmentResult raise_via_fragment_sites(const FragmentRecord& rec, Address target, bool returning) {
    const PoolSite& ps = g_registry.pool[rec.site_index[g_rotation++ % rec.nsites]];
    const auto kind = static_cast<FaultKind>(ps.fault_kind);
    std::uint64_t value = 0;
    if (kind == FaultKind::TrapReference) {
        value = returning ? kReturnIdentifier : rec.id;
    } else {
        const CodecScheme* scheme = try_select_scheme(kind, *g_rt.codec);
        if (scheme == nullptr) throw Error(Errc::NoScheme, "no scheme for site kind");
        value = encode_target(target, *scheme, g_rt.codec->ns, g_rt.codec->code);
    }
    return reinterpret_cast<StubFn>(pool_stub(ps))(value, value);
}

void run_migrated_fragment(const FragmentRecord& rec) {
    FragmentArgs args;
    args.words = g_switch_context.args;
    g_switch_context.in_fragment = 1;
    FragmentResult r{};
    try {
        r = reinterpret_cast<FragmentFn>(fragment_entry(rec))(args);
    } catch (...) {
        fail_closed("fragment threw");
    }
    g_switch_context.in_fragment = 0;
    if (rec.convention == static_cast<std::uint8_t>(ReturnConvention::Rax)) r.r1 = 0;
    g_switch_context.result = {r.r0, r.r1};
    try {
        raise_via_fragment_sites(rec, g_rt.peer_continuation, true);
    } catch (...) {
        fail_closed("return switch could not be raised");
    }
    fail_closed("return switch resumed locally");
}

}  // namespace detail

using namespace detail;

void register_site_table(const SiteTableEntry* begin, const SiteTableEntry* end) {
    ensure_registry_key();
    for (const SiteTableEntry* e = begin; e != end; ++e) {
        if (g_registry.npool >= kPoolCapacity) throw Error(Errc::RegistryFull, "site pool");
        PoolSite& p = g_registry.pool[g_registry.npool++];
        p.masked_stub = g_registry.whitelist.pc_mask().mask(e->stub);
        p.fault_offset = e->fault_offset;
        p.fault_kind = e->fault_kind;
        p.flavor = e->flavor;
        p.bound = 0;
    }
}

std::vector<InvocationSite> available_sites(FaultKind kind, SiteFlavor flavor) {
    std::vector<InvocationSite> out;
    for (std::uint32_t i = 0; i < g_registry.npool; ++i) {
        const PoolSite& p = g_registry.pool[i];
        if (!p.bound && p.fault_kind == static_cast<std::uint8_t>(kind) && p.flavor == static_cast<std::uint8_t>(flavor))
            out.push_back(site_of(p));
    }
    return out;
}

FragmentDescriptor register_fragment(FragmentFn entry, std::span<const InvocationSite> sites,
                                     ReturnConvention convention) {
    ensure_registry_key();
    if (g_registry.frozen) throw Error(Errc::RegistryFrozen, "registration after the first switch");
    const Address addr = reinterpret_cast<Address>(entry);
    if (!executable_code_range().contains(addr)) throw Error(Errc::EntryOutOfRange, "fragment entry outside text");
    if (g_registry.nfragments >= kMaxFragments) throw Error(Errc::RegistryFull, "fragment table");
    if (sites.empty() || sites.size() > kMaxSitesPerFragment)
        throw Error(Errc::InvalidCodecConfig, "a fragment needs 1 to 8 sites");

    FragmentRecord rec{};
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const InvocationSite& s = sites[i];
        PoolSite* p = pool_site_at(s.pc);
        if (p == nullptr) throw Error(Errc::EntryOutOfRange, "site pc is not an invocation stub");
        if (p->bound || g_registry.whitelist.contains(s.pc)) throw Error(Errc::DuplicateSite, "site already bound");
        for (std::size_t j = 0; j < i; ++j)
            if (sites[j].pc == s.pc) throw Error(Errc::DuplicateSite, "site listed twice");
        if (static_cast<std::uint8_t>(s.fault_kind) != p->fault_kind)
            throw Error(Errc::InvalidCodecConfig, "site kind does not match its stub");
        rec.site_index[i] = static_cast<std::uint16_t>(p - g_registry.pool.data());
    }
    if (g_registry.whitelist.size() + sites.size() > Whitelist::kCapacity)
        throw Error(Errc::RegistryFull, "whitelist");

    FragmentDescriptor d;
    d.fragment_id = g_registry.nfragments + 1;
    d.entry = addr;
    d.return_convention = convention;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        PoolSite& p = g_registry.pool[rec.site_index[i]];
        const InvocationSite site = site_of(p);
        g_registry.whitelist.insert(site);
        p.bound = 1;
        d.sites.push_back(site);
    }
    rec.masked_entry = g_registry.whitelist.pc_mask().mask(addr);
    rec.id = d.fragment_id;
    rec.convention = static_cast<std::uint8_t>(convention);
    rec.nsites = static_cast<std::uint8_t>(sites.size());
    g_registry.fragments[g_registry.nfragments++] = rec;
    return d;
}

FragmentDescriptor register_fragment(FragmentFn entry, FaultKind kind, SiteFlavor flavor, std::size_t count,
                                     ReturnConvention convention) {
    auto free_sites = available_sites(kind, flavor);
    if (free_sites.size() < count)
        throw Error(Errc::RegistryFull, "not enough free " + std::string(to_string(flavor)) + " " +
                                            std::string(to_string(kind)) + " sites");
    free_sites.resize(count);
    return register_fragment(entry, free_sites, convention);
}

const Whitelist& whitelist() noexcept { return g_registry.whitelist; }
bool registry_frozen() noexcept { return g_registry.frozen != 0; }

FragmentResult invoke_migrated(FragmentId id, const FragmentArgs& args) {
    if (g_switch_context.in_fragment) throw Error(Errc::NestedInvocation, "fragment invoked from a fragment");
    const FragmentRecord* rec = find_fragment(id);
    if (rec == nullptr) throw Error(Errc::UnknownFragment, "fragment " + std::to_string(id));
    if (!g_rt.active) {
        FragmentResult r = call_local(reinterpret_cast<FragmentFn>(fragment_entry(*rec)), args);
        if (rec->convention == static_cast<std::uint8_t>(ReturnConvention::Rax)) r.r1 = 0;
        return r;
    }
    if (static_cast<pid_t>(syscall(SYS_gettid)) != g_rt.designated_tid)
        throw Error(Errc::WrongThread, "switches are limited to the designated thread");

    g_registry.frozen = 1;
    g_switch_context.args = args.words;
    g_switch_context.fragment_id = id;
    ++g_switch_context.sequence;
    g_switch_context.in_fragment = 1;
    struct Reset {
        ~Reset() { g_switch_context.in_fragment = 0; }
    } reset;
    FragmentResult r = raise_via_fragment_sites(*rec, fragment_entry(*rec), false);
    ++g_rt.switches;
    return r;
}

FragmentResult raise_switch(const InvocationSite& site, Address encoded_target) {
    const PoolSite* p = pool_site_at(site.pc);
    if (p == nullptr) throw Error(Errc::EntryOutOfRange, "site pc is not an invocation stub");
    if (g_rt.active) {
        g_registry.frozen = 1;
        return reinterpret_cast<FragmentResult (*)(std::uint64_t, std::uint64_t)>(pool_stub(*p))(encoded_target,
                                                                                                   encoded_target);
    }
    const FragmentRecord* rec = nullptr;
    if (site.fault_kind == FaultKind::TrapReference) {
        rec = find_fragment(encoded_target);
    } else {
        const CodecConfig* codec = g_rt.codec;
        if (codec == nullptr) throw Error(Errc::NoScheme, "no codec configured");
        const CodecScheme* scheme = codec->scheme_by_id(site.scheme_id);
        if (scheme == nullptr) throw Error(Errc::NoScheme, "site scheme unknown");
        rec = fragment_by_entry(decode_target(encoded_target, *scheme, codec->code));
    }
    if (rec == nullptr) throw Error(Errc::UnknownFragment, "target is not a fragment entry");
    FragmentArgs args;
    args.words = g_switch_context.args;
    return call_local(reinterpret_cast<FragmentFn>(fragment_entry(*rec)), args);
}

void fragment_read(Address addr, void* out, std::size_t len) {
    if (g_rt.active && getpid() != g_rt.app_pid) {
        RemoteMemory(g_rt.app_pid).read(addr, out, len);
        return;
    }
    std::memmove(out, reinterpret_cast<const void*>(addr), len);
}

void fragment_write(Address addr, const void* data, std::size_t len) {
    if (g_rt.active && getpid() != g_rt.app_pid) {
        RemoteMemory(g_rt.app_pid).write(addr, data, len);
        return;
    }
    std::memmove(reinterpret_cast<void*>(addr), data, len);
}

}  // namespace selfdbg
