#include "selfdbg/target_codec.hpp"
#include "selfdbg/errors.hpp"
#include "selfdbg/switch_protocol.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <csetjmp>
#include <csignal>
#include <cstdio>
#include <random>
#include <sstream>

namespace selfdbg {

namespace {

using u128 = unsigned __int128;

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

// Smallest k with every code address below 2^k; 64 when unrepresentable.
unsigned code_bits(const CodeRange& code) noexcept {
    if (code.end == 0) return 0;
    return static_cast<unsigned>(std::bit_width(code.end - 1));
}

bool block_inside(const std::vector<AddressRange>& ranges, Address first, u128 end) noexcept {
    for (const auto& r : ranges) {
        if (first >= r.base && end <= r.end()) return true;
    }
    return false;
}

// Image block of `scheme` over targets below 2^k.
std::optional<std::pair<Address, u128>> image_block(const CodecScheme& scheme, unsigned k) noexcept {
    if (k >= 64) return std::nullopt;
    const std::uint64_t low = (std::uint64_t{1} << k) - 1;
    if (scheme.kind == SchemeKind::MaskOr && (scheme.param & low) != 0) return std::nullopt;
    const Address base = scheme.param & ~low;
    return std::pair{base, u128{base} + low + 1};
}

}  // namespace

const std::vector<AddressRange>& FaultNamespace::ranges_for(FaultKind kind) const {
    return kind == FaultKind::SegvExec ? exec : load_store;
}

bool FaultNamespace::contains(FaultKind kind, Address a) const {
    for (const auto& r : ranges_for(kind))
        if (r.contains(a)) return true;
    return false;
}

FaultNamespace FaultNamespace::platform_default() {
    FaultNamespace ns;
    if constexpr (sizeof(void*) == 8) {
        // Non-canonical under both 48- and 57-bit paging.
        const AddressRange hole{0x0100000000000000ull, 0xfe00000000000000ull};
        ns.load_store.push_back(hole);
        ns.exec.push_back(hole);
    } else {
        const AddressRange kernel{0xC0000000ull, 0x40000000ull};
        ns.load_store.push_back(kernel);
        ns.exec.push_back(kernel);
    }
    return ns;
}

const CodecScheme* CodecConfig::scheme_by_id(std::uint8_t id) const noexcept {
    for (const auto& s : schemes)
        if (s.id == id) return &s;
    return nullptr;
}

namespace {

Address random_block_base(const std::vector<AddressRange>& ranges, unsigned k, std::mt19937_64& rng) {
    if (k >= 64) throw Error(Errc::InvalidCodecConfig, "code range too wide");
    const u128 block = u128{1} << k;
    std::vector<std::pair<u128, u128>> slots;  // [first block index, last block index]
    for (const auto& r : ranges) {
        const u128 first = (u128{r.base} + block - 1) >> k;
        const u128 end_idx = r.end() >> k;
        if (end_idx > first) slots.emplace_back(first, end_idx - 1);
    }
    if (slots.empty()) throw Error(Errc::InvalidCodecConfig, "namespace has no room for the code range");
    const auto& s = slots[rng() % slots.size()];
    const u128 span = s.second - s.first + 1;
    const u128 pick = s.first + (span > 1 ? (u128{rng()} % span) : 0);
    return static_cast<Address>(pick << k);
}

}  // namespace

CodecConfig CodecConfig::make_default(const FaultNamespace& ns, CodeRange code, std::uint64_t seed,
                                      std::optional<std::uint64_t> pinned_mask,
                                      std::optional<std::uint64_t> pinned_key) {
    std::mt19937_64 rng(seed);
    const unsigned k = code_bits(code);
    CodecConfig cfg;
    cfg.ns = ns;
    cfg.code = code;

    CodecScheme mask_or{1, SchemeKind::MaskOr, 0, FaultKind::SegvLoadStore};
    mask_or.param = pinned_mask ? *pinned_mask : random_block_base(ns.load_store, k, rng);
    CodecScheme xor_key{2, SchemeKind::XorKey, 0, FaultKind::SegvExec};
    if (pinned_key) {
        xor_key.param = *pinned_key;
    } else {
        const std::uint64_t low = k >= 64 ? ~0ull : (std::uint64_t{1} << k) - 1;
        xor_key.param = random_block_base(ns.exec, k, rng) | (rng() & low);
    }
    cfg.schemes = {mask_or, xor_key};
    cfg.decision[static_cast<std::size_t>(FaultKind::SegvLoadStore)] = mask_or.id;
    cfg.decision[static_cast<std::size_t>(FaultKind::SegvExec)] = xor_key.id;
    cfg.decision[static_cast<std::size_t>(FaultKind::TrapReference)] = 0;
    return cfg;
}

Address encode_target(Address target, const CodecScheme& scheme, const FaultNamespace& ns,
                      const CodeRange& code) {
    if (!code.contains(target)) throw Error(Errc::TargetOutOfRange, hex(target) + " outside code range");
    Address out = 0;
    if (scheme.kind == SchemeKind::MaskOr) {
        if ((target & scheme.param) != 0)
            throw Error(Errc::TargetOutOfRange, hex(target) + " overlaps mask " + hex(scheme.param));
        out = target | scheme.param;
    } else {
        out = target ^ scheme.param;
    }
    if (!ns.contains(scheme.fault_kind, out))
        throw Error(Errc::TargetOutOfRange, hex(target) + " encodes outside the namespace");
    return out;
}

std::optional<Address> try_decode_target(Address fault_address, const CodecScheme& scheme,
                                         const CodeRange& code) noexcept {
    Address t = 0;
    if (scheme.kind == SchemeKind::MaskOr) {
        if ((fault_address & scheme.param) != scheme.param) return std::nullopt;
        t = fault_address & ~scheme.param;
    } else {
        t = fault_address ^ scheme.param;
    }
    if (!code.contains(t)) return std::nullopt;
    return t;
}

Address decode_target(Address fault_address, const CodecScheme& scheme, const CodeRange& code) {
    if (auto t = try_decode_target(fault_address, scheme, code)) return *t;
    throw Error(Errc::DecodeOutOfCodeRange, hex(fault_address));
}

const CodecScheme* try_select_scheme(FaultKind kind, const CodecConfig& config) noexcept {
    if (kind == FaultKind::TrapReference) return nullptr;
    const auto id = config.decision[static_cast<std::size_t>(kind)];
    if (id == 0) return nullptr;
    const CodecScheme* s = config.scheme_by_id(id);
    if (s == nullptr || s->fault_kind != kind) return nullptr;
    return s;
}

const CodecScheme& select_scheme(const SwitchEvent& event, const CodecConfig& config) {
    if (const CodecScheme* s = try_select_scheme(event.fault_kind, config)) return *s;
    throw Error(Errc::NoScheme, std::string(to_string(event.fault_kind)));
}

void validate_codec_config(const CodecConfig& config) {
    if (config.code.begin >= config.code.end) throw Error(Errc::InvalidCodecConfig, "empty code range");
    const unsigned k = code_bits(config.code);
    for (std::size_t i = 0; i < config.schemes.size(); ++i) {
        const auto& s = config.schemes[i];
        if (s.id == 0) throw Error(Errc::InvalidCodecConfig, "scheme id 0 is reserved");
        if (s.fault_kind == FaultKind::TrapReference)
            throw Error(Errc::InvalidCodecConfig, "schemes cannot bind TrapReference");
        for (std::size_t j = 0; j < i; ++j)
            if (config.schemes[j].id == s.id) throw Error(Errc::InvalidCodecConfig, "duplicate scheme id");
        const auto block = image_block(s, k);
        if (!block) throw Error(Errc::InvalidCodecConfig, "scheme " + std::to_string(s.id) + " is not injective");
        if (!block_inside(config.ns.ranges_for(s.fault_kind), block->first, block->second))
            throw Error(Errc::InvalidCodecConfig,
                        "scheme " + std::to_string(s.id) + " image leaves the namespace at " + hex(block->first));
    }
    for (std::size_t kind = 0; kind < config.decision.size(); ++kind) {
        const auto id = config.decision[kind];
        if (id == 0) continue;
        const CodecScheme* s = config.scheme_by_id(id);
        if (s == nullptr || static_cast<std::size_t>(s->fault_kind) != kind)
            throw Error(Errc::InvalidCodecConfig, "decision table entry mismatches its scheme");
    }
}

std::string_view to_string(AccessKind kind) noexcept {
    switch (kind) {
        case AccessKind::Load: return "load";
        case AccessKind::Store: return "store";
        case AccessKind::Exec: return "exec";
    }
    return "?";
}

bool ProbeReport::ok() const noexcept {
    for (const auto& r : ranges)
        if (!r.ok()) return false;
    return !ranges.empty();
}

std::string ProbeReport::describe() const {
    std::ostringstream os;
    for (const auto& r : ranges) {
        os << hex(r.range.base) << "+" << hex(r.range.length) << " " << to_string(r.access) << ": "
           << r.faulted << "/" << r.samples << " faulted";
        if (r.first_non_faulting) os << " (no fault at " << hex(*r.first_non_faulting) << ")";
        os << "\n";
    }
    return os.str();
}

ProbeFailure::ProbeFailure(ProbeReport report, const ProbeRangeResult& offending)
    : Error(Errc::ProbeFailure, hex(offending.range.base) + "+" + hex(offending.range.length) + " " +
                                    std::string(to_string(offending.access)) + " did not fault"),
      report_(std::move(report)),
      offending_(offending) {}

namespace {

sigjmp_buf g_probe_env;

void probe_handler(int) { siglongjmp(g_probe_env, 1); }

[[gnu::noinline]] void touch(Address a, AccessKind access) {
    switch (access) {
        case AccessKind::Load: {
            [[maybe_unused]] volatile std::uint8_t v = *reinterpret_cast<volatile std::uint8_t*>(a);
            break;
        }
        case AccessKind::Store:
            *reinterpret_cast<volatile std::uint8_t*>(a) = 0;
            break;
        case AccessKind::Exec:
            reinterpret_cast<void (*)()>(a)();
            break;
    }
}

std::vector<Address> sample_points(const AddressRange& r, std::size_t n, std::uint64_t seed) {
    std::vector<Address> pts;
    if (r.length == 0 || n == 0) return pts;
    pts.push_back(r.base);
    if (n > 1) pts.push_back(r.base + (r.length - 1));
    std::mt19937_64 rng(seed ^ r.base);
    while (pts.size() < n) pts.push_back(r.base + rng() % r.length);
    return pts;
}

}  // namespace

ProbeReport probe_namespace(const FaultNamespace& ns, std::size_t samples_per_range) {
    struct Plan {
        AddressRange range;
        AccessKind access;
        std::vector<Address> points;
    };
    std::vector<Plan> plans;
    for (const auto& r : ns.load_store) {
        plans.push_back({r, AccessKind::Load, sample_points(r, samples_per_range, 1)});
        plans.push_back({r, AccessKind::Store, sample_points(r, samples_per_range, 2)});
    }
    for (const auto& r : ns.exec) plans.push_back({r, AccessKind::Exec, sample_points(r, samples_per_range, 3)});

    int fds[2];
    if (pipe(fds) != 0) throw Error(Errc::ProbeFailure, "pipe failed");
    std::fflush(nullptr);
    const pid_t child = fork();
    if (child < 0) {
        close(fds[0]);
        close(fds[1]);
        throw Error(Errc::ProbeFailure, "fork failed");
    }
    if (child == 0) {
        close(fds[0]);
        alarm(10);
        struct sigaction sa {};
        sa.sa_handler = probe_handler;
        sigemptyset(&sa.sa_mask);
        sa.sa_flags = SA_NODEFER;
        sigaction(SIGSEGV, &sa, nullptr);
        sigaction(SIGBUS, &sa, nullptr);
        sigset_t unblock;
        sigemptyset(&unblock);
        sigaddset(&unblock, SIGSEGV);
        sigaddset(&unblock, SIGBUS);
        sigprocmask(SIG_UNBLOCK, &unblock, nullptr);
        for (const auto& p : plans) {
            for (Address a : p.points) {
                char faulted = 1;
                if (sigsetjmp(g_probe_env, 1) == 0) {
                    touch(a, p.access);
                    faulted = 0;
                }
                if (write(fds[1], &faulted, 1) != 1) _exit(2);
            }
        }
        _exit(0);
    }
    close(fds[1]);

    ProbeReport report;
    for (const auto& p : plans) {
        ProbeRangeResult res{p.range, p.access, p.points.size(), 0, std::nullopt};
        for (Address a : p.points) {
            char faulted = 0;
            if (read(fds[0], &faulted, 1) != 1) faulted = 0;
            if (faulted) ++res.faulted;
            else if (!res.first_non_faulting) res.first_non_faulting = a;
        }
        report.ranges.push_back(res);
    }
    close(fds[0]);
    int status = 0;
    while (waitpid(child, &status, 0) < 0 && errno == EINTR) {
    }
    for (const auto& r : report.ranges)
        if (!r.ok()) throw ProbeFailure(report, r);
    return report;
}

}  // namespace selfdbg
