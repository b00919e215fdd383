#pragma once

#include "selfdbg/errors.hpp"
#include "selfdbg/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace selfdbg {

struct SwitchEvent;

struct AddressRange {
    Address base = 0;
    std::uint64_t length = 0;

    // One past the last address, saturating at 2^64.
    unsigned __int128 end() const noexcept { return static_cast<unsigned __int128>(base) + length; }
    bool contains(Address a) const noexcept { return a >= base && a - base < length; }
    bool contains(Address first, Address last) const noexcept { return contains(first) && contains(last); }
    friend bool operator==(const AddressRange&, const AddressRange&) = default;
};

// Address sets guaranteed to raise SIGSEGV when accessed with the given kind.
struct FaultNamespace {
    std::vector<AddressRange> load_store;
    std::vector<AddressRange> exec;

    const std::vector<AddressRange>& ranges_for(FaultKind kind) const;
    bool contains(FaultKind kind, Address a) const;

    // Platform default: the non-canonical hole on 64-bit builds, the kernel
    // split above 0xC0000000 on 32-bit builds.
    static FaultNamespace platform_default();
};

enum class SchemeKind : std::uint8_t { MaskOr, XorKey };

struct CodecScheme {
    std::uint8_t id = 0;
    SchemeKind kind = SchemeKind::MaskOr;
    std::uint64_t param = 0;  // mask for MaskOr, key for XorKey
    FaultKind fault_kind = FaultKind::SegvLoadStore;

    friend bool operator==(const CodecScheme&, const CodecScheme&) = default;
};

// Identifier carried by a TrapReference return switch ("resume the pending
// continuation"); fragment identifiers start at 1.
inline constexpr std::uint64_t kReturnIdentifier = 0;
inline constexpr Address kResumePendingTarget = 0;

struct CodecConfig {
    FaultNamespace ns;
    std::vector<CodecScheme> schemes;
    // Decision table: fault kind -> scheme id (0 = no scheme).
    std::array<std::uint8_t, 3> decision{};
    CodeRange code;
    // Legacy identifier table for TrapReference sites, indexed by identifier.
    std::vector<Address> trap_table;

    const CodecScheme* scheme_by_id(std::uint8_t id) const noexcept;

    // Two schemes: MaskOr bound to load/store sites, XorKey bound to branch
    // sites. Parameters are drawn from `seed` unless pinned.
    static CodecConfig make_default(const FaultNamespace& ns, CodeRange code, std::uint64_t seed,
                                    std::optional<std::uint64_t> pinned_mask = std::nullopt,
                                    std::optional<std::uint64_t> pinned_key = std::nullopt);
};

// Throws Error{TargetOutOfRange} when `target` is outside `code` or cannot be
// embedded injectively into the namespace under `scheme`.
Address encode_target(Address target, const CodecScheme& scheme, const FaultNamespace& ns,
                      const CodeRange& code);

// Throws Error{DecodeOutOfCodeRange} when `fault_address` is not in the image
// of `scheme` or decodes outside `code`.
Address decode_target(Address fault_address, const CodecScheme& scheme, const CodeRange& code);
std::optional<Address> try_decode_target(Address fault_address, const CodecScheme& scheme,
                                         const CodeRange& code) noexcept;

// Throws Error{NoScheme} for TrapReference events or unmapped kinds.
const CodecScheme& select_scheme(const SwitchEvent& event, const CodecConfig& config);
const CodecScheme* try_select_scheme(FaultKind kind, const CodecConfig& config) noexcept;

// Throws Error{InvalidCodecConfig} unless every scheme's image of `code` lies
// inside the namespace ranges of the scheme's fault kind.
void validate_codec_config(const CodecConfig& config);

enum class AccessKind : std::uint8_t { Load, Store, Exec };
std::string_view to_string(AccessKind kind) noexcept;

struct ProbeSample {
    Address address = 0;
    AccessKind access = AccessKind::Load;
    bool faulted = false;
};

struct ProbeRangeResult {
    AddressRange range;
    AccessKind access = AccessKind::Load;
    std::size_t samples = 0;
    std::size_t faulted = 0;
    std::optional<Address> first_non_faulting;

    bool ok() const noexcept { return samples > 0 && samples == faulted; }
};

struct ProbeReport {
    std::vector<ProbeRangeResult> ranges;

    bool ok() const noexcept;
    std::string describe() const;
};

class ProbeFailure : public Error {
public:
    ProbeFailure(ProbeReport report, const ProbeRangeResult& offending);

    const ProbeReport& report() const noexcept { return report_; }
    const ProbeRangeResult& offending() const noexcept { return offending_; }

private:
    ProbeReport report_;
    ProbeRangeResult offending_;
};

// Accesses sample addresses of every range in a sacrificial child process.
// Throws ProbeFailure naming the first range with a non-faulting sample.
ProbeReport probe_namespace(const FaultNamespace& ns, std::size_t samples_per_range = 24);

}  // namespace selfdbg
