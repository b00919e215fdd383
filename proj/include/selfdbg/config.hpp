#pragma once

#include "selfdbg/kernel_sim.hpp"
#include "selfdbg/target_codec.hpp"
#include "selfdbg/types.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace selfdbg {

// Signaling method used by the sites a program binds its fragments to.
enum class SwitchMethod : std::uint8_t { SegvLoadStore, SegvExec, Trap };

std::string_view to_string(SwitchMethod m) noexcept;
std::optional<SwitchMethod> method_from_string(std::string_view s) noexcept;
FaultKind fault_kind_of(SwitchMethod m) noexcept;

struct BenchOptions {
    std::size_t switch_iterations = 200;
    std::size_t init_iterations = 30;
    std::size_t memory_iterations = 2000;
    std::size_t warmup = 10;
};

struct ProtectionConfig {
    FaultNamespace ns = FaultNamespace::platform_default();
    std::optional<std::uint64_t> mask;   // pins the MaskOr parameter
    std::optional<std::uint64_t> key;    // pins the XorKey parameter
    std::optional<std::uint64_t> seed;   // codec and whitelist randomness

    bool probe = true;
    std::size_t probe_samples = 8;
    std::chrono::milliseconds handshake_timeout{5000};
    bool reciprocal = true;
    bool attach_all_threads = false;
    bool suppress_child_notices = true;
    int event_fd = -1;

    SwitchMethod method = SwitchMethod::SegvLoadStore;
    SiteFlavor flavor = SiteFlavor::Inline;

    BenchOptions bench;
    std::vector<sim::Scenario> scenarios;  // extra simulator scenarios

    // Applies SELFDBG_CONFIG (a file path) and SELFDBG_EVENT_FD.
    static ProtectionConfig from_environment();
};

// Parses the key/value format documented in docs/config.md. Throws
// Error{ConfigSyntax} with the offending line number.
ProtectionConfig parse_config(std::string_view text, ProtectionConfig base = {});
ProtectionConfig load_config_file(const std::string& path, ProtectionConfig base = {});

// Raw parse: "section.key" -> value, for tools that need unknown keys.
std::map<std::string, std::string> parse_config_entries(std::string_view text);

}  // namespace selfdbg
