#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace selfdbg {

enum class Errc {
    // target-codec
    TargetOutOfRange,
    DecodeOutOfCodeRange,
    NoScheme,
    ProbeFailure,
    InvalidCodecConfig,
    // mini-debugger
    AttachDenied,
    KernelTooOld,
    RegisterWriteFailed,
    RemoteFault,
    NotStopped,
    // process-bootstrap
    ForkFailed,
    HandshakeTimeout,
    AlreadyInitialized,
    // fragment-api
    DuplicateSite,
    EntryOutOfRange,
    RegistryFrozen,
    RegistryFull,
    UnknownFragment,
    NestedInvocation,
    WrongThread,
    UnreadableBinary,
    // kernel-sim
    DepthExceeded,
    UnknownScenario,
    // config
    ConfigSyntax,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace selfdbg
