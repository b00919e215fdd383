#include "selfdbg/types.hpp"
#include "selfdbg/errors.hpp"

extern "C" {
extern const char __executable_start[];
extern const char etext[];
}

namespace selfdbg {

std::string_view to_string(ProcessRole role) noexcept {
    return role == ProcessRole::Thrower ? "Thrower" : "Catcher";
}

std::string_view to_string(FaultKind kind) noexcept {
    switch (kind) {
        case FaultKind::SegvLoadStore: return "SegvLoadStore";
        case FaultKind::SegvExec: return "SegvExec";
        case FaultKind::TrapReference: return "TrapReference";
    }
    return "?";
}

std::string_view to_string(SiteFlavor flavor) noexcept {
    return flavor == SiteFlavor::Inline ? "Inline" : "ReusedCode";
}

CodeRange executable_code_range() noexcept {
    return {reinterpret_cast<Address>(__executable_start), reinterpret_cast<Address>(etext)};
}

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::TargetOutOfRange: return "TargetOutOfRange";
        case Errc::DecodeOutOfCodeRange: return "DecodeOutOfCodeRange";
        case Errc::NoScheme: return "NoScheme";
        case Errc::ProbeFailure: return "ProbeFailure";
        case Errc::InvalidCodecConfig: return "InvalidCodecConfig";
        case Errc::AttachDenied: return "AttachDenied";
        case Errc::KernelTooOld: return "KernelTooOld";
        case Errc::RegisterWriteFailed: return "RegisterWriteFailed";
        case Errc::RemoteFault: return "RemoteFault";
        case Errc::NotStopped: return "NotStopped";
        case Errc::ForkFailed: return "ForkFailed";
        case Errc::HandshakeTimeout: return "HandshakeTimeout";
        case Errc::AlreadyInitialized: return "AlreadyInitialized";
        case Errc::DuplicateSite: return "DuplicateSite";
        case Errc::EntryOutOfRange: return "EntryOutOfRange";
        case Errc::RegistryFrozen: return "RegistryFrozen";
        case Errc::RegistryFull: return "RegistryFull";
        case Errc::UnknownFragment: return "UnknownFragment";
        case Errc::NestedInvocation: return "NestedInvocation";
        case Errc::WrongThread: return "WrongThread";
        case Errc::UnreadableBinary: return "UnreadableBinary";
        case Errc::DepthExceeded: return "DepthExceeded";
        case Errc::UnknownScenario: return "UnknownScenario";
        case Errc::ConfigSyntax: return "ConfigSyntax";
    }
    return "Unknown";
}

}  // namespace selfdbg
