#pragma once

#include <sys/types.h>

#include <array>
#include <cstdint>
#include <string_view>

namespace selfdbg {

using Address = std::uint64_t;

enum class ProcessRole : std::uint8_t { Thrower, Catcher };

enum class FaultKind : std::uint8_t { SegvLoadStore, SegvExec, TrapReference };

enum class SiteFlavor : std::uint8_t { Inline, ReusedCode };

std::string_view to_string(ProcessRole role) noexcept;
std::string_view to_string(FaultKind kind) noexcept;
std::string_view to_string(SiteFlavor flavor) noexcept;

// General-purpose registers in x86-64 ModRM numbering, so a decoded
// register field indexes RegisterSnapshot::gpr directly.
enum class Reg : std::uint8_t {
    Rax, Rcx, Rdx, Rbx, Rsp, Rbp, Rsi, Rdi,
    R8, R9, R10, R11, R12, R13, R14, R15,
};

inline constexpr std::size_t kGprCount = 16;

// Layout is consumed by the context-restore routine in arch/x86_64/context.S.
struct RegisterSnapshot {
    std::array<std::uint64_t, kGprCount> gpr{};
    std::uint64_t pc = 0;
    std::uint64_t flags = 0;

    std::uint64_t& operator[](Reg r) noexcept { return gpr[static_cast<std::size_t>(r)]; }
    std::uint64_t operator[](Reg r) const noexcept { return gpr[static_cast<std::size_t>(r)]; }
    std::uint64_t sp() const noexcept { return (*this)[Reg::Rsp]; }

    friend bool operator==(const RegisterSnapshot&, const RegisterSnapshot&) = default;
};

static_assert(sizeof(RegisterSnapshot) == 18 * 8);

struct CodeRange {
    Address begin = 0;
    Address end = 0;

    bool contains(Address a) const noexcept { return a >= begin && a < end; }
    friend bool operator==(const CodeRange&, const CodeRange&) = default;
};

// Text segment of the running executable; identical in both processes of a
// protected pair because they share one fork image.
CodeRange executable_code_range() noexcept;

}  // namespace selfdbg
