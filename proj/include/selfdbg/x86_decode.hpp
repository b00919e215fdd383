#pragma once

#include "selfdbg/types.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace selfdbg::x86 {

enum class InsnClass : std::uint8_t {
    Load,          // reads memory through the r/m operand
    Store,         // writes (or read-modify-writes) memory through the r/m operand
    JmpIndirect,   // ff /4
    CallIndirect,  // ff /2
    Trap,          // int3
    Ret,
    MovRegReg,     // 89/8b with register operands
    MovImm,        // b8+r, c7 /0 with a register destination
    Lea,
    Other,
};

struct MemOperand {
    std::int8_t base = -1;    // Reg index, -1 when absent
    std::int8_t index = -1;
    std::uint8_t scale = 1;
    std::int64_t disp = 0;
    bool rip_relative = false;
};

struct Instruction {
    std::size_t length = 0;
    InsnClass cls = InsnClass::Other;
    std::uint8_t opcode = 0;      // primary opcode byte (second byte for 0f xx)
    bool two_byte = false;
    bool has_modrm = false;
    bool rm_is_memory = false;
    MemOperand mem;
    std::int8_t rm_reg = -1;      // r/m register when rm_is_memory is false
    std::int8_t reg_field = -1;   // ModRM.reg extended by REX.R
    std::int8_t dest_reg = -1;    // register written, when known
};

// Decodes one instruction. Covers the general-purpose integer subset used by
// invocation sites and reused helpers; returns nullopt on anything else.
std::optional<Instruction> decode(std::span<const std::uint8_t> code) noexcept;

Address effective_address(const MemOperand& mem, const RegisterSnapshot& regs,
                          Address next_pc) noexcept;

struct FaultOperand {
    FaultKind kind;
    Address address;
};

// Address accessed or branched to by `insn` at `pc`, with the fault kind it
// would raise. nullopt for instructions that do not access memory.
std::optional<FaultOperand> fault_operand(const Instruction& insn, const RegisterSnapshot& regs,
                                          Address pc) noexcept;

// True for addresses outside both canonical halves under 48-bit paging.
constexpr bool is_noncanonical48(Address a) noexcept {
    const auto top = static_cast<std::int64_t>(a) >> 47;
    return top != 0 && top != -1;
}

}  // namespace selfdbg::x86
