#include "selfdbg/x86_decode.hpp"

namespace selfdbg::x86 {
namespace {

struct Cursor {
    std::span<const std::uint8_t> code;
    std::size_t pos = 0;

    bool has(std::size_t n) const noexcept { return pos + n <= code.size(); }
    std::uint8_t u8() noexcept { return code[pos++]; }
    std::int64_t s8() noexcept { return static_cast<std::int8_t>(code[pos++]); }
    std::int64_t s32() noexcept {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(code[pos + i]) << (8 * i);
        pos += 4;
        return static_cast<std::int32_t>(v);
    }
};

bool is_legacy_prefix(std::uint8_t b) noexcept {
    switch (b) {
        case 0x66: case 0x67: case 0xf0: case 0xf2: case 0xf3:
        case 0x2e: case 0x36: case 0x3e: case 0x26: case 0x64: case 0x65:
            return true;
        default:
            return false;
    }
}

// Parses ModRM (+SIB, displacement). Returns false when bytes run out.
bool parse_modrm(Cursor& c, std::uint8_t rex, Instruction& out) noexcept {
    if (!c.has(1)) return false;
    const std::uint8_t modrm = c.u8();
    const std::uint8_t mod = modrm >> 6;
    const std::uint8_t reg = (modrm >> 3) & 7;
    const std::uint8_t rm = modrm & 7;
    out.has_modrm = true;
    out.reg_field = static_cast<std::int8_t>(reg | ((rex & 4) ? 8 : 0));
    if (mod == 3) {
        out.rm_is_memory = false;
        out.rm_reg = static_cast<std::int8_t>(rm | ((rex & 1) ? 8 : 0));
        return true;
    }
    out.rm_is_memory = true;
    MemOperand& m = out.mem;
    if (rm == 4) {
        if (!c.has(1)) return false;
        const std::uint8_t sib = c.u8();
        const std::uint8_t scale = sib >> 6;
        const std::uint8_t idx = ((sib >> 3) & 7) | ((rex & 2) ? 8 : 0);
        const std::uint8_t base = sib & 7;
        m.scale = static_cast<std::uint8_t>(1u << scale);
        m.index = idx == 4 ? -1 : static_cast<std::int8_t>(idx);
        if (base == 5 && mod == 0) {
            m.base = -1;
            if (!c.has(4)) return false;
            m.disp = c.s32();
            return true;
        }
        m.base = static_cast<std::int8_t>(base | ((rex & 1) ? 8 : 0));
    } else if (rm == 5 && mod == 0) {
        m.rip_relative = true;
        if (!c.has(4)) return false;
        m.disp = c.s32();
        return true;
    } else {
        m.base = static_cast<std::int8_t>(rm | ((rex & 1) ? 8 : 0));
    }
    if (mod == 1) {
        if (!c.has(1)) return false;
        m.disp = c.s8();
    } else if (mod == 2) {
        if (!c.has(4)) return false;
        m.disp = c.s32();
    }
    return true;
}

bool skip(Cursor& c, std::size_t n) noexcept {
    if (!c.has(n)) return false;
    c.pos += n;
    return true;
}

}  // namespace

std::optional<Instruction> decode(std::span<const std::uint8_t> code) noexcept {
    Cursor c{code};
    Instruction out;
    bool opsize16 = false;
    while (c.has(1) && is_legacy_prefix(c.code[c.pos])) {
        if (c.code[c.pos] == 0x66) opsize16 = true;
        ++c.pos;
        if (c.pos > 4) return std::nullopt;
    }
    std::uint8_t rex = 0;
    if (c.has(1) && (c.code[c.pos] & 0xf0) == 0x40) rex = c.u8();
    if (!c.has(1)) return std::nullopt;
    const std::uint8_t op = c.u8();
    out.opcode = op;
    const std::size_t imm_z = opsize16 ? 2 : 4;

    auto modrm = [&]() { return parse_modrm(c, rex, out); };
    auto finish = [&](InsnClass cls) -> std::optional<Instruction> {
        out.cls = cls;
        out.length = c.pos;
        return out;
    };

    if (op == 0x0f) {
        if (!c.has(1)) return std::nullopt;
        const std::uint8_t op2 = c.u8();
        out.two_byte = true;
        out.opcode = op2;
        switch (op2) {
            case 0x05: return finish(InsnClass::Other);  // syscall
            case 0x0b: return finish(InsnClass::Other);  // ud2
            case 0x1f:
                if (!modrm()) return std::nullopt;
                return finish(InsnClass::Other);
            case 0xb6: case 0xb7: case 0xbe: case 0xbf:
                if (!modrm()) return std::nullopt;
                out.dest_reg = out.reg_field;
                return finish(out.rm_is_memory ? InsnClass::Load : InsnClass::Other);
            default:
                if (op2 >= 0x80 && op2 <= 0x8f) {
                    if (!skip(c, 4)) return std::nullopt;
                    return finish(InsnClass::Other);
                }
                if (op2 >= 0x40 && op2 <= 0x4f) {  // cmovcc
                    if (!modrm()) return std::nullopt;
                    return finish(out.rm_is_memory ? InsnClass::Load : InsnClass::Other);
                }
                return std::nullopt;
        }
    }

    // ALU r/m,reg and reg,r/m forms: 00-3b with low 3 bits 0..3.
    if (op < 0x40 && (op & 7) <= 3) {
        if (!modrm()) return std::nullopt;
        const bool to_rm = (op & 2) == 0;
        const bool is_cmp = (op & 0x38) == 0x38;
        if (!out.rm_is_memory) return finish(InsnClass::Other);
        if (to_rm && !is_cmp) return finish(InsnClass::Store);
        return finish(InsnClass::Load);
    }
    if (op < 0x40 && ((op & 7) == 4 || (op & 7) == 5)) {
        if (!skip(c, (op & 7) == 4 ? 1 : imm_z)) return std::nullopt;
        return finish(InsnClass::Other);
    }
    if (op >= 0x50 && op <= 0x5f) return finish(InsnClass::Other);
    if (op >= 0x70 && op <= 0x7f) {
        if (!skip(c, 1)) return std::nullopt;
        return finish(InsnClass::Other);
    }
    if (op >= 0xb8 && op <= 0xbf) {
        out.dest_reg = static_cast<std::int8_t>((op & 7) | ((rex & 1) ? 8 : 0));
        if (!skip(c, (rex & 8) ? 8 : imm_z)) return std::nullopt;
        return finish(InsnClass::MovImm);
    }
    switch (op) {
        case 0x80: case 0x81: case 0x83: {
            if (!modrm()) return std::nullopt;
            if (!skip(c, op == 0x81 ? imm_z : 1)) return std::nullopt;
            if (!out.rm_is_memory) return finish(InsnClass::Other);
            return finish(out.reg_field % 8 == 7 ? InsnClass::Load : InsnClass::Store);
        }
        case 0x84: case 0x85:
            if (!modrm()) return std::nullopt;
            return finish(out.rm_is_memory ? InsnClass::Load : InsnClass::Other);
        case 0x88: case 0x89:
            if (!modrm()) return std::nullopt;
            if (out.rm_is_memory) return finish(InsnClass::Store);
            out.dest_reg = out.rm_reg;
            return finish(InsnClass::MovRegReg);
        case 0x8a: case 0x8b:
            if (!modrm()) return std::nullopt;
            out.dest_reg = out.reg_field;
            return finish(out.rm_is_memory ? InsnClass::Load : InsnClass::MovRegReg);
        case 0x8d:
            if (!modrm()) return std::nullopt;
            out.dest_reg = out.reg_field;
            return finish(InsnClass::Lea);
        case 0x90: return finish(InsnClass::Other);
        case 0xc2:
            if (!skip(c, 2)) return std::nullopt;
            return finish(InsnClass::Ret);
        case 0xc3: return finish(InsnClass::Ret);
        case 0xc6: case 0xc7: {
            if (!modrm()) return std::nullopt;
            if (!skip(c, op == 0xc6 ? 1 : imm_z)) return std::nullopt;
            if (out.rm_is_memory) return finish(InsnClass::Store);
            out.dest_reg = out.rm_reg;
            return finish(InsnClass::MovImm);
        }
        case 0xc9: return finish(InsnClass::Other);
        case 0xcc: return finish(InsnClass::Trap);
        case 0xe8: case 0xe9:
            if (!skip(c, 4)) return std::nullopt;
            return finish(InsnClass::Other);
        case 0xeb:
            if (!skip(c, 1)) return std::nullopt;
            return finish(InsnClass::Other);
        case 0xfe: case 0xff: {
            if (!modrm()) return std::nullopt;
            const int sub = out.reg_field % 8;
            if (op == 0xff && sub == 2) return finish(InsnClass::CallIndirect);
            if (op == 0xff && sub == 4) return finish(InsnClass::JmpIndirect);
            if (op == 0xff && sub == 6) return finish(out.rm_is_memory ? InsnClass::Load : InsnClass::Other);
            if (sub <= 1) return finish(out.rm_is_memory ? InsnClass::Store : InsnClass::Other);
            return std::nullopt;
        }
        default:
            return std::nullopt;
    }
}

Address effective_address(const MemOperand& mem, const RegisterSnapshot& regs,
                          Address next_pc) noexcept {
    Address a = static_cast<Address>(mem.disp);
    if (mem.rip_relative) return next_pc + a;
    if (mem.base >= 0) a += regs.gpr[static_cast<std::size_t>(mem.base)];
    if (mem.index >= 0) a += regs.gpr[static_cast<std::size_t>(mem.index)] * mem.scale;
    return a;
}

std::optional<FaultOperand> fault_operand(const Instruction& insn, const RegisterSnapshot& regs,
                                          Address pc) noexcept {
    const Address next = pc + insn.length;
    switch (insn.cls) {
        case InsnClass::Load:
        case InsnClass::Store:
            return FaultOperand{FaultKind::SegvLoadStore, effective_address(insn.mem, regs, next)};
        case InsnClass::JmpIndirect:
        case InsnClass::CallIndirect:
            // Memory-indirect branches fault first on the pointer load.
            if (insn.rm_is_memory)
                return FaultOperand{FaultKind::SegvLoadStore, effective_address(insn.mem, regs, next)};
            return FaultOperand{FaultKind::SegvExec, regs.gpr[static_cast<std::size_t>(insn.rm_reg)]};
        default:
            return std::nullopt;
    }
}

}  // namespace selfdbg::x86
