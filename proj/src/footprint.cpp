#include "selfdbg/errors.hpp"
#include "selfdbg/fragment_api.hpp"
#include "selfdbg/x86_decode.hpp"

#include "json.hpp"

#include <elf.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace selfdbg {

namespace {

constexpr std::string_view kSitePrefixes[] = {"selfdbg_site_", "selfdbg_reuse_"};
constexpr std::size_t kMaxStubBytes = 64;

template <class T>
T read_at(const std::vector<std::uint8_t>& img, std::size_t off, const std::string& path) {
    if (off > img.size() || img.size() - off < sizeof(T)) throw Error(Errc::UnreadableBinary, path + ": truncated");
    T v;
    std::memcpy(&v, img.data() + off, sizeof v);
    return v;
}

std::string_view class_name(x86::InsnClass c) {
    switch (c) {
        case x86::InsnClass::Load: return "load";
        case x86::InsnClass::Store: return "store";
        case x86::InsnClass::JmpIndirect: return "jmp-indirect";
        case x86::InsnClass::CallIndirect: return "call-indirect";
        case x86::InsnClass::Trap: return "int3";
        case x86::InsnClass::Ret: return "ret";
        case x86::InsnClass::MovRegReg: return "mov-reg";
        case x86::InsnClass::MovImm: return "mov-imm";
        case x86::InsnClass::Lea: return "lea";
        case x86::InsnClass::Other: return "other";
    }
    return "other";
}

bool is_fault_instruction(const x86::Instruction& i) {
    switch (i.cls) {
        case x86::InsnClass::Load:
        case x86::InsnClass::Store:
        case x86::InsnClass::Trap: return true;
        case x86::InsnClass::JmpIndirect:
        case x86::InsnClass::CallIndirect: return true;
        default: return false;
    }
}

// Registers the faulting instruction derives its address from.
std::vector<int> operand_registers(const x86::Instruction& i) {
    std::vector<int> regs;
    if (i.rm_is_memory) {
        if (i.mem.base >= 0) regs.push_back(i.mem.base);
        if (i.mem.index >= 0) regs.push_back(i.mem.index);
    } else if (i.rm_reg >= 0) {
        regs.push_back(i.rm_reg);
    }
    return regs;
}

}  // namespace

std::string FootprintReport::to_json() const {
    nlohmann::json j;
    j["site_count"] = site_count;
    j["trap_opcodes"] = trap_opcodes;
    j["adjacent_pairs"] = adjacent_pairs;
    j["details"] = nlohmann::json::array();
    for (const auto& d : details) {
        j["details"].push_back({{"symbol", d.symbol},
                                {"address", d.address},
                                {"fault_offset", d.fault_offset},
                                {"instruction", d.instruction},
                                {"trap", d.trap},
                                {"adjacent_setup", d.adjacent_setup}});
    }
    return j.dump(2);
}

FootprintReport static_footprint_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::UnreadableBinary, path + ": cannot open");
    const std::vector<std::uint8_t> img{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    const auto eh = read_at<Elf64_Ehdr>(img, 0, path);
    if (std::memcmp(eh.e_ident, ELFMAG, SELFMAG) != 0 || eh.e_ident[EI_CLASS] != ELFCLASS64)
        throw Error(Errc::UnreadableBinary, path + ": not a 64-bit ELF file");
    if (eh.e_shentsize != sizeof(Elf64_Shdr)) throw Error(Errc::UnreadableBinary, path + ": odd section headers");

    std::vector<Elf64_Shdr> sections;
    for (std::size_t i = 0; i < eh.e_shnum; ++i)
        sections.push_back(read_at<Elf64_Shdr>(img, eh.e_shoff + i * sizeof(Elf64_Shdr), path));

    const Elf64_Shdr* symtab = nullptr;
    for (const auto& s : sections)
        if (s.sh_type == SHT_SYMTAB) symtab = &s;
    if (symtab == nullptr) throw Error(Errc::UnreadableBinary, path + ": no symbol table");
    if (symtab->sh_link >= sections.size()) throw Error(Errc::UnreadableBinary, path + ": bad string table link");
    const Elf64_Shdr& strtab = sections[symtab->sh_link];

    FootprintReport report;
    const std::size_t nsyms = symtab->sh_size / sizeof(Elf64_Sym);
    for (std::size_t i = 0; i < nsyms; ++i) {
        const auto sym = read_at<Elf64_Sym>(img, symtab->sh_offset + i * sizeof(Elf64_Sym), path);
        if (ELF64_ST_TYPE(sym.st_info) != STT_FUNC || sym.st_shndx == SHN_UNDEF || sym.st_shndx >= sections.size())
            continue;
        if (sym.st_name >= strtab.sh_size) continue;
        const char* name_ptr = reinterpret_cast<const char*>(img.data() + strtab.sh_offset + sym.st_name);
        const std::string name(name_ptr, strnlen(name_ptr, strtab.sh_size - sym.st_name));
        if (std::none_of(std::begin(kSitePrefixes), std::end(kSitePrefixes),
                         [&](std::string_view p) { return name.rfind(p, 0) == 0; }))
            continue;

        const Elf64_Shdr& sec = sections[sym.st_shndx];
        if (sec.sh_type == SHT_NOBITS || sym.st_value < sec.sh_addr) continue;
        const std::size_t off = sec.sh_offset + (sym.st_value - sec.sh_addr);
        const std::size_t len = std::min<std::size_t>(sym.st_size ? sym.st_size : kMaxStubBytes, kMaxStubBytes);
        if (off + len > img.size()) throw Error(Errc::UnreadableBinary, path + ": symbol outside file");

        FootprintDetail d;
        d.symbol = name;
        d.address = sym.st_value;
        std::optional<x86::Instruction> previous;
        std::size_t pos = 0;
        bool found = false;
        while (pos < len) {
            const auto insn = x86::decode(std::span<const std::uint8_t>(img.data() + off + pos, len - pos));
            if (!insn) break;
            if (is_fault_instruction(*insn)) {
                d.fault_offset = pos;
                d.instruction = std::string(class_name(insn->cls));
                d.trap = insn->cls == x86::InsnClass::Trap;
                if (previous && previous->dest_reg >= 0) {
                    const auto regs = operand_registers(*insn);
                    d.adjacent_setup = std::find(regs.begin(), regs.end(), previous->dest_reg) != regs.end();
                }
                found = true;
                break;
            }
            previous = insn;
            pos += insn->length;
        }
        if (!found) continue;
        ++report.site_count;
        if (d.trap) ++report.trap_opcodes;
        if (d.adjacent_setup) ++report.adjacent_pairs;
        report.details.push_back(std::move(d));
    }
    std::sort(report.details.begin(), report.details.end(),
              [](const FootprintDetail& a, const FootprintDetail& b) { return a.address < b.address; });
    return report;
}

}  // namespace selfdbg
