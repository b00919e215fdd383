#pragma once

#include <cstdint>

// Benign entry points of the reused-code helpers.
extern "C" {
std::uint64_t selfdbg_reuse_load_0(const void* p);
std::uint64_t selfdbg_reuse_load_1(const void* p);
std::uint64_t selfdbg_reuse_load_2(const void* p);
std::uint64_t selfdbg_reuse_load_3(const void* p);
std::uint64_t selfdbg_reuse_store_0(void* p, std::uint64_t v);
std::uint64_t selfdbg_reuse_store_1(void* p, std::uint64_t v);
std::uint64_t selfdbg_reuse_jmp_0(std::uint64_t arg, std::uint64_t (*fn)(std::uint64_t));
std::uint64_t selfdbg_reuse_jmp_1(std::uint64_t arg, std::uint64_t (*fn)(std::uint64_t));
}
