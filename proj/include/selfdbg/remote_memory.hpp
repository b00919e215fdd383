#pragma once

#include "selfdbg/types.hpp"

#include <sys/types.h>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace selfdbg {

// Byte access to the counterpart's address space. Errors raise
// Error{RemoteFault}; the caller decides whether that is fatal.
class RemoteMemory {
public:
    enum class Route : std::uint8_t { Auto, Words, Bulk, ProcMem };

    explicit RemoteMemory(pid_t pid, Route route = Route::Auto) noexcept : pid_(pid), route_(route) {}

    pid_t pid() const noexcept { return pid_; }
    Route route() const noexcept { return route_; }

    // Allocation-free forms used inside the debugger loop.
    void read(Address addr, void* out, std::size_t len) const;
    void write(Address addr, const void* data, std::size_t len) const;

    std::uint64_t read_word(Address addr) const;
    void write_word(Address addr, std::uint64_t value) const;

private:
    bool try_bulk(Address addr, void* buf, std::size_t len, bool writing) const;
    bool try_words(Address addr, void* buf, std::size_t len, bool writing) const;
    bool try_procmem(Address addr, void* buf, std::size_t len, bool writing) const;
    void transfer(Address addr, void* buf, std::size_t len, bool writing) const;

    pid_t pid_;
    Route route_;
};

std::vector<std::uint8_t> remote_read(const RemoteMemory& mem, Address addr, std::size_t len);
void remote_write(const RemoteMemory& mem, Address addr, std::span<const std::uint8_t> data);

}  // namespace selfdbg
