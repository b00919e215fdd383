#include "selfdbg/remote_memory.hpp"
#include "selfdbg/errors.hpp"

#include <fcntl.h>
#include <sys/ptrace.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <string>

namespace selfdbg {

namespace {

std::string where(pid_t pid, Address addr, std::size_t len) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "pid %d addr 0x%llx len %zu", static_cast<int>(pid),
                  static_cast<unsigned long long>(addr), len);
    return buf;
}

}  // namespace

bool RemoteMemory::try_bulk(Address addr, void* buf, std::size_t len, bool writing) const {
    iovec local{buf, len};
    iovec remote{reinterpret_cast<void*>(addr), len};
    const ssize_t n = writing ? process_vm_writev(pid_, &local, 1, &remote, 1, 0)
                              : process_vm_readv(pid_, &local, 1, &remote, 1, 0);
    if (n == static_cast<ssize_t>(len)) return true;
    if (n >= 0 || errno == EFAULT) errno = EFAULT;
    return false;
}

bool RemoteMemory::try_words(Address addr, void* buf, std::size_t len, bool writing) const {
    auto* bytes = static_cast<std::uint8_t*>(buf);
    const Address first = addr & ~Address{7};
    const Address last = (addr + len + 7) & ~Address{7};
    for (Address w = first; w < last; w += 8) {
        errno = 0;
        long word = ptrace(PTRACE_PEEKDATA, pid_, reinterpret_cast<void*>(w), nullptr);
        if (errno != 0) return false;
        const Address lo = w < addr ? addr : w;
        const Address hi = (w + 8 > addr + len) ? addr + len : w + 8;
        auto* wb = reinterpret_cast<std::uint8_t*>(&word);
        if (writing) {
            std::memcpy(wb + (lo - w), bytes + (lo - addr), hi - lo);
            if (ptrace(PTRACE_POKEDATA, pid_, reinterpret_cast<void*>(w), reinterpret_cast<void*>(word)) != 0)
                return false;
        } else {
            std::memcpy(bytes + (lo - addr), wb + (lo - w), hi - lo);
        }
    }
    return true;
}

bool RemoteMemory::try_procmem(Address addr, void* buf, std::size_t len, bool writing) const {
    char path[64];
    std::snprintf(path, sizeof path, "/proc/%d/mem", static_cast<int>(pid_));
    const int fd = ::open(path, writing ? O_WRONLY | O_CLOEXEC : O_RDONLY | O_CLOEXEC);
    if (fd < 0) return false;
    const ssize_t n = writing ? pwrite(fd, buf, len, static_cast<off_t>(addr))
                              : pread(fd, buf, len, static_cast<off_t>(addr));
    const int saved = errno;
    ::close(fd);
    errno = saved;
    return n == static_cast<ssize_t>(len);
}

void RemoteMemory::transfer(Address addr, void* buf, std::size_t len, bool writing) const {
    if (len == 0) return;
    bool ok = false;
    switch (route_) {
        case Route::Words: ok = try_words(addr, buf, len, writing); break;
        case Route::Bulk: ok = try_bulk(addr, buf, len, writing); break;
        case Route::ProcMem: ok = try_procmem(addr, buf, len, writing); break;
        case Route::Auto:
            ok = try_bulk(addr, buf, len, writing);
            if (!ok && errno != EFAULT) ok = try_words(addr, buf, len, writing);
            if (!ok && errno != EFAULT && errno != EIO) ok = try_procmem(addr, buf, len, writing);
            break;
    }
    if (!ok) {
        throw Error(Errc::RemoteFault, std::string(writing ? "write " : "read ") + where(pid_, addr, len) + ": " +
                                           std::strerror(errno));
    }
}

void RemoteMemory::read(Address addr, void* out, std::size_t len) const { transfer(addr, out, len, false); }

void RemoteMemory::write(Address addr, const void* data, std::size_t len) const {
    transfer(addr, const_cast<void*>(data), len, true);
}

std::uint64_t RemoteMemory::read_word(Address addr) const {
    std::uint64_t v = 0;
    read(addr, &v, sizeof v);
    return v;
}

void RemoteMemory::write_word(Address addr, std::uint64_t value) const { write(addr, &value, sizeof value); }

std::vector<std::uint8_t> remote_read(const RemoteMemory& mem, Address addr, std::size_t len) {
    std::vector<std::uint8_t> out(len);
    mem.read(addr, out.data(), len);
    return out;
}

void remote_write(const RemoteMemory& mem, Address addr, std::span<const std::uint8_t> data) {
    mem.write(addr, data.data(), data.size());
}

}  // namespace selfdbg
