#include "selfdbg/event_log.hpp"

#include <unistd.h>

#include <cstdarg>
#include <cstdio>
#include <ctime>

namespace selfdbg {

namespace {
int g_fd = -1;
}

void set_event_fd(int fd) noexcept { g_fd = fd; }
int event_fd() noexcept { return g_fd; }

void log_event(const char* event, const char* detail_fmt, ...) noexcept {
    if (g_fd < 0) return;
    char detail[256];
    va_list ap;
    va_start(ap, detail_fmt);
    vsnprintf(detail, sizeof detail, detail_fmt, ap);
    va_end(ap);

    char escaped[512];
    std::size_t n = 0;
    for (const char* p = detail; *p && n + 2 < sizeof escaped; ++p) {
        if (*p == '"' || *p == '\\') escaped[n++] = '\\';
        escaped[n++] = (*p == '\n') ? ' ' : *p;
    }
    escaped[n] = '\0';

    timespec ts{};
    clock_gettime(CLOCK_MONOTONIC, &ts);
    char line[768];
    const int len = snprintf(line, sizeof line, "{\"ts\":%lld,\"pid\":%d,\"event\":\"%s\",\"detail\":\"%s\"}\n",
                             static_cast<long long>(ts.tv_sec) * 1000000000LL + ts.tv_nsec,
                             static_cast<int>(getpid()), event, escaped);
    if (len > 0) {
        const ssize_t rc = write(g_fd, line, static_cast<std::size_t>(len) < sizeof line ? len : sizeof line - 1);
        (void)rc;
    }
}

}  // namespace selfdbg
