#pragma once

namespace selfdbg {

// Line-delimited JSON records {"ts","pid","event","detail"} written with a
// single write(2) each. Disabled while the fd is negative.
void set_event_fd(int fd) noexcept;
int event_fd() noexcept;

void log_event(const char* event, const char* detail_fmt, ...) noexcept
    __attribute__((format(printf, 2, 3)));

}  // namespace selfdbg
