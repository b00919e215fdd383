#include "selfdbg/fragment_api.hpp"

extern "C" const selfdbg::SiteTableEntry selfdbg_inline_sites_begin[];
extern "C" const selfdbg::SiteTableEntry selfdbg_inline_sites_end[];

namespace {
[[maybe_unused]] const bool registered =
    (selfdbg::register_site_table(selfdbg_inline_sites_begin, selfdbg_inline_sites_end), true);
}
