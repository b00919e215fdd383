#include "selfdbg/fragment_api.hpp"

extern "C" const selfdbg::SiteTableEntry selfdbg_reused_sites_begin[];
extern "C" const selfdbg::SiteTableEntry selfdbg_reused_sites_end[];

namespace {
[[maybe_unused]] const bool registered =
    (selfdbg::register_site_table(selfdbg_reused_sites_begin, selfdbg_reused_sites_end), true);
}
