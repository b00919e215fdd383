#include "selfdbg/fragment_api.hpp"

#include <cstdio>

// Carries one site flavor so the footprint scanner can compare builds.
int main() {
    std::printf("%zu load/store sites\n",
                selfdbg::available_sites(selfdbg::FaultKind::SegvLoadStore, selfdbg::SiteFlavor::Inline).size() +
                    selfdbg::available_sites(selfdbg::FaultKind::SegvLoadStore, selfdbg::SiteFlavor::ReusedCode).size());
    return 0;
}
