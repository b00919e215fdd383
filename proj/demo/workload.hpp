#pragma once

#include "selfdbg/fragment_api.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace demo {

inline constexpr std::size_t kStageCount = 10;

struct Stage {
    const char* name;
    selfdbg::FragmentFn fn;
};

const std::vector<Stage>& stages();

// Deterministic pseudo-random input number `index` for `seed`.
std::vector<std::uint8_t> make_input(std::uint64_t seed, std::size_t index);

// Runs every stage over `buf`; stages below `ids.size()` go through
// invoke_migrated, the rest are called directly. Returns one report line.
std::string process_input(std::vector<std::uint8_t>& buf, std::size_t index,
                          const std::vector<selfdbg::FragmentId>& ids);

}  // namespace demo
