#include "workload.hpp"

#include "reused_helpers.hpp"

#include <array>
#include <cinttypes>
#include <cstdio>
#include <random>
#include <unordered_map>

namespace demo {

using selfdbg::FragmentArgs;
using selfdbg::FragmentResult;

namespace {

std::vector<std::uint8_t> load(const FragmentArgs& a) {
    std::vector<std::uint8_t> buf(a[1]);
    selfdbg::fragment_read(a[0], buf.data(), buf.size());
    return buf;
}

void store(const FragmentArgs& a, const std::vector<std::uint8_t>& buf) {
    selfdbg::fragment_write(a[0], buf.data(), buf.size());
}

FragmentResult crc32(const FragmentArgs& a) {
    const auto buf = load(a);
    std::uint32_t crc = 0xffffffffu;
    for (std::uint8_t b : buf) {
        crc ^= b;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
    }
    return {~crc, 0};
}

FragmentResult adler32(const FragmentArgs& a) {
    const auto buf = load(a);
    std::uint32_t s1 = 1, s2 = 0;
    for (std::uint8_t b : buf) {
        s1 = (s1 + b) % 65521u;
        s2 = (s2 + s1) % 65521u;
    }
    return {(s2 << 16) | s1, 0};
}

FragmentResult fnv1a(const FragmentArgs& a) {
    const auto buf = load(a);
    std::uint64_t h = 0xcbf29ce484222325ull ^ a[2];
    for (std::uint8_t b : buf) h = (h ^ b) * 0x100000001b3ull;
    return {h, 0};
}

FragmentResult rle_size(const FragmentArgs& a) {
    const auto buf = load(a);
    std::uint64_t out = 0;
    for (std::size_t i = 0; i < buf.size();) {
        std::size_t j = i;
        while (j < buf.size() && buf[j] == buf[i] && j - i < 255) ++j;
        out += 2;
        i = j;
    }
    return {out, 0};
}

FragmentResult histogram(const FragmentArgs& a) {
    const auto buf = load(a);
    std::array<std::uint32_t, 256> h{};
    for (std::uint8_t b : buf) ++h[b];
    std::uint64_t best = 0;
    for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] > h[best]) best = i;
    return {h[best], best};
}

FragmentResult scramble(const FragmentArgs& a) {
    auto buf = load(a);
    std::uint64_t x = a[2] | 1;
    std::uint64_t changed = 0;
    for (auto& b : buf) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        const std::uint8_t nb = static_cast<std::uint8_t>(b ^ (x & 0x0f));
        changed += nb != b;
        b = nb;
    }
    store(a, buf);
    return {changed, x};
}

FragmentResult delta(const FragmentArgs& a) {
    auto buf = load(a);
    std::uint8_t prev = 0;
    std::uint64_t zeros = 0;
    for (auto& b : buf) {
        const std::uint8_t d = static_cast<std::uint8_t>(b - prev);
        prev = b;
        b = d;
        zeros += d == 0;
    }
    store(a, buf);
    return {zeros, 0};
}

FragmentResult popcount(const FragmentArgs& a) {
    auto buf = load(a);
    buf.resize((buf.size() + 7) & ~std::size_t{7}, 0);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < buf.size(); i += 8)
        bits += static_cast<std::uint64_t>(__builtin_popcountll(selfdbg_reuse_load_0(buf.data() + i)));
    return {bits, 0};
}

FragmentResult repeats(const FragmentArgs& a) {
    const auto buf = load(a);
    std::unordered_map<std::uint32_t, std::uint32_t> seen;
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i + 4 <= buf.size(); ++i) {
        const std::uint32_t key = buf[i] | (buf[i + 1] << 8) | (buf[i + 2] << 16) | (std::uint32_t{buf[i + 3]} << 24);
        hits += seen[key]++ > 0;
    }
    return {hits, seen.size()};
}

std::uint64_t rotl_mix(std::uint64_t x) { return (x << 23) | (x >> 41); }

FragmentResult mix(const FragmentArgs& a) {
    std::uint64_t h = a[2] ^ 0x9e3779b97f4a7c15ull;
    h = selfdbg_reuse_jmp_0(h, rotl_mix);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return {h, a[1]};
}

}  // namespace

const std::vector<Stage>& stages() {
    static const std::vector<Stage> s = {
        {"crc", crc32},      {"adler", adler32}, {"fnv", fnv1a},   {"rle", rle_size}, {"hist", histogram},
        {"scr", scramble},   {"delta", delta},   {"pop", popcount}, {"rep", repeats}, {"mix", mix},
    };
    return s;
}

std::vector<std::uint8_t> make_input(std::uint64_t seed, std::size_t index) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + index);
    const std::size_t len = 64 + rng() % 961;
    std::vector<std::uint8_t> buf(len);
    for (std::size_t i = 0; i < len;) {
        const std::uint8_t v = static_cast<std::uint8_t>(rng());
        std::size_t run = (rng() % 4 == 0) ? 1 + rng() % 12 : 1;
        for (; run > 0 && i < len; --run) buf[i++] = v;
    }
    return buf;
}

std::string process_input(std::vector<std::uint8_t>& buf, std::size_t index,
                          const std::vector<selfdbg::FragmentId>& ids) {
    std::uint64_t acc = index;
    std::array<FragmentResult, kStageCount> res{};
    for (std::size_t s = 0; s < kStageCount; ++s) {
        FragmentArgs args;
        args.words = {reinterpret_cast<std::uint64_t>(buf.data()), buf.size(), acc, 0, 0, 0};
        res[s] = s < ids.size() ? selfdbg::invoke_migrated(ids[s], args) : stages()[s].fn(args);
        acc = acc * 31 + res[s].r0 + (res[s].r1 << 7);
    }
    std::uint64_t sum = 0;
    for (std::uint8_t b : buf) sum += b;
    char line[512];
    std::snprintf(line, sizeof line,
                  "input %zu len=%zu crc=%08" PRIx64 " adler=%08" PRIx64 " fnv=%016" PRIx64 " rle=%" PRIu64
                  " hist=%" PRIu64 "@%" PRIu64 " scr=%" PRIu64 " delta=%" PRIu64 " pop=%" PRIu64 " rep=%" PRIu64
                  "/%" PRIu64 " mix=%016" PRIx64 " sum=%" PRIu64,
                  index, buf.size(), res[0].r0, res[1].r0, res[2].r0, res[3].r0, res[4].r0, res[4].r1, res[5].r0,
                  res[6].r0, res[7].r0, res[8].r0, res[8].r1, res[9].r0, sum);
    return line;
}

}  // namespace demo
