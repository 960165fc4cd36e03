#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pmm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-split stream derivation: the stream for (root, run, purpose) never
// changes when more runs or purposes are added.
inline std::mt19937_64 make_stream(std::uint64_t root_seed, std::uint64_t run_index,
                                   std::string_view purpose) {
    std::uint64_t s = splitmix64(root_seed);
    s = splitmix64(s ^ splitmix64(run_index));
    s = splitmix64(s ^ fnv1a(purpose));
    return std::mt19937_64(s);
}

}  // namespace pmm
