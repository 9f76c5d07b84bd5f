#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace omd {

// Derives an independent stream seed from (seed, tag) so that different
// consumers of the same run seed never share an RNG sequence.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
    }
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, std::string_view tag) {
    return std::mt19937_64(derive_seed(seed, tag));
}

}  // namespace omd
