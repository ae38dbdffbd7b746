#ifndef FAIRGAP_RNG_HPP
#define FAIRGAP_RNG_HPP

#include <cstdint>
#include <random>

namespace fairgap {

// splitmix64; used to derive independent sub-stream seeds so that, e.g.,
// label sampling and noise sampling do not share a generator.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(mix_seed(seed, stream));
}

} // namespace fairgap

#endif // FAIRGAP_RNG_HPP
