#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nbrselect {

// SplitMix64 finalizer. Used to derive independent RNG streams from a base
// seed without correlated low bits.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic per-stream seed: same (seed, stream) always yields the same
// engine state, distinct streams decorrelate.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

// k distinct indices from [0, n), ascending. Deterministic for a given
// (seed, stream) on a given build.
std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                      std::uint64_t seed,
                                                      std::uint64_t stream);

// Spearman rank correlation with average ranks on ties. Requires equal,
// nonzero lengths and nonzero rank variance on both sides.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

// Shortest decimal string that round-trips the exact double. Keeps emitted
// CSV/JSON byte-stable across runs.
std::string to_shortest_string(double v);

} // namespace nbrselect
