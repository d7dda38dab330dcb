#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

// Boost distributions are used instead of <random> ones because the latter
// are implementation-defined; generated worlds and files must be identical
// across standard libraries.

namespace caki {

using Rng = boost::random::mt19937_64;

/// Folds several integers into one well-mixed 64-bit seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// 64-bit FNV-1a. Stable across platforms and releases.
std::uint64_t stable_hash(std::string_view text);

inline double gaussian(Rng& rng) {
    boost::random::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    boost::random::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

/// Fisher-Yates shuffle driven by `rng`.
template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(rng, i)]);
    }
}

}  // namespace caki
