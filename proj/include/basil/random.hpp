#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>

namespace basil {

using Rng = std::mt19937_64;

// Every random draw in the simulator comes from a stream keyed by
// (run seed, purpose, a, b) so results do not depend on call order.
enum class Stream : std::uint64_t {
    ring_order = 1,
    placement,
    batches,
    attack,
    init,
    partition,
    graph,
    grouping,
    acds_plan,
    acds_shuffle,
    aggregation,
    monte_carlo,
    dataset,
    sensitivity,
};

Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0);

// Unbiased draw from [0, n) (Lemire's method).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);
double uniform01(Rng& rng);
double standard_normal(Rng& rng);

// Fisher-Yates driven by our own uniform index draw; std::shuffle is
// implementation-defined and would make outputs differ across stdlibs.
template <class It>
void seeded_shuffle(It first, It last, Rng& rng) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        std::uint64_t j = uniform_index(rng, i);
        std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
}

}  // namespace basil
