#include "basil/random.hpp"

#include <cmath>
#include <numbers>

namespace basil {

Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t a, std::uint64_t b) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    auto p = static_cast<std::uint64_t>(purpose);
    std::seed_seq seq{lo(seed), hi(seed), lo(p), lo(a), hi(a), lo(b), hi(b), 0x9e3779b9u};
    return Rng(seq);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    // 128-bit multiply with rejection of the biased low region.
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform01(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace basil
