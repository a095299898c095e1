#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace kcheck {

/// SplitMix64 generator. Every seeded operation in the toolkit draws from
/// this stream so that splits, pairings and triplet samples reproduce across
/// implementations:
///
///   state += 0x9E3779B97F4A7C15
///   z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// uniform01() uses the top 53 bits; uniform_index(n) is floor(uniform01() * n);
/// shuffle() is Fisher-Yates running from the back.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::size_t uniform_index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    // Box-Muller, one draw per call (the sine branch is discarded).
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace kcheck
