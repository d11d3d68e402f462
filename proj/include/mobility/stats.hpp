#pragma once

#include <cstdint>
#include <vector>

namespace mobility::stats {

double mean(const std::vector<double>& v);

/// Sample Pearson correlation, two-pass. Throws std::invalid_argument when
/// the series are shorter than 2 or either one has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// 1 - SSres/SStot. Throws std::invalid_argument on zero truth variance or
/// fewer than 2 points.
double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted);

/// Linear-interpolation quantile (the common "type 7" rule) of an unsorted
/// sample; q in [0, 1]. Throws on an empty sample.
double quantile(std::vector<double> sample, double q);

/// Deterministic RNG stream used by every evaluation harness. splitmix64
/// plus an explicit modulo draw keeps shuffles reproducible across standard
/// libraries.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    // splitmix64 step
    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::size_t below(std::size_t bound) { return static_cast<std::size_t>(next() % bound); }
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace mobility::stats
