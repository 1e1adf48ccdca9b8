#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace reml {

/// One SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t &state) noexcept;

/// Derives an independent child seed. Every stochastic component gets its
/// seed by walking down from the master seed with fixed stream tags.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Distribution helpers are hand-rolled over mt19937_64 so that results are
// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::size_t index(std::size_t n);

    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

    /// k distinct indices from [0, n) in draw order; k > n throws.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

}  // namespace reml
