#pragma once

#include <cstdint>

namespace btpriv {

/// SplitMix64 with every constant pinned, so streams match across
/// implementations given the same seed.
class Rng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

    constexpr explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += kGamma;
        return finalize(state_);
    }

    /// Uniform double in [0, 1) built from the top 53 bits.
    constexpr double uniform01() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound). bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

    constexpr std::uint64_t state() const noexcept { return state_; }

    static constexpr std::uint64_t finalize(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// One application of the generator: the first output of an Rng seeded with x.
constexpr std::uint64_t mix(std::uint64_t x) noexcept { return Rng{x}.next(); }

}  // namespace btpriv
