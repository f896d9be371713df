#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mmlab {

/// Seeded generator with hand-rolled variate transforms so that streams are
/// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform on (0, 1); never returns 0.
    double uniform_open();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal (Marsaglia polar method, one spare cached).
    double normal();
    /// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
    double gamma(double shape);
    /// Beta(a, b). Ratio of gammas when min(a, b) >= 1, Johnk's method otherwise.
    double beta(double a, double b);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable, order-sensitive hash of a sequence of 64-bit words.
std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept;

}  // namespace mmlab
