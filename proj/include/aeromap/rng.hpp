#pragma once

#include <cmath>
#include <cstdint>

namespace aeromap {

/// Deterministic PRNG with explicit seeding. Uses splitmix64 so that streams
/// are bit-identical across platforms and standard library versions, which
/// the mission reproducibility contract depends on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller. The spare value is cached, so draws
    /// come in deterministic pairs.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Derives an independent child stream; used to give submodules their own
    /// seeds without coupling their draw counts.
    std::uint64_t fork_seed() { return next_u64(); }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stateless seed derivation for named substreams (salt) with an optional
/// per-item index. Mixing through the generator keeps nearby inputs from
/// producing correlated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt,
                                 std::uint64_t index = 0) {
    Rng rng(base ^ (salt * 0xd1b54a32d192ed03ULL) ^
            (index * 0x9e3779b97f4a7c15ULL));
    rng.next_u64();
    return rng.next_u64();
}

}  // namespace aeromap
