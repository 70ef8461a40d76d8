#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ligdiff {

// Deterministic random stream. Distribution transforms are implemented here
// (not taken from <random>) so that a given (seed, stream) pair replays the
// exact same draws on every run and platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }
    Rng(std::uint64_t seed, std::uint64_t stream) { reseed(mix(seed, stream)); }

    void reseed(std::uint64_t seed) {
        // splitmix64 expansion of the seed into xoshiro256++ state
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            s = z ^ (z >> 31);
        }
        have_spare_ = false;
    }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in (0,1); never returns 0 or 1 so log() is safe
    double uniform() {
        const std::uint64_t u = next_u64() >> 11;  // 53 bits
        return (static_cast<double>(u) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, caching the spare draw
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gumbel() { return -std::log(-std::log(uniform())); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::array<std::uint64_t, 4> state_{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Source of the stochastic draws consumed by the samplers. Tests substitute
// a wrapper that replays rotated coordinate noise to check SE(3) consistency.
class NoiseSource {
public:
    explicit NoiseSource(Rng rng) : rng_(rng) {}
    virtual ~NoiseSource() = default;

    // n rows of i.i.d. standard normal 3-vectors, row-major
    virtual std::vector<double> normal3(std::size_t n) {
        std::vector<double> out(3 * n);
        for (auto& v : out) v = rng_.normal();
        return out;
    }

    virtual double gumbel() { return rng_.gumbel(); }
    virtual double uniform() { return rng_.uniform(); }

protected:
    Rng rng_;
};

}  // namespace ligdiff
